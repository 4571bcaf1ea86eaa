#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidelink_mcs::ingest::{Area, Dataset, Sample};

/// Transport block sizes in bits for MCS 0..=19 at 48 resource blocks.
pub const TBS_BITS: [u32; 20] = [
    1320, 1736, 2152, 2792, 3496, 4264, 4968, 5992, 6712, 7480, 8504, 8504, 9528, 11064, 12216, 13536, 14688, 15840,
    17568, 19080,
];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sidelink-mcs")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn binary")
}

pub fn stdout_value(out: &Output, key: &str) -> Option<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
}

/// Rounds of samples whose target is the floor of a noisy `snr` feature.
pub fn synthetic_dataset(rounds: u32, per_round: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = vec!["snr".to_string(), "rsrp".to_string(), "noise".to_string()];
    let mut samples = Vec::new();
    for r in 0..rounds {
        for k in 0..per_round {
            let snr: f64 = rng.gen_range(-2.0..22.0);
            let target = ((snr + rng.gen_range(-1.0..1.0)).floor() as i8).clamp(-1, 19);
            samples.push(Sample {
                sweep_start_ms: i64::from(r) * 10_000_000 + 20 * k as i64,
                target_mcs: target,
                features: vec![snr, -90.0 + 2.0 * snr + rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0)],
                round_id: r,
                area: Area::Unlabeled,
            });
        }
    }
    Dataset::new(names, samples).unwrap()
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path
}

/// A config for evaluation commands on a prepared dataset CSV.
pub fn eval_config(dir: &Path, dataset: &Dataset) -> PathBuf {
    dataset.save_csv(&dir.join("dataset.csv")).unwrap();
    write_config(
        dir,
        r#"{
  "dataset": "dataset.csv",
  "output_dir": "out",
  "seed": 7,
  "models": {
    "gbt-q": {"kind": "gbt", "loss": {"quantile": 0.3}, "n_rounds": 20, "max_depth": 3, "min_leaf": 5},
    "qrf-q": {"kind": "qrf", "loss": {"quantile": 0.3}, "n_trees": 10, "max_depth": 6, "min_leaf": 5},
    "mlp-q": {"kind": "mlp", "loss": {"quantile": 0.3}, "hidden": [8], "epochs": 5, "batch_size": 32},
    "linear-q": {"kind": "linear", "loss": {"quantile": 0.3}}
  },
  "importance": {"n_repeats": 2},
  "hyperopt": {"n_iter": 3}
}"#,
    )
}

/// Trace with two complete sweeps starting at 1000 ms. The first sweep
/// decodes up to MCS 7, the second up to MCS 11; packets 1005, 1006 and
/// 1027 are missing.
pub fn tiny_trace() -> String {
    let mut s = String::from("timestamp_ms,mcs,decoded,snr,rsrp,rssi,noise_power,rx_power\n");
    for i in 0..40i64 {
        if [5, 6, 27].contains(&i) {
            continue;
        }
        let mcs = i % 20;
        let limit = if i < 20 { 7 } else { 11 };
        let decoded = u8::from(mcs <= limit);
        let snr = 10.0 + i as f64 * 0.1;
        s.push_str(&format!(
            "{},{mcs},{decoded},{snr},{},{},-100,{}\n",
            1000 + i,
            -80.0 + i as f64 * 0.05,
            -60.0,
            -70.0
        ));
    }
    s
}

pub fn tiny_gps() -> String {
    let mut s = String::from("timestamp_ms,user,latitude,longitude,velocity\n");
    for t in [900, 1020, 1100] {
        s.push_str(&format!("{t},tx,52.5200,13.4050,10\n"));
        s.push_str(&format!("{t},rx,52.5201,13.4052,9\n"));
    }
    s
}

/// Writes the tiny fixture and an ingest config; returns the config path.
pub fn ingest_fixture(dir: &Path, with_gps: bool) -> PathBuf {
    fs::write(dir.join("trace.csv"), tiny_trace()).unwrap();
    if with_gps {
        fs::write(dir.join("gps.csv"), tiny_gps()).unwrap();
    }
    write_config(
        dir,
        r#"{
  "ingest": {
    "traces": ["trace.csv"],
    "gps": "gps.csv",
    "rounds": [{"start_ms": 0, "end_ms": 100000}]
  },
  "output_dir": "out"
}"#,
    )
}
