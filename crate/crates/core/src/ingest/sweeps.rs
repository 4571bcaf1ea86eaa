use log::warn;

use super::{Area, PacketRecord, PhyMeasurements, SweepSample};

fn mean_phy(sweep: &[PacketRecord]) -> PhyMeasurements {
    let n = sweep.len() as f64;
    let mean = |f: fn(&PhyMeasurements) -> f64| sweep.iter().map(|r| f(&r.phy)).sum::<f64>() / n;
    let rx_gain = sweep
        .iter()
        .map(|r| r.phy.rx_gain)
        .sum::<Option<f64>>()
        .map(|s| s / n);
    PhyMeasurements {
        snr: mean(|p| p.snr),
        rsrp: mean(|p| p.rsrp),
        rssi: mean(|p| p.rssi),
        noise_power: mean(|p| p.noise_power),
        rx_power: mean(|p| p.rx_power),
        rx_gain,
    }
}

fn is_complete(window: &[PacketRecord]) -> bool {
    window
        .iter()
        .enumerate()
        .all(|(k, r)| usize::from(r.mcs) == k && r.timestamp_ms == window[0].timestamp_ms + k as i64)
}

/// Collapses a reconstructed segment into one sample per complete sweep.
/// Sweeps start at MCS 0; partial sweeps are dropped.
pub fn aggregate_sweeps(records: &[PacketRecord], cycle_len: usize) -> Vec<SweepSample> {
    let mut out = Vec::with_capacity(records.len() / cycle_len.max(1));
    let mut i = 0;
    while i + cycle_len <= records.len() {
        if records[i].mcs != 0 {
            i += 1;
            continue;
        }
        let window = &records[i..i + cycle_len];
        if !is_complete(window) {
            i += 1;
            continue;
        }
        let target_mcs = window
            .iter()
            .filter(|r| r.decoded)
            .map(|r| r.mcs as i8)
            .max()
            .unwrap_or(-1);
        out.push(SweepSample {
            sweep_start_ms: window[0].timestamp_ms,
            target_mcs,
            phy: mean_phy(window),
            geo: None,
            area: Area::Unlabeled,
            n_interpolated: window.iter().filter(|r| r.interpolated).count() as u8,
        });
        i += cycle_len;
    }
    if out.is_empty() && !records.is_empty() {
        warn!("no complete sweep among {} records", records.len());
    }
    out
}
