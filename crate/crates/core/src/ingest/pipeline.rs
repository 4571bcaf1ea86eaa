use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate_sweeps, label_areas, merge_gps, parse_gps, parse_trace, reconstruct_gaps, split_rounds, Area,
    AreaPolygons, Dataset, GapConfig, GpsFixes, IngestError, PacketRecord, RoundRange, SweepSample, TraceSchema,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub traces: Vec<PathBuf>,
    #[serde(default)]
    pub schema: TraceSchema,
    pub gps: PathBuf,
    #[serde(default)]
    pub polygons: Option<PathBuf>,
    pub rounds: Vec<RoundRange>,
    #[serde(default)]
    pub gap: GapConfig,
    #[serde(default = "default_tolerance")]
    pub gps_tolerance_ms: i64,
    /// Retain per-packet records of the kept sweeps for statistics.
    #[serde(default)]
    pub keep_packets: bool,
}

fn default_tolerance() -> i64 {
    1000
}

/// A reconstructed packet joined with its sweep's context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPacket {
    pub area: Area,
    pub distance_m: f64,
    pub mcs: u8,
    pub decoded: bool,
    pub interpolated: bool,
    pub rsrp: f64,
}

/// Counts reported by one ingestion run. Both the packet and sweep totals are
/// reported because published sample counts may refer to either.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub traces: usize,
    pub packets_parsed: usize,
    pub rows_rejected: usize,
    pub gps_rows_rejected: usize,
    pub segments: usize,
    pub packets_reconstructed: usize,
    pub packets_interpolated: usize,
    pub sweeps: usize,
    pub sweeps_dropped_gps: usize,
    pub sweeps_stale_gps: usize,
    pub sweeps_dropped_rounds: usize,
    pub samples: usize,
    pub undecodable_samples: usize,
    pub rounds: Vec<u32>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub dataset: Dataset,
    pub summary: IngestSummary,
    pub packets: Vec<LabeledPacket>,
}

struct TraceOutput {
    sweeps: Vec<SweepSample>,
    packets: Vec<(i64, PacketRecord)>,
    parsed: usize,
    rejected: usize,
    segments: usize,
    reconstructed: usize,
    interpolated: usize,
    n_sweeps: usize,
    dropped_gps: usize,
    stale: usize,
}

fn process_trace(
    path: &Path,
    config: &IngestConfig,
    gps: &GpsFixes,
    polygons: Option<&AreaPolygons>,
) -> Result<TraceOutput, IngestError> {
    let parsed = parse_trace(path, &config.schema)?;
    let segments = reconstruct_gaps(&parsed.records, &config.gap)?;
    let cycle = config.gap.mcs_cycle_len;
    let mut sweeps = Vec::new();
    let mut packets = Vec::new();
    for seg in &segments {
        let agg = aggregate_sweeps(seg, cycle);
        if config.keep_packets {
            for s in &agg {
                let start = (s.sweep_start_ms - seg[0].timestamp_ms) as usize;
                packets.extend(seg[start..start + cycle].iter().map(|r| (s.sweep_start_ms, r.clone())));
            }
        }
        sweeps.extend(agg);
    }
    let n_sweeps = sweeps.len();
    let merged = merge_gps(sweeps, &gps.tx, &gps.rx, config.gps_tolerance_ms)?;
    let sweeps = match polygons {
        Some(p) => label_areas(merged.samples, p),
        None => merged.samples,
    };
    Ok(TraceOutput {
        sweeps,
        packets,
        parsed: parsed.records.len(),
        rejected: parsed.rejected.len(),
        segments: segments.len(),
        reconstructed: segments.iter().map(Vec::len).sum(),
        interpolated: segments.iter().flatten().filter(|r| r.interpolated).count(),
        n_sweeps,
        dropped_gps: merged.dropped,
        stale: merged.stale,
    })
}

/// Runs the whole ingestion chain. Trace files are processed in parallel;
/// output order depends only on the inputs.
pub fn run_pipeline(config: &IngestConfig) -> Result<IngestOutput, IngestError> {
    if config.traces.is_empty() {
        return Err(IngestError::Config("no trace files configured".into()));
    }
    if !config.gps.exists() {
        return Err(IngestError::Config(format!("GPS file {} does not exist", config.gps.display())));
    }
    let gps = parse_gps(&config.gps)?;
    let polygons = config.polygons.as_deref().map(AreaPolygons::load).transpose()?;
    let outputs = config
        .traces
        .par_iter()
        .map(|p| process_trace(p, config, &gps, polygons.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut summary = IngestSummary {
        traces: outputs.len(),
        gps_rows_rejected: gps.rejected.len(),
        ..IngestSummary::default()
    };
    let mut sweeps = Vec::new();
    let mut packets = Vec::new();
    for out in outputs {
        summary.packets_parsed += out.parsed;
        summary.rows_rejected += out.rejected;
        summary.segments += out.segments;
        summary.packets_reconstructed += out.reconstructed;
        summary.packets_interpolated += out.interpolated;
        summary.sweeps += out.n_sweeps;
        summary.sweeps_dropped_gps += out.dropped_gps;
        summary.sweeps_stale_gps += out.stale;
        if config.keep_packets {
            let mut by_start = out.sweeps.iter().map(|s| (s.sweep_start_ms, s)).collect::<Vec<_>>();
            by_start.sort_by_key(|(t, _)| *t);
            for (t, r) in out.packets {
                let Ok(pos) = by_start.binary_search_by_key(&t, |(t, _)| *t) else {
                    continue;
                };
                let s = by_start[pos].1;
                if round_of(&config.rounds, t).is_none() {
                    continue;
                }
                packets.push(LabeledPacket {
                    area: s.area,
                    distance_m: s.geo.map_or(f64::NAN, |g| g.distance_m),
                    mcs: r.mcs,
                    decoded: r.decoded,
                    interpolated: r.interpolated,
                    rsrp: r.phy.rsrp,
                });
            }
        }
        sweeps.extend(out.sweeps);
    }
    sweeps.sort_by_key(|s| s.sweep_start_ms);
    let split = split_rounds(sweeps, &config.rounds)?;
    summary.sweeps_dropped_rounds = split.dropped;
    summary.samples = split.dataset.len();
    summary.undecodable_samples = split.dataset.samples.iter().filter(|s| s.target_mcs < 0).count();
    summary.rounds = split.dataset.rounds().into_iter().collect();
    summary.feature_names = split.dataset.feature_names.clone();
    Ok(IngestOutput {
        dataset: split.dataset,
        summary,
        packets,
    })
}

fn round_of(ranges: &[RoundRange], t: i64) -> Option<usize> {
    let idx = ranges.partition_point(|r| r.end_ms <= t);
    ranges.get(idx).filter(|r| r.start_ms <= t).map(|_| idx)
}
