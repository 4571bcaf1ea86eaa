//! Descriptive statistics of the collected packets: RSRP densities per area
//! and packet error rates per MCS, area and distance.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Area, LabeledPacket, MAX_MCS};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("configuration error: {0}")]
    Config(String),
}

/// Gaussian kernel density of RSRP for one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub area: Area,
    pub n: usize,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Scott's rule `σ̂ · n^(-1/5)`; 1.0 when the sample has no spread.
pub fn scott_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 1.0;
    }
    let m = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        sd * n.powf(-0.2)
    } else {
        1.0
    }
}

/// Density of `values` evaluated on `grid`.
pub fn kde(values: &[f64], bandwidth: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    grid.par_iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let u = (g - v) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Per-area RSRP densities on one shared grid spanning all areas, padded by
/// four bandwidths. Interpolated packets are ignored; areas with fewer than
/// two measured packets are skipped.
pub fn kde_rsrp(packets: &[LabeledPacket], bandwidth: Option<f64>, grid_points: usize) -> Result<Vec<KdeCurve>, StatsError> {
    if let Some(h) = bandwidth {
        if !(h > 0.0 && h.is_finite()) {
            return Err(StatsError::Config(format!("bandwidth {h} must be positive")));
        }
    }
    if grid_points < 2 {
        return Err(StatsError::Config("KDE grid needs at least 2 points".into()));
    }
    let mut by_area: BTreeMap<Area, Vec<f64>> = BTreeMap::new();
    for p in packets.iter().filter(|p| !p.interpolated && p.rsrp.is_finite()) {
        by_area.entry(p.area).or_default().push(p.rsrp);
    }
    by_area.retain(|area, v| {
        if v.len() < 2 {
            log::warn!("area {area}: {} RSRP values, skipping density", v.len());
        }
        v.len() >= 2
    });
    if by_area.is_empty() {
        return Ok(Vec::new());
    }
    let widths: BTreeMap<Area, f64> = by_area
        .iter()
        .map(|(a, v)| (*a, bandwidth.unwrap_or_else(|| scott_bandwidth(v))))
        .collect();
    let h_max = widths.values().copied().fold(0.0, f64::max);
    let lo = by_area.values().flatten().copied().fold(f64::INFINITY, f64::min) - 4.0 * h_max;
    let hi = by_area.values().flatten().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h_max;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    Ok(by_area
        .into_iter()
        .map(|(area, values)| {
            let h = widths[&area];
            KdeCurve {
                area,
                n: values.len(),
                bandwidth: h,
                density: kde(&values, h, &grid),
                grid: grid.clone(),
            }
        })
        .collect())
}

/// Packet error rate of one (group, MCS) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCell {
    pub group: String,
    pub mcs: u8,
    pub transmissions: u64,
    pub decodes: u64,
    /// `None` for cells without transmissions.
    pub per: Option<f64>,
}

impl PerCell {
    fn new(group: String, mcs: u8, transmissions: u64, decodes: u64) -> Self {
        Self {
            group,
            mcs,
            transmissions,
            decodes,
            per: (transmissions > 0).then(|| 1.0 - decodes as f64 / transmissions as f64),
        }
    }
}

fn decoded(p: &LabeledPacket) -> bool {
    p.decoded && !p.interpolated
}

/// PER per (area, MCS) for every combination that was transmitted. Packets
/// reconstructed from gaps count as failed transmissions.
pub fn per_by_mcs_area(packets: &[LabeledPacket]) -> Vec<PerCell> {
    let mut counts: BTreeMap<(Area, u8), (u64, u64)> = BTreeMap::new();
    for p in packets {
        let c = counts.entry((p.area, p.mcs)).or_default();
        c.0 += 1;
        c.1 += u64::from(decoded(p));
    }
    counts
        .into_iter()
        .map(|((area, mcs), (t, d))| PerCell::new(area.to_string(), mcs, t, d))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistancePer {
    pub cells: Vec<PerCell>,
    /// Packets without a distance or outside the outermost edges.
    pub unbinned: u64,
}

pub const DEFAULT_DISTANCE_BIN_M: f64 = 25.0;

/// Edges `0, width, 2·width, …` up to the first edge beyond the largest
/// observed distance.
pub fn default_distance_edges(packets: &[LabeledPacket], width: f64) -> Vec<f64> {
    let max = packets
        .iter()
        .map(|p| p.distance_m)
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    let n = (max / width).floor() as usize + 1;
    (0..=n).map(|k| k as f64 * width).collect()
}

/// PER per (distance bin, MCS). Bins are half-open `[lo, hi)`; every
/// bin × MCS cell is emitted, empty ones with no PER.
pub fn per_by_distance(packets: &[LabeledPacket], edges: &[f64]) -> Result<DistancePer, StatsError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StatsError::Config("distance bin edges must be strictly increasing".into()));
    }
    let n_bins = edges.len() - 1;
    let n_mcs = usize::from(MAX_MCS) + 1;
    let mut counts = vec![(0u64, 0u64); n_bins * n_mcs];
    let mut unbinned = 0;
    for p in packets {
        let d = p.distance_m;
        if !(d >= edges[0] && d < edges[n_bins]) {
            unbinned += 1;
            continue;
        }
        let bin = edges.partition_point(|&e| e <= d) - 1;
        let c = &mut counts[bin * n_mcs + usize::from(p.mcs)];
        c.0 += 1;
        c.1 += u64::from(decoded(p));
    }
    let cells = counts
        .into_iter()
        .enumerate()
        .map(|(k, (t, d))| {
            let (bin, mcs) = (k / n_mcs, k % n_mcs);
            PerCell::new(format!("{}-{}", edges[bin], edges[bin + 1]), mcs as u8, t, d)
        })
        .collect();
    Ok(DistancePer { cells, unbinned })
}

/// Writes densities as `area,grid,density` rows.
pub fn write_kde_csv<W: Write>(curves: &[KdeCurve], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["area", "grid", "density"])?;
    for c in curves {
        for (g, d) in c.grid.iter().zip(&c.density) {
            w.write_record([c.area.to_string(), g.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes cells as `group,mcs,transmissions,decodes,per` rows; an empty cell
/// has `NA` as its PER.
pub fn write_per_csv<W: Write>(cells: &[PerCell], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "mcs", "transmissions", "decodes", "per"])?;
    for c in cells {
        w.write_record([
            c.group.clone(),
            c.mcs.to_string(),
            c.transmissions.to_string(),
            c.decodes.to_string(),
            c.per.map_or_else(|| "NA".to_string(), |p| p.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
