//! Trace ingestion: per-packet CSV parsing, gap reconstruction, sweep
//! aggregation, GPS merge, area labelling and round assignment.

mod areas;
mod dataset;
mod gaps;
mod gps;
mod pipeline;
mod rounds;
mod sweeps;
mod trace;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use areas::{label_areas, point_in_ring, AreaPolygon, AreaPolygons};
pub use dataset::{Dataset, Sample, FEATURE_ORDER};
pub use gaps::{reconstruct_gaps, GapConfig};
pub use gps::{haversine_distance, merge_gps, parse_gps, GeoFix, GpsFixes, LatLon, MergeOutcome, User};
pub use pipeline::{run_pipeline, IngestConfig, IngestOutput, IngestSummary, LabeledPacket};
pub use rounds::{split_rounds, RoundRange, RoundSplit, Rounds};
pub use sweeps::aggregate_sweeps;
pub use trace::{parse_trace, parse_trace_reader, ParsedTrace, Rejection, TraceSchema};

/// Highest MCS index swept by the transmitter.
pub const MAX_MCS: u8 = 19;
/// Packets per MCS sweep (one per millisecond, MCS 0 through 19).
pub const SWEEP_LEN: usize = 20;
/// Earth radius used for great-circle distances, in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: csv error: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing mandatory column `{column}`")]
    Schema { path: PathBuf, column: String },
    #[error("{path}:{line}: timestamp {timestamp_ms} does not strictly increase")]
    Ordering {
        path: PathBuf,
        line: u64,
        timestamp_ms: i64,
    },
    #[error("{path}: no data rows")]
    EmptyInput { path: PathBuf },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

/// Physical-layer measurements reported with each packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyMeasurements {
    /// dB
    pub snr: f64,
    /// dBm
    pub rsrp: f64,
    /// dBm
    pub rssi: f64,
    /// dBm
    pub noise_power: f64,
    /// dBm
    pub rx_power: f64,
    /// dB, only present when the trace carries the column.
    pub rx_gain: Option<f64>,
}

/// One transmitted millisecond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub timestamp_ms: i64,
    pub mcs: u8,
    pub decoded: bool,
    pub phy: PhyMeasurements,
    /// Inserted by gap reconstruction; never decoded.
    pub interpolated: bool,
}

/// Geographic area of the drive route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Area {
    Avenue,
    Park,
    Highway,
    Residential,
    Tunnel,
    #[default]
    Unlabeled,
}

impl Area {
    pub const ALL: [Area; 6] = [
        Area::Avenue,
        Area::Park,
        Area::Highway,
        Area::Residential,
        Area::Tunnel,
        Area::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Area::Avenue => "avenue",
            Area::Park => "park",
            Area::Highway => "highway",
            Area::Residential => "residential",
            Area::Tunnel => "tunnel",
            Area::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Area {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Area::ALL
            .iter()
            .copied()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown area `{s}`"))
    }
}

/// GPS context attached to a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoContext {
    pub lat_tx: f64,
    pub lon_tx: f64,
    pub speed_tx: f64,
    pub lat_rx: f64,
    pub lon_rx: f64,
    pub speed_rx: f64,
    pub distance_m: f64,
    /// At least one user's fix was carried forward beyond the merge tolerance.
    pub stale: bool,
}

/// One aggregated MCS sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub sweep_start_ms: i64,
    /// Highest decoded MCS in the sweep, or -1 when nothing decoded.
    pub target_mcs: i8,
    /// Mean over the sweep's packets, interpolated ones included.
    pub phy: PhyMeasurements,
    pub geo: Option<GeoContext>,
    pub area: Area,
    pub n_interpolated: u8,
}
