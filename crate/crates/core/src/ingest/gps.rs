use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeoContext, IngestError, Rejection, SweepSample, EARTH_RADIUS_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum User {
    Tx,
    Rx,
}

/// One GPS fix of one car.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub timestamp_ms: i64,
    pub latitude: f64,
    pub longitude: f64,
    /// m/s
    pub velocity: f64,
    pub user: User,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Great-circle distance in metres.
pub fn haversine_distance(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Fixes split by user, each sorted by timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpsFixes {
    pub tx: Vec<GeoFix>,
    pub rx: Vec<GeoFix>,
    pub rejected: Vec<Rejection>,
}

/// Reads a GPS CSV with columns `timestamp_ms,user,latitude,longitude,velocity`.
pub fn parse_gps(path: &Path) -> Result<GpsFixes, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_gps_reader(file, path)
}

pub fn parse_gps_reader<R: Read>(reader: R, path: &Path) -> Result<GpsFixes, IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (c_ts, c_user, c_lat, c_lon, c_vel) = (
        col("timestamp_ms")?,
        col("user")?,
        col("latitude")?,
        col("longitude")?,
        col("velocity")?,
    );

    let mut fixes = GpsFixes::default();
    let mut rows = 0usize;
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        rows += 1;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| row.get(i).unwrap_or("");
        let parsed = (|| -> Result<GeoFix, String> {
            let num = |i: usize| -> Result<f64, String> {
                let v: f64 = get(i).parse().map_err(|_| format!("not a number `{}`", get(i)))?;
                v.is_finite().then_some(v).ok_or_else(|| "non-finite value".to_string())
            };
            let fix = GeoFix {
                timestamp_ms: get(c_ts).parse().map_err(|_| format!("bad timestamp `{}`", get(c_ts)))?,
                latitude: num(c_lat)?,
                longitude: num(c_lon)?,
                velocity: num(c_vel)?,
                user: match get(c_user).to_ascii_lowercase().as_str() {
                    "tx" | "1" => User::Tx,
                    "rx" | "2" => User::Rx,
                    other => return Err(format!("unknown user `{other}`")),
                },
            };
            if !(-90.0..=90.0).contains(&fix.latitude) || !(-180.0..=180.0).contains(&fix.longitude) {
                return Err("coordinates out of range".into());
            }
            if fix.velocity < 0.0 {
                return Err("negative velocity".into());
            }
            Ok(fix)
        })();
        match parsed {
            Ok(fix) => match fix.user {
                User::Tx => fixes.tx.push(fix),
                User::Rx => fixes.rx.push(fix),
            },
            Err(reason) => fixes.rejected.push(Rejection { line, reason }),
        }
    }
    if rows == 0 {
        return Err(IngestError::EmptyInput { path: path.to_path_buf() });
    }
    fixes.tx.sort_by_key(|f| f.timestamp_ms);
    fixes.rx.sort_by_key(|f| f.timestamp_ms);
    Ok(fixes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub samples: Vec<SweepSample>,
    /// Samples preceding every fix of some user.
    pub dropped: usize,
    /// Samples that received a carried-forward fix.
    pub stale: usize,
}

/// Nearest fix within tolerance (earlier fix on ties), else the last fix
/// before `t` flagged stale, else `None`.
fn lookup(fixes: &[GeoFix], t: i64, tolerance_ms: i64) -> Option<(GeoFix, bool)> {
    let idx = fixes.partition_point(|f| f.timestamp_ms < t);
    let before = idx.checked_sub(1).map(|i| fixes[i]);
    let after = fixes.get(idx).copied();
    let nearest = match (before, after) {
        (Some(b), Some(a)) => {
            if t - b.timestamp_ms <= a.timestamp_ms - t {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    if (nearest.timestamp_ms - t).abs() <= tolerance_ms {
        return Some((nearest, false));
    }
    let last = fixes.partition_point(|f| f.timestamp_ms <= t);
    last.checked_sub(1).map(|i| (fixes[i], true))
}

/// Attaches both users' position and speed to every sample by timestamp.
pub fn merge_gps(
    samples: Vec<SweepSample>,
    fixes_tx: &[GeoFix],
    fixes_rx: &[GeoFix],
    tolerance_ms: i64,
) -> Result<MergeOutcome, IngestError> {
    for (name, fixes) in [("tx", fixes_tx), ("rx", fixes_rx)] {
        if fixes.is_empty() {
            return Err(IngestError::Config(format!("no GPS fixes for user {name}")));
        }
        if fixes.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
            return Err(IngestError::Config(format!("GPS fixes for user {name} are not sorted")));
        }
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut dropped = 0;
    let mut stale = 0;
    for mut s in samples {
        let t = s.sweep_start_ms;
        let (Some((tx, stale_tx)), Some((rx, stale_rx))) =
            (lookup(fixes_tx, t, tolerance_ms), lookup(fixes_rx, t, tolerance_ms))
        else {
            dropped += 1;
            continue;
        };
        let is_stale = stale_tx || stale_rx;
        stale += usize::from(is_stale);
        s.geo = Some(GeoContext {
            lat_tx: tx.latitude,
            lon_tx: tx.longitude,
            speed_tx: tx.velocity,
            lat_rx: rx.latitude,
            lon_rx: rx.longitude,
            speed_rx: rx.velocity,
            distance_m: haversine_distance(
                LatLon::new(rx.latitude, rx.longitude),
                LatLon::new(tx.latitude, tx.longitude),
            ),
            stale: is_stale,
        });
        out.push(s);
    }
    Ok(MergeOutcome {
        samples: out,
        dropped,
        stale,
    })
}
