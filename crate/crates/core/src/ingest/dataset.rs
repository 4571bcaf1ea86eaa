use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Area, IngestError, SweepSample};
use crate::regressors::{FeatureMatrix, Matrix, ModelError};

/// Canonical feature order. Features absent from every sample (no GPS merge,
/// no rx_gain column) are left out of a dataset.
pub const FEATURE_ORDER: [&str; 13] = [
    "snr",
    "rx_power",
    "rssi",
    "rsrp",
    "noise_power",
    "rx_gain",
    "distance_m",
    "speed_tx",
    "speed_rx",
    "lat_tx",
    "lat_rx",
    "lon_tx",
    "lon_rx",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sweep_start_ms: i64,
    pub target_mcs: i8,
    pub features: Vec<f64>,
    pub round_id: u32,
    pub area: Area,
}

/// Supervised samples with a fixed feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
}

fn feature_value(s: &SweepSample, name: &str) -> Option<f64> {
    let g = s.geo;
    match name {
        "snr" => Some(s.phy.snr),
        "rx_power" => Some(s.phy.rx_power),
        "rssi" => Some(s.phy.rssi),
        "rsrp" => Some(s.phy.rsrp),
        "noise_power" => Some(s.phy.noise_power),
        "rx_gain" => s.phy.rx_gain,
        "distance_m" => g.map(|g| g.distance_m),
        "speed_tx" => g.map(|g| g.speed_tx),
        "speed_rx" => g.map(|g| g.speed_rx),
        "lat_tx" => g.map(|g| g.lat_tx),
        "lat_rx" => g.map(|g| g.lat_rx),
        "lon_tx" => g.map(|g| g.lon_tx),
        "lon_rx" => g.map(|g| g.lon_rx),
        _ => None,
    }
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: Vec<Sample>) -> Result<Self, ModelError> {
        let d = feature_names.len();
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.features.len() != d) {
            return Err(ModelError::Contract(format!(
                "sample {i} has {} features, expected {d}",
                s.features.len()
            )));
        }
        Ok(Self { feature_names, samples })
    }

    /// Builds the dataset from round-tagged sweeps, keeping every canonical
    /// feature that all sweeps carry.
    pub fn from_sweeps(sweeps: &[(SweepSample, u32)]) -> Self {
        let feature_names: Vec<String> = FEATURE_ORDER
            .iter()
            .filter(|name| !sweeps.is_empty() && sweeps.iter().all(|(s, _)| feature_value(s, name).is_some()))
            .map(|s| s.to_string())
            .collect();
        let samples = sweeps
            .iter()
            .map(|(s, round)| Sample {
                sweep_start_ms: s.sweep_start_ms,
                target_mcs: s.target_mcs,
                features: feature_names
                    .iter()
                    .map(|n| feature_value(s, n).expect("feature present by construction"))
                    .collect(),
                round_id: *round,
                area: s.area,
            })
            .collect();
        Self { feature_names, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn rounds(&self) -> BTreeSet<u32> {
        self.samples.iter().map(|s| s.round_id).collect()
    }

    pub fn targets(&self) -> Vec<i8> {
        self.samples.iter().map(|s| s.target_mcs).collect()
    }

    pub fn targets_of(&self, indices: &[usize]) -> Vec<i8> {
        indices.iter().map(|&i| self.samples[i].target_mcs).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Keeps only the named features, in the given order.
    pub fn select_features<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset, ModelError> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n.as_ref())
                    .ok_or_else(|| ModelError::Config(format!("unknown feature `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            feature_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    features: idx.iter().map(|&j| s.features[j]).collect(),
                    ..s.clone()
                })
                .collect(),
        })
    }

    pub fn matrix(&self, indices: &[usize]) -> Matrix {
        let d = self.n_features();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&self.samples[i].features);
        }
        Matrix::new(indices.len(), d, data).expect("consistent arity")
    }

    pub fn feature_matrix(&self, indices: &[usize]) -> Result<FeatureMatrix, ModelError> {
        let y = indices.iter().map(|&i| f64::from(self.samples[i].target_mcs)).collect();
        FeatureMatrix::new(self.matrix(indices), y)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(["target_mcs", "round_id", "area", "sweep_start_ms"]);
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for s in &self.samples {
            row.clear();
            row.extend(s.features.iter().map(|v| v.to_string()));
            row.push(s.target_mcs.to_string());
            row.push(s.round_id.to_string());
            row.push(s.area.to_string());
            row.push(s.sweep_start_ms.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), IngestError> {
        let file = std::fs::File::create(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|source| IngestError::Csv {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Dataset, IngestError> {
        let parse_err = |line: u64, message: String| IngestError::Parse {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|source| IngestError::Csv {
                path: path.to_path_buf(),
                source,
            })?
            .clone();
        let tail = ["target_mcs", "round_id", "area", "sweep_start_ms"];
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| IngestError::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
        };
        let (c_target, c_round, c_area, c_start) = (col(tail[0])?, col(tail[1])?, col(tail[2])?, col(tail[3])?);
        let feature_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !tail.contains(h))
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut samples = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|source| IngestError::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let get = |i: usize| row.get(i).unwrap_or("");
            let features = feature_cols
                .iter()
                .map(|(i, name)| {
                    get(*i)
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(line, format!("{name}: bad value `{}`", get(*i))))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let target_mcs: i8 = get(c_target)
                .parse()
                .ok()
                .filter(|t| (-1..=19).contains(t))
                .ok_or_else(|| parse_err(line, format!("bad target_mcs `{}`", get(c_target))))?;
            samples.push(Sample {
                sweep_start_ms: get(c_start)
                    .parse()
                    .map_err(|_| parse_err(line, "bad sweep_start_ms".into()))?,
                target_mcs,
                features,
                round_id: get(c_round).parse().map_err(|_| parse_err(line, "bad round_id".into()))?,
                area: get(c_area).parse().map_err(|e: String| parse_err(line, e))?,
            });
        }
        Ok(Dataset {
            feature_names: feature_cols.into_iter().map(|(_, n)| n).collect(),
            samples,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Dataset, IngestError> {
        let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}
