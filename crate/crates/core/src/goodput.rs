//! Transport block sizes and goodput scoring.
//!
//! A prediction is rounded half-up to an MCS index and clamped to `[0, 19]`.
//! If that index exceeds the sweep's highest decodable MCS the transport block
//! is lost and the sample scores zero; otherwise it delivers `TBS × 1000`
//! bits per second (one transport block per millisecond on 48 PRB).

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of MCS levels swept.
pub const N_MCS: usize = 20;
/// Transport blocks per second.
pub const TB_PER_SECOND: f64 = 1000.0;

const BUILTIN_TABLE: &str = include_str!("../data/tbs_48prb.csv");
const BUILTIN_TABLE_SHA256: &str = "cb7a4b7b1fd4afbb4b09ce5075314679b7c4fd4e27b9db34b96d3b40a4c2243d";
const STANDARD_EXCERPT: &str = include_str!("../data/ts36213_excerpt.csv");
const STANDARD_EXCERPT_SHA256: &str = "3264a389da267aa54a90eb065156cc0056a873136b63a706e7c6ac0b108c6d5f";

#[derive(Debug, Error)]
pub enum GoodputError {
    #[error("mcs {0} outside [0, 19]")]
    Domain(i64),
    #[error("{0}")]
    Contract(String),
    #[error("tbs table: {0}")]
    Table(String),
}

/// MCS index → transport block size in bits, for 48 resource blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TbsTable {
    entries: [u32; N_MCS],
    pub source_tag: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl TbsTable {
    /// Validates the table invariants: positive entries, non-decreasing within
    /// the QPSK (0 to 10) and 16-QAM (11 to 19) ranges, and MCS 10 and 11 equal.
    pub fn new(entries: [u32; N_MCS], source_tag: impl Into<String>) -> Result<Self, GoodputError> {
        if entries.contains(&0) {
            return Err(GoodputError::Table("entries must be positive".into()));
        }
        for regime in [&entries[..=10], &entries[11..]] {
            if regime.windows(2).any(|w| w[1] < w[0]) {
                return Err(GoodputError::Table("entries decrease within a modulation regime".into()));
            }
        }
        if entries[10] != entries[11] {
            return Err(GoodputError::Table("MCS 10 and 11 must carry the same TBS".into()));
        }
        Ok(Self {
            entries,
            source_tag: source_tag.into(),
        })
    }

    /// The checked-in table, verified against its recorded checksum.
    pub fn builtin() -> Self {
        assert_eq!(
            sha256_hex(BUILTIN_TABLE.as_bytes()),
            BUILTIN_TABLE_SHA256,
            "built-in TBS table does not match its checksum"
        );
        Self::from_csv_reader(BUILTIN_TABLE.as_bytes(), "builtin:tbs_48prb.csv v1").expect("built-in TBS table is valid")
    }

    /// Rebuilds the table by chaining I_MCS → I_TBS → TBS from the checked-in
    /// excerpt of the two standard tables.
    pub fn from_standard_chain() -> Result<Self, GoodputError> {
        if sha256_hex(STANDARD_EXCERPT.as_bytes()) != STANDARD_EXCERPT_SHA256 {
            return Err(GoodputError::Table("standard excerpt does not match its checksum".into()));
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(STANDARD_EXCERPT.as_bytes());
        let mut itbs = Vec::new();
        let mut tbs = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| GoodputError::Table(e.to_string()))?;
            let num = |i: usize| -> Result<usize, GoodputError> {
                row.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| GoodputError::Table(format!("bad excerpt row {row:?}")))
            };
            let (index, value) = (num(1)?, num(2)?);
            let target = match row.get(0) {
                Some("imcs_to_itbs") => &mut itbs,
                Some("tbs_prb48") => &mut tbs,
                other => return Err(GoodputError::Table(format!("unknown table {other:?}"))),
            };
            if index != target.len() {
                return Err(GoodputError::Table(format!("excerpt index {index} out of sequence")));
            }
            target.push(value);
        }
        let mut entries = [0u32; N_MCS];
        for (m, e) in entries.iter_mut().enumerate() {
            let i = *itbs.get(m).ok_or_else(|| GoodputError::Table(format!("no I_TBS for MCS {m}")))?;
            *e = *tbs.get(i).ok_or_else(|| GoodputError::Table(format!("no TBS for I_TBS {i}")))? as u32;
        }
        Self::new(entries, "TS 36.213 Table 8.6.1-1 x Table 7.1.7.2.1-1, N_PRB=48")
    }

    /// Reads a `mcs,tbs_bits` CSV with exactly 20 rows; `#` lines are comments.
    pub fn from_csv_reader<R: Read>(reader: R, source_tag: &str) -> Result<Self, GoodputError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| GoodputError::Table(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["mcs", "tbs_bits"] {
            return Err(GoodputError::Table(format!("expected header `mcs,tbs_bits`, got {headers:?}")));
        }
        let mut entries = [0u32; N_MCS];
        let mut seen = [false; N_MCS];
        let mut rows = 0;
        for row in rdr.records() {
            let row = row.map_err(|e| GoodputError::Table(e.to_string()))?;
            let mcs: usize = row
                .get(0)
                .and_then(|s| s.parse().ok())
                .filter(|&m| m < N_MCS)
                .ok_or_else(|| GoodputError::Table(format!("bad mcs in {row:?}")))?;
            let bits: u32 = row
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| GoodputError::Table(format!("bad tbs_bits in {row:?}")))?;
            if seen[mcs] {
                return Err(GoodputError::Table(format!("duplicate mcs {mcs}")));
            }
            seen[mcs] = true;
            entries[mcs] = bits;
            rows += 1;
        }
        if rows != N_MCS {
            return Err(GoodputError::Table(format!("expected {N_MCS} rows, found {rows}")));
        }
        Self::new(entries, source_tag)
    }

    pub fn load(path: &Path) -> Result<Self, GoodputError> {
        let file = std::fs::File::open(path).map_err(|e| GoodputError::Table(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn entries(&self) -> &[u32; N_MCS] {
        &self.entries
    }

    /// Transport block size in bits.
    pub fn tbs(&self, mcs: i64) -> Result<u32, GoodputError> {
        usize::try_from(mcs)
            .ok()
            .and_then(|m| self.entries.get(m).copied())
            .ok_or(GoodputError::Domain(mcs))
    }

    /// Goodput of an always-decodable block at `mcs`, in bits per second.
    pub fn rate_bps(&self, mcs: u8) -> f64 {
        f64::from(self.entries[usize::from(mcs)]) * TB_PER_SECOND
    }
}

impl Default for TbsTable {
    fn default() -> Self {
        Self::builtin()
    }
}

pub fn tbs_lookup(table: &TbsTable, mcs: i64) -> Result<u32, GoodputError> {
    table.tbs(mcs)
}

/// Round half-up and clamp to `[0, 19]`; `None` for non-finite input.
pub fn round_prediction(predicted: f64) -> Option<u8> {
    predicted
        .is_finite()
        .then(|| (predicted + 0.5).floor().clamp(0.0, (N_MCS - 1) as f64) as u8)
}

/// Goodput of one sample in bits per second. Non-finite predictions score 0.
pub fn sample_goodput(predicted: f64, target_mcs: i8, table: &TbsTable) -> f64 {
    match round_prediction(predicted) {
        Some(m) if i16::from(m) <= i16::from(target_mcs) => table.rate_bps(m),
        _ => 0.0,
    }
}

/// Per-sample goodput of a prediction vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub mean_bps: f64,
    pub per_sample_bps: Vec<f64>,
    pub non_finite: usize,
}

pub fn score(predictions: &[f64], targets: &[i8], table: &TbsTable) -> Result<Scored, GoodputError> {
    if predictions.len() != targets.len() {
        return Err(GoodputError::Contract(format!(
            "{} predictions for {} samples",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(GoodputError::Contract("no samples to score".into()));
    }
    let per_sample_bps: Vec<f64> = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| sample_goodput(p, t, table))
        .collect();
    Ok(Scored {
        mean_bps: per_sample_bps.iter().sum::<f64>() / per_sample_bps.len() as f64,
        non_finite: predictions.iter().filter(|p| !p.is_finite()).count(),
        per_sample_bps,
    })
}

/// Mean goodput in bits per second.
pub fn mean_goodput(predictions: &[f64], targets: &[i8], table: &TbsTable) -> Result<f64, GoodputError> {
    score(predictions, targets, table).map(|s| s.mean_bps)
}

/// Goodput of always choosing the highest decodable MCS.
pub fn oracle_goodput(targets: &[i8], table: &TbsTable) -> Result<f64, GoodputError> {
    if targets.is_empty() {
        return Err(GoodputError::Contract("empty dataset".into()));
    }
    let sum: f64 = targets
        .iter()
        .filter(|&&t| t >= 0)
        .map(|&t| table.rate_bps(t as u8))
        .sum();
    Ok(sum / targets.len() as f64)
}

/// Goodput of transmitting every sample at a fixed MCS.
pub fn static_goodput(targets: &[i8], mcs: u8, table: &TbsTable) -> Result<f64, GoodputError> {
    if targets.is_empty() {
        return Err(GoodputError::Contract("empty dataset".into()));
    }
    if usize::from(mcs) >= N_MCS {
        return Err(GoodputError::Domain(i64::from(mcs)));
    }
    let ok = targets.iter().filter(|&&t| i16::from(t) >= i16::from(mcs)).count();
    Ok(table.rate_bps(mcs) * ok as f64 / targets.len() as f64)
}

/// Best fixed MCS over all 20 levels; ties go to the lowest MCS.
pub fn best_static_mcs(targets: &[i8], table: &TbsTable) -> Result<(u8, f64), GoodputError> {
    if targets.is_empty() {
        return Err(GoodputError::Contract("empty dataset".into()));
    }
    // at_least[m] = #samples with target >= m
    let mut at_least = [0usize; N_MCS + 1];
    for &t in targets.iter().filter(|&&t| t >= 0) {
        at_least[t as usize] += 1;
    }
    for m in (0..N_MCS).rev() {
        at_least[m] += at_least[m + 1];
    }
    let n = targets.len() as f64;
    let mut best = (0u8, f64::NEG_INFINITY);
    for m in 0..N_MCS as u8 {
        let bps = table.rate_bps(m) * at_least[usize::from(m)] as f64 / n;
        if bps > best.1 {
            best = (m, bps);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodputReport {
    pub mean_goodput_bps: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_sample_bps: Vec<f64>,
    pub oracle_bps: f64,
    pub best_static_mcs: u8,
    pub best_static_bps: f64,
    /// Oracle and best-static goodput over samples with at least one decode.
    pub oracle_decodable_bps: f64,
    pub best_static_decodable_mcs: u8,
    pub best_static_decodable_bps: f64,
    pub non_finite_predictions: usize,
}

impl GoodputReport {
    pub fn new(predictions: &[f64], targets: &[i8], table: &TbsTable) -> Result<Self, GoodputError> {
        let scored = score(predictions, targets, table)?;
        let (static_mcs, static_bps) = best_static_mcs(targets, table)?;
        let decodable: Vec<i8> = targets.iter().copied().filter(|&t| t >= 0).collect();
        let (oracle_decodable_bps, (best_static_decodable_mcs, best_static_decodable_bps)) = if decodable.is_empty() {
            (0.0, (0, 0.0))
        } else {
            (oracle_goodput(&decodable, table)?, best_static_mcs(&decodable, table)?)
        };
        Ok(Self {
            mean_goodput_bps: scored.mean_bps,
            per_sample_bps: scored.per_sample_bps,
            oracle_bps: oracle_goodput(targets, table)?,
            best_static_mcs: static_mcs,
            best_static_bps: static_bps,
            oracle_decodable_bps,
            best_static_decodable_mcs,
            best_static_decodable_bps,
            non_finite_predictions: scored.non_finite,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> TbsTable {
        TbsTable::builtin()
    }

    #[test]
    fn builtin_matches_standard_chain() {
        assert_eq!(table().entries(), TbsTable::from_standard_chain().unwrap().entries());
    }

    #[test]
    fn hand_checked_entries() {
        // I_MCS 0 -> I_TBS 0 -> 1320 bits; I_MCS 19 -> I_TBS 18 -> 19080 bits (N_PRB = 48).
        assert_eq!(tbs_lookup(&table(), 0).unwrap(), 1320);
        assert_eq!(tbs_lookup(&table(), 19).unwrap(), 19080);
        assert_eq!(tbs_lookup(&table(), 10).unwrap(), tbs_lookup(&table(), 11).unwrap());
        assert!(matches!(tbs_lookup(&table(), 20), Err(GoodputError::Domain(20))));
        assert!(matches!(tbs_lookup(&table(), -1), Err(GoodputError::Domain(-1))));
    }

    #[test]
    fn table_validation() {
        let mut e = *table().entries();
        e[11] += 8;
        assert!(TbsTable::new(e, "x").is_err());
        let mut e = *table().entries();
        e[5] = 1;
        assert!(TbsTable::new(e, "x").is_err());
        let short = "mcs,tbs_bits\n0,10\n";
        assert!(TbsTable::from_csv_reader(short.as_bytes(), "x").is_err());
    }

    #[test]
    fn sample_goodput_rules() {
        let t = table();
        assert_eq!(sample_goodput(11.2, 10, &t), 0.0);
        assert_eq!(sample_goodput(10.0, 10, &t), 8504.0 * 1000.0);
        assert_eq!(sample_goodput(-3.0, -1, &t), 0.0);
        assert_eq!(sample_goodput(9.5, 10, &t), t.rate_bps(10));
        assert_eq!(sample_goodput(9.499, 9, &t), t.rate_bps(9));
        assert_eq!(sample_goodput(42.0, 19, &t), t.rate_bps(19));
        assert_eq!(sample_goodput(f64::NAN, 19, &t), 0.0);
        assert_eq!(score(&[f64::INFINITY, 1.0], &[3, 3], &t).unwrap().non_finite, 1);
    }

    #[test]
    fn mean_goodput_cases() {
        let t = table();
        assert_eq!(mean_goodput(&[19.0; 3], &[19; 3], &t).unwrap(), t.rate_bps(19));
        assert_eq!(mean_goodput(&[5.0, 8.0], &[4, 7], &t).unwrap(), 0.0);
        // brute-force sum: 1320e3 + 0 + 8504e3 + 0
        let m = mean_goodput(&[0.2, 3.6, 11.0, 2.0], &[5, 3, 12, -1], &t).unwrap();
        assert_eq!(m, (1_320_000.0 + 8_504_000.0) / 4.0);
        assert!(mean_goodput(&[1.0], &[1, 2], &t).is_err());
    }

    #[test]
    fn oracle_and_static_cases() {
        let t = table();
        assert_eq!(oracle_goodput(&[-1; 4], &t).unwrap(), 0.0);
        assert_eq!(oracle_goodput(&[19; 4], &t).unwrap(), t.rate_bps(19));
        assert!(oracle_goodput(&[], &t).is_err());
        assert_eq!(best_static_mcs(&[19; 5], &t).unwrap(), (19, t.rate_bps(19)));
        // half at 0, half at 19: table[19] > 2 * table[0]
        let (m, bps) = best_static_mcs(&[0, 0, 19, 19], &t).unwrap();
        assert_eq!(m, 19);
        assert_eq!(bps, t.rate_bps(19) / 2.0);
        assert_eq!(best_static_mcs(&[-1, -1], &t).unwrap(), (0, 0.0));
    }

    fn brute_best(targets: &[i8], t: &TbsTable) -> (u8, f64) {
        let mut best = (0, -1.0);
        for m in 0..20u8 {
            let g = targets
                .iter()
                .map(|&y| if i16::from(m) <= i16::from(y) { t.rate_bps(m) } else { 0.0 })
                .sum::<f64>()
                / targets.len() as f64;
            if g > best.1 {
                best = (m, g);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn oracle_dominates(preds in prop::collection::vec(-5.0f64..25.0, 1..50), seed in any::<u64>()) {
            let t = table();
            let targets: Vec<i8> = preds.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) % 21) as i8 - 1).collect();
            prop_assert!(mean_goodput(&preds, &targets, &t).unwrap() <= oracle_goodput(&targets, &t).unwrap());
        }

        #[test]
        fn best_static_is_brute_force_max(targets in prop::collection::vec(-1i8..=19, 1..60)) {
            let t = table();
            let (m, bps) = best_static_mcs(&targets, &t).unwrap();
            let (bm, bb) = brute_best(&targets, &t);
            prop_assert_eq!(m, bm);
            prop_assert!((bps - bb).abs() <= 1e-9 * bb.max(1.0));
            prop_assert!(bps <= oracle_goodput(&targets, &t).unwrap());
        }

        #[test]
        fn fixing_an_overshoot_never_hurts(targets in prop::collection::vec(0i8..=18, 1..30), k in any::<prop::sample::Index>()) {
            let t = table();
            let i = k.index(targets.len());
            let mut preds: Vec<f64> = targets.iter().map(|&y| f64::from(y) - 1.0).collect();
            preds[i] = f64::from(targets[i]) + 1.0;
            let before = mean_goodput(&preds, &targets, &t).unwrap();
            preds[i] = f64::from(targets[i]);
            prop_assert!(mean_goodput(&preds, &targets, &t).unwrap() >= before);
        }
    }
}
