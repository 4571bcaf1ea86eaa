use serde::{Deserialize, Serialize};

use super::{Dataset, IngestError, SweepSample};

/// Half-open time range `[start_ms, end_ms)` covering one drive round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRange {
    pub start_ms: i64,
    pub end_ms: i64,
}

/// Round-boundary file: `{"rounds": [{"start_ms": .., "end_ms": ..}, ...]}`.
/// Round ids are positions in this list.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rounds {
    pub rounds: Vec<RoundRange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSplit {
    pub dataset: Dataset,
    /// Samples outside every range.
    pub dropped: usize,
}

fn validate(ranges: &[RoundRange]) -> Result<(), IngestError> {
    if ranges.is_empty() {
        return Err(IngestError::Config("no round ranges given".into()));
    }
    for (i, r) in ranges.iter().enumerate() {
        if r.start_ms >= r.end_ms {
            return Err(IngestError::Config(format!("round {i}: empty range [{}, {})", r.start_ms, r.end_ms)));
        }
    }
    for (i, w) in ranges.windows(2).enumerate() {
        if w[1].start_ms < w[0].end_ms {
            return Err(IngestError::Config(format!(
                "rounds {i} and {} overlap or are out of order",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Assigns each sample the id of the range containing its sweep start.
pub fn split_rounds(samples: Vec<SweepSample>, ranges: &[RoundRange]) -> Result<RoundSplit, IngestError> {
    validate(ranges)?;
    let mut kept = Vec::with_capacity(samples.len());
    let mut dropped = 0;
    for s in samples {
        let idx = ranges.partition_point(|r| r.end_ms <= s.sweep_start_ms);
        match ranges.get(idx) {
            Some(r) if r.start_ms <= s.sweep_start_ms => kept.push((s, idx as u32)),
            _ => dropped += 1,
        }
    }
    Ok(RoundSplit {
        dataset: Dataset::from_sweeps(&kept),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Area, PhyMeasurements};

    fn sample(t: i64) -> SweepSample {
        SweepSample {
            sweep_start_ms: t,
            target_mcs: 1,
            phy: PhyMeasurements {
                snr: 1.0,
                rsrp: 2.0,
                rssi: 3.0,
                noise_power: 4.0,
                rx_power: 5.0,
                rx_gain: None,
            },
            geo: None,
            area: Area::Park,
            n_interpolated: 0,
        }
    }

    fn r(start_ms: i64, end_ms: i64) -> RoundRange {
        RoundRange { start_ms, end_ms }
    }

    #[test]
    fn two_rounds_and_a_gap() {
        let split = split_rounds(vec![sample(0), sample(50), sample(150), sample(250)], &[r(0, 100), r(200, 300)]).unwrap();
        assert_eq!(split.dropped, 1);
        let ids: Vec<_> = split.dataset.samples.iter().map(|s| s.round_id).collect();
        assert_eq!(ids, vec![0, 0, 1]);
        assert_eq!(split.dataset.rounds().into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn end_is_exclusive() {
        let split = split_rounds(vec![sample(100)], &[r(0, 100), r(100, 200)]).unwrap();
        assert_eq!(split.dataset.samples[0].round_id, 1);
    }

    #[test]
    fn overlapping_ranges_fail_before_assignment() {
        assert!(matches!(
            split_rounds(vec![sample(0)], &[r(0, 100), r(50, 150)]),
            Err(IngestError::Config(_))
        ));
        assert!(split_rounds(vec![sample(0)], &[r(200, 300), r(0, 100)]).is_err());
    }
}
