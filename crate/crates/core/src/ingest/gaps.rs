use serde::{Deserialize, Serialize};

use super::{IngestError, PacketRecord, PhyMeasurements, SWEEP_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapConfig {
    /// Length of the MCS cycle the transmitter sweeps through.
    pub mcs_cycle_len: usize,
    /// Gaps with more missing packets than this split the trace.
    pub max_gap_ms: i64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            mcs_cycle_len: SWEEP_LEN,
            max_gap_ms: 1000,
        }
    }
}

fn lerp(a: f64, b: f64, step: i64, span: i64) -> f64 {
    let v = a + (b - a) * step as f64 / span as f64;
    v.clamp(a.min(b), a.max(b))
}

fn interpolate(a: &PhyMeasurements, b: &PhyMeasurements, step: i64, span: i64) -> PhyMeasurements {
    PhyMeasurements {
        snr: lerp(a.snr, b.snr, step, span),
        rsrp: lerp(a.rsrp, b.rsrp, step, span),
        rssi: lerp(a.rssi, b.rssi, step, span),
        noise_power: lerp(a.noise_power, b.noise_power, step, span),
        rx_power: lerp(a.rx_power, b.rx_power, step, span),
        rx_gain: match (a.rx_gain, b.rx_gain) {
            (Some(x), Some(y)) => Some(lerp(x, y, step, span)),
            (x, y) => x.or(y),
        },
    }
}

fn missing(timestamp_ms: i64, mcs: usize, phy: PhyMeasurements) -> PacketRecord {
    PacketRecord {
        timestamp_ms,
        mcs: mcs as u8,
        decoded: false,
        phy,
        interpolated: true,
    }
}

fn fill_segment(real: &[PacketRecord], cycle: usize) -> Vec<PacketRecord> {
    let first = &real[0];
    let last = &real[real.len() - 1];
    let lead = usize::from(first.mcs) % cycle;
    let trail = cycle - 1 - usize::from(last.mcs) % cycle;
    let span = (last.timestamp_ms - first.timestamp_ms) as usize + 1;
    let mut out = Vec::with_capacity(lead + span + trail);

    // Edges extend to the enclosing sweep boundaries with the nearest real value.
    for k in 0..lead {
        out.push(missing(first.timestamp_ms - (lead - k) as i64, k, first.phy));
    }
    for pair in real.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        out.push(a.clone());
        let dt = b.timestamp_ms - a.timestamp_ms;
        for step in 1..dt {
            let mcs = (usize::from(a.mcs) + step as usize) % cycle;
            out.push(missing(a.timestamp_ms + step, mcs, interpolate(&a.phy, &b.phy, step, dt)));
        }
    }
    out.push(last.clone());
    for k in 1..=trail {
        let mcs = usize::from(last.mcs) % cycle + k;
        out.push(missing(last.timestamp_ms + k as i64, mcs, last.phy));
    }
    out
}

/// Restores one record per millisecond. Records missing between two real
/// packets get linearly interpolated PHY values and the MCS implied by the
/// sweep cycle; gaps longer than `max_gap_ms` split the trace into segments.
/// Each segment is padded out to whole-sweep boundaries at both ends by
/// repeating the nearest real measurement.
pub fn reconstruct_gaps(records: &[PacketRecord], config: &GapConfig) -> Result<Vec<Vec<PacketRecord>>, IngestError> {
    if config.mcs_cycle_len == 0 {
        return Err(IngestError::Config("mcs_cycle_len must be positive".into()));
    }
    if config.max_gap_ms < 0 {
        return Err(IngestError::Config("max_gap_ms must be non-negative".into()));
    }
    if let Some(bad) = records.windows(2).find(|w| w[1].timestamp_ms <= w[0].timestamp_ms) {
        return Err(IngestError::Ordering {
            path: "<records>".into(),
            line: 0,
            timestamp_ms: bad[1].timestamp_ms,
        });
    }
    if let Some(r) = records.iter().find(|r| usize::from(r.mcs) >= config.mcs_cycle_len) {
        return Err(IngestError::Config(format!(
            "mcs {} at {} ms outside cycle of length {}",
            r.mcs, r.timestamp_ms, config.mcs_cycle_len
        )));
    }

    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        let split = i == records.len() || records[i].timestamp_ms - records[i - 1].timestamp_ms - 1 > config.max_gap_ms;
        if split {
            if start < i {
                segments.push(fill_segment(&records[start..i], config.mcs_cycle_len));
            }
            start = i;
        }
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: i64, mcs: u8, snr: f64) -> PacketRecord {
        PacketRecord {
            timestamp_ms: t,
            mcs,
            decoded: true,
            phy: PhyMeasurements {
                snr,
                rsrp: -90.0,
                rssi: -60.0,
                noise_power: -100.0,
                rx_power: -70.0,
                rx_gain: None,
            },
            interpolated: false,
        }
    }

    #[test]
    fn contiguous_input_is_unchanged() {
        let input: Vec<_> = (0..40).map(|i| rec(1000 + i, (i % 20) as u8, i as f64)).collect();
        let out = reconstruct_gaps(&input, &GapConfig::default()).unwrap();
        assert_eq!(out, vec![input]);
    }

    #[test]
    fn interior_gap_is_interpolated() {
        let mut input: Vec<_> = (0..20).map(|i| rec(i, i as u8, 0.0)).collect();
        input.retain(|r| r.timestamp_ms != 6 && r.timestamp_ms != 7);
        input[5].phy.snr = 10.0;
        input[6].phy.snr = 13.0;
        let out = reconstruct_gaps(&input, &GapConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        let seg = &out[0];
        assert_eq!(seg.len(), 20);
        assert_eq!(seg[6].phy.snr, 11.0);
        assert_eq!(seg[7].phy.snr, 12.0);
        assert_eq!((seg[6].mcs, seg[7].mcs), (6, 7));
        assert!(seg[6].interpolated && !seg[6].decoded);
    }

    #[test]
    fn leading_gap_is_constant_extrapolated() {
        let input: Vec<_> = (2..20).map(|i| rec(100 + i, i as u8, 9.0)).collect();
        let out = reconstruct_gaps(&input, &GapConfig::default()).unwrap();
        let seg = &out[0];
        assert_eq!(seg.len(), 20);
        assert_eq!(seg[0].timestamp_ms, 100);
        assert_eq!(seg[0].mcs, 0);
        assert_eq!(seg[1].mcs, 1);
        assert_eq!(seg[0].phy.snr, 9.0);
        assert_eq!(seg[1].phy.snr, 9.0);
        assert!(seg[0].interpolated && seg[1].interpolated);
    }

    #[test]
    fn trailing_gap_is_constant_extrapolated() {
        let input = vec![rec(0, 0, 1.0), rec(1, 1, 4.0)];
        let seg = &reconstruct_gaps(&input, &GapConfig::default()).unwrap()[0];
        assert_eq!(seg.len(), 20);
        assert!(seg[2..].iter().all(|r| r.phy.snr == 4.0 && r.interpolated));
        assert_eq!(seg[19].mcs, 19);
    }

    #[test]
    fn long_gap_splits_segments() {
        let mut input: Vec<_> = (0..20).map(|i| rec(i, i as u8, 1.0)).collect();
        input.extend((0..20).map(|i| rec(5000 + i, i as u8, 2.0)));
        let out = reconstruct_gaps(&input, &GapConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 20);
        assert_eq!(out[1][0].timestamp_ms, 5000);
    }

    #[test]
    fn gap_exactly_at_threshold_is_interpolated() {
        let config = GapConfig {
            mcs_cycle_len: 20,
            max_gap_ms: 5,
        };
        let input = vec![rec(0, 0, 0.0), rec(6, 6, 6.0)];
        assert_eq!(reconstruct_gaps(&input, &config).unwrap().len(), 1);
        let input = vec![rec(0, 0, 0.0), rec(7, 7, 7.0)];
        assert_eq!(reconstruct_gaps(&input, &config).unwrap().len(), 2);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let input = vec![rec(5, 0, 0.0), rec(5, 1, 0.0)];
        assert!(matches!(
            reconstruct_gaps(&input, &GapConfig::default()),
            Err(IngestError::Ordering { timestamp_ms: 5, .. })
        ));
    }
}
