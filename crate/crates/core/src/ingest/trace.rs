use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IngestError, PacketRecord, PhyMeasurements, MAX_MCS};

/// Column names of the canonical per-packet trace CSV.
///
/// `decoded` and `rx_gain` are optional: a receiver-side capture only logs
/// decoded packets, so a missing `decoded` column means every row decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSchema {
    pub timestamp_ms: String,
    pub mcs: String,
    pub decoded: String,
    pub snr: String,
    pub rsrp: String,
    pub rssi: String,
    pub noise_power: String,
    pub rx_power: String,
    pub rx_gain: String,
}

impl Default for TraceSchema {
    fn default() -> Self {
        Self {
            timestamp_ms: "timestamp_ms".into(),
            mcs: "mcs".into(),
            decoded: "decoded".into(),
            snr: "snr".into(),
            rsrp: "rsrp".into(),
            rssi: "rssi".into(),
            noise_power: "noise_power".into(),
            rx_power: "rx_power".into(),
            rx_gain: "rx_gain".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub records: Vec<PacketRecord>,
    pub rejected: Vec<Rejection>,
}

struct Columns {
    timestamp_ms: usize,
    mcs: usize,
    decoded: Option<usize>,
    snr: usize,
    rsrp: usize,
    rssi: usize,
    noise_power: usize,
    rx_power: usize,
    rx_gain: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &TraceSchema, path: &Path) -> Result<Self, IngestError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| IngestError::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
        };
        Ok(Self {
            timestamp_ms: need(&schema.timestamp_ms)?,
            mcs: need(&schema.mcs)?,
            decoded: find(&schema.decoded),
            snr: need(&schema.snr)?,
            rsrp: need(&schema.rsrp)?,
            rssi: need(&schema.rssi)?,
            noise_power: need(&schema.noise_power)?,
            rx_power: need(&schema.rx_power)?,
            rx_gain: find(&schema.rx_gain),
        })
    }
}

fn field(row: &csv::StringRecord, idx: usize) -> Result<&str, String> {
    row.get(idx).map(str::trim).ok_or_else(|| format!("missing field {idx}"))
}

fn real(row: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, String> {
    let s = field(row, idx)?;
    let v: f64 = s.parse().map_err(|_| format!("{name}: not a number `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name}: non-finite value"))
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Some(true),
        "0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> Result<PacketRecord, String> {
    let ts = field(row, cols.timestamp_ms)?;
    let timestamp_ms: i64 = ts.parse().map_err(|_| format!("timestamp_ms: not an integer `{ts}`"))?;
    let m = field(row, cols.mcs)?;
    let mcs: i64 = m.parse().map_err(|_| format!("mcs: not an integer `{m}`"))?;
    if !(0..=i64::from(MAX_MCS)).contains(&mcs) {
        return Err(format!("mcs {mcs} outside [0, {MAX_MCS}]"));
    }
    let decoded = match cols.decoded {
        Some(idx) => {
            let s = field(row, idx)?;
            parse_bool(s).ok_or_else(|| format!("decoded: not a boolean `{s}`"))?
        }
        None => true,
    };
    let rx_gain = match cols.rx_gain {
        Some(idx) if !field(row, idx)?.is_empty() => Some(real(row, idx, "rx_gain")?),
        _ => None,
    };
    Ok(PacketRecord {
        timestamp_ms,
        mcs: mcs as u8,
        decoded,
        phy: PhyMeasurements {
            snr: real(row, cols.snr, "snr")?,
            rsrp: real(row, cols.rsrp, "rsrp")?,
            rssi: real(row, cols.rssi, "rssi")?,
            noise_power: real(row, cols.noise_power, "noise_power")?,
            rx_power: real(row, cols.rx_power, "rx_power")?,
            rx_gain,
        },
        interpolated: false,
    })
}

/// Parses a per-packet trace CSV. Malformed rows are rejected and reported;
/// accepted rows must have strictly increasing timestamps.
pub fn parse_trace(path: &Path, schema: &TraceSchema) -> Result<ParsedTrace, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace_reader(file, path, schema)
}

pub fn parse_trace_reader<R: Read>(reader: R, path: &Path, schema: &TraceSchema) -> Result<ParsedTrace, IngestError> {
    let path_buf = PathBuf::from(path);
    let csv_err = |source| IngestError::Csv {
        path: path_buf.clone(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(IngestError::EmptyInput { path: path_buf });
    }
    let cols = Columns::resolve(&headers, schema, path)?;

    let mut records: Vec<PacketRecord> = Vec::new();
    let mut rejected = Vec::new();
    let mut rows_seen = 0usize;
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        rows_seen += 1;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, &cols) {
            Ok(rec) => {
                if let Some(prev) = records.last() {
                    if rec.timestamp_ms <= prev.timestamp_ms {
                        return Err(IngestError::Ordering {
                            path: path_buf,
                            line,
                            timestamp_ms: rec.timestamp_ms,
                        });
                    }
                }
                records.push(rec);
            }
            Err(reason) => rejected.push(Rejection { line, reason }),
        }
    }
    if rows_seen == 0 {
        return Err(IngestError::EmptyInput { path: path_buf });
    }
    Ok(ParsedTrace { records, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp_ms,mcs,decoded,snr,rsrp,rssi,noise_power,rx_power\n";

    fn parse(body: &str) -> Result<ParsedTrace, IngestError> {
        let text = format!("{HEADER}{body}");
        parse_trace_reader(text.as_bytes(), Path::new("t.csv"), &TraceSchema::default())
    }

    #[test]
    fn three_valid_rows() {
        let t = parse("100,0,1,10,-90,-60,-100,-70\n101,1,1,11,-91,-61,-101,-71\n102,2,0,12,-92,-62,-102,-72\n").unwrap();
        assert_eq!(t.records.len(), 3);
        assert!(t.rejected.is_empty());
        assert_eq!(t.records[2].timestamp_ms, 102);
        assert!(!t.records[2].decoded);
        assert_eq!(t.records[1].phy.snr, 11.0);
        assert_eq!(t.records[0].phy.rx_gain, None);
    }

    #[test]
    fn out_of_range_mcs_is_rejected() {
        let t = parse("100,0,1,10,-90,-60,-100,-70\n101,25,1,11,-91,-61,-101,-71\n").unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.rejected.len(), 1);
        assert_eq!(t.rejected[0].line, 3);
    }

    #[test]
    fn duplicated_timestamp_is_an_ordering_error() {
        let err = parse("100,0,1,10,-90,-60,-100,-70\n100,1,1,11,-91,-61,-101,-71\n").unwrap_err();
        match err {
            IngestError::Ordering { timestamp_ms, .. } => assert_eq!(timestamp_ms, 100),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let text = "timestamp_ms,mcs,snr\n1,0,3\n";
        let err = parse_trace_reader(text.as_bytes(), Path::new("t.csv"), &TraceSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::Schema { ref column, .. } if column == "rsrp"));
    }

    #[test]
    fn empty_file_and_header_only() {
        for text in ["", HEADER] {
            let err = parse_trace_reader(text.as_bytes(), Path::new("t.csv"), &TraceSchema::default()).unwrap_err();
            assert!(matches!(err, IngestError::EmptyInput { .. }), "{text:?}");
        }
    }

    #[test]
    fn optional_columns_and_renamed_schema() {
        let text = "ts,m,snr,rsrp,rssi,noise,rx,gain\n5,3,1,2,3,4,5,30\n6,4,1,2,3,4,5,\n";
        let schema = TraceSchema {
            timestamp_ms: "ts".into(),
            mcs: "m".into(),
            noise_power: "noise".into(),
            rx_power: "rx".into(),
            rx_gain: "gain".into(),
            ..TraceSchema::default()
        };
        let t = parse_trace_reader(text.as_bytes(), Path::new("t.csv"), &schema).unwrap();
        assert!(t.records.iter().all(|r| r.decoded));
        assert_eq!(t.records[0].phy.rx_gain, Some(30.0));
        assert_eq!(t.records[1].phy.rx_gain, None);
    }

    #[test]
    fn garbage_values_are_counted() {
        let t = parse("1,0,maybe,10,-90,-60,-100,-70\n2,0,1,nan,-90,-60,-100,-70\n3,x,1,1,1,1,1,1\n4,0,1,1,1,1,1,1\n").unwrap();
        assert_eq!(t.rejected.len(), 3);
        assert_eq!(t.records.len(), 1);
    }
}
