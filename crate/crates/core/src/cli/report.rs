use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::commands::{write_with, Context, EvalRun};
use super::{CliError, Envelope};
use crate::regressors::ModelKind;

const LOSSES: [&str; 3] = ["quantile", "mse", "mae"];

/// Algorithm × loss goodput table in bit/s.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

fn rank(order: &[&str], s: &str) -> (usize, String) {
    (order.iter().position(|o| *o == s).unwrap_or(order.len()), s.to_string())
}

/// Builds the table from `(kind, loss, goodput)` entries. Only kinds and
/// losses that occur are included; a cell with several complete runs shows
/// the best one and a cell with none is empty.
pub fn build_table(entries: &[(String, String, Option<f64>)]) -> ReportTable {
    let kinds: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
    let mut rows: Vec<(usize, String)> = entries.iter().map(|e| rank(&kinds, &e.0)).collect::<BTreeSet<_>>().into_iter().collect();
    let mut columns: Vec<(usize, String)> =
        entries.iter().map(|e| rank(&LOSSES, &e.1)).collect::<BTreeSet<_>>().into_iter().collect();
    rows.sort();
    columns.sort();
    let cells = rows
        .iter()
        .map(|(_, r)| {
            columns
                .iter()
                .map(|(_, c)| {
                    entries
                        .iter()
                        .filter(|e| &e.0 == r && &e.1 == c)
                        .filter_map(|e| e.2)
                        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
                })
                .collect()
        })
        .collect();
    ReportTable {
        rows: rows.into_iter().map(|r| r.1).collect(),
        columns: columns.into_iter().map(|c| c.1).collect(),
        cells,
    }
}

fn mbit(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |b| format!("{:.3}", b / 1e6))
}

struct Run {
    name: String,
    envelope: Option<Envelope<EvalRun>>,
}

fn list(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(suffix))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn load_runs(dir: &Path) -> Result<Vec<Run>, CliError> {
    list(dir, "eval_", ".json")?
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            let name = name["eval_".len()..name.len() - ".json".len()].to_string();
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            let envelope: Envelope<EvalRun> = serde_json::from_str(&text).map_err(|e| CliError::io(&p, e))?;
            Ok(Run {
                name,
                envelope: Some(envelope),
            })
        })
        .collect()
}

pub(crate) fn report(ctx: &Context) -> Result<(), CliError> {
    let reports = ctx.out("reports");
    let mut runs = load_runs(&reports)?;
    let mut entries = Vec::new();
    for r in &runs {
        let Some(env) = &r.envelope else { continue };
        if let Some(run) = &env.result {
            if let (Some(k), Some(l)) = (&run.kind, &run.loss) {
                entries.push((k.clone(), l.clone(), Some(run.report.aggregate_bps)));
            }
        }
    }
    let found: BTreeSet<String> = runs.iter().map(|r| r.name.clone()).collect();
    let mut absent = Vec::new();
    for name in &ctx.loaded.config.report.expected {
        if found.contains(name) {
            continue;
        }
        let config = ctx.model(name)?;
        entries.push((config.kind().to_string(), config.loss().label().to_string(), None));
        absent.push(name.clone());
        runs.push(Run {
            name: name.clone(),
            envelope: None,
        });
    }
    let failed: Vec<&str> = runs
        .iter()
        .filter(|r| r.envelope.as_ref().is_some_and(|e| e.result.is_none()))
        .map(|r| r.name.as_str())
        .collect();
    let table = build_table(&entries);

    let mut md = String::new();
    md.push_str("# Goodput by algorithm and training loss\n\n");
    md.push_str("Mean leave-one-round-out goodput in Mbit/s. `-` marks a missing run.\n\n");
    let _ = writeln!(md, "| algorithm | {} |", table.columns.join(" | "));
    let _ = writeln!(md, "|---|{}", "---|".repeat(table.columns.len()));
    for (r, row) in table.rows.iter().zip(&table.cells) {
        let cells: Vec<String> = row.iter().map(|&c| mbit(c)).collect();
        let _ = writeln!(md, "| {r} | {} |", cells.join(" | "));
    }
    if let Some(base) = runs.iter().filter_map(|r| r.envelope.as_ref()?.result.as_ref()).next() {
        let fb = &base.fold_baselines;
        let pooled = &base.report.baseline;
        md.push_str("\n## Reference policies\n\n");
        md.push_str("| policy | fold mean (Mbit/s) | pooled (Mbit/s) |\n|---|---|---|\n");
        let _ = writeln!(md, "| oracle | {} | {} |", mbit(Some(fb.oracle_bps)), mbit(Some(pooled.oracle_bps)));
        let _ = writeln!(
            md,
            "| best static MCS ({}) | {} | {} |",
            fb.best_static_mcs,
            mbit(Some(fb.best_static_bps)),
            mbit(Some(pooled.best_static_bps))
        );
    }
    md.push_str("\n## Runs\n\n| run | model | status | goodput (Mbit/s) |\n|---|---|---|---|\n");
    let mut sorted: Vec<&Run> = runs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    for r in &sorted {
        let (model, status, bps) = match &r.envelope {
            None => ("-".to_string(), "absent".to_string(), None),
            Some(e) => match &e.result {
                Some(run) => (run.report.model.clone(), e.status.clone(), Some(run.report.aggregate_bps)),
                None => ("-".to_string(), e.status.clone(), None),
            },
        };
        let _ = writeln!(md, "| {} | {model} | {status} | {} |", r.name, mbit(bps));
    }

    let out = ctx.out("report");
    let curves = out.join("curves");
    let mut copied = Vec::new();
    let sources = [
        list(&reports, "sweep_", ".csv")?,
        list(&reports, "importance_", ".csv")?,
        list(&ctx.out("stats"), "", ".csv")?,
    ];
    for src in sources.iter().flatten() {
        fs::create_dir_all(&curves).map_err(|e| CliError::io(&curves, e))?;
        let name = src.file_name().unwrap();
        let dst = curves.join(name);
        fs::copy(src, &dst).map_err(|e| CliError::io(src, e))?;
        copied.push(name.to_string_lossy().into_owned());
    }
    if !copied.is_empty() {
        md.push_str("\n## Curve data\n\n");
        for c in &copied {
            let _ = writeln!(md, "- `curves/{c}`");
        }
    }
    write_with(&out.join("report.md"), |w| {
        std::io::Write::write_all(w, md.as_bytes())?;
        Ok(())
    })?;
    write_with(&out.join("table.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        let mut header = vec!["algorithm".to_string()];
        header.extend(table.columns.iter().map(|c| format!("{c}_bps")));
        c.write_record(&header)?;
        for (r, row) in table.rows.iter().zip(&table.cells) {
            let mut rec = vec![r.clone()];
            rec.extend(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), |b| b.to_string())));
            c.write_record(&rec)?;
        }
        c.flush()?;
        Ok(())
    })?;

    for (r, row) in table.rows.iter().zip(&table.cells) {
        for (c, v) in table.columns.iter().zip(row) {
            println!("{r}.{c}_bps={}", v.map_or_else(|| "NA".to_string(), |b| b.to_string()));
        }
    }
    println!("runs={}", found.len());
    println!("absent={}", absent.len());
    println!("failed={}", failed.len());
    if !absent.is_empty() || !failed.is_empty() {
        let mut missing: Vec<&str> = absent.iter().map(String::as_str).collect();
        missing.extend(&failed);
        return Err(CliError::Partial(format!("partial report; missing or failed runs: {}", missing.join(", "))));
    }
    Ok(())
}
