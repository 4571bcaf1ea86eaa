use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, Envelope, LoadedConfig};
use crate::evaluation::{
    evaluate_model, feature_count_sweep, logo_folds, pearson_correlation, permutation_importance, training_size_sweep,
    write_curves_csv, Curve, EvalReport, FeatureImportance, Learner, ModelSpec,
};
use crate::goodput::{oracle_goodput, static_goodput, TbsTable};
use crate::hyperopt::{default_space, random_search, write_trial_log, ParamSpace, TrialResult};
use crate::ingest::{run_pipeline, Dataset, IngestSummary, LabeledPacket};
use crate::regressors::{ModelConfig, ModelKind};
use crate::seed;
use crate::stats::{default_distance_edges, kde_rsrp, per_by_distance, per_by_mcs_area, write_kde_csv, write_per_csv};

pub(crate) struct Context {
    pub loaded: LoadedConfig,
    pub seed: u64,
}

impl Context {
    pub fn new(loaded: LoadedConfig, seed: Option<u64>) -> Self {
        let seed = seed.unwrap_or(loaded.config.seed);
        Self { loaded, seed }
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.loaded.config.output_dir.join(rel)
    }

    fn envelope<T>(&self, result: T) -> Envelope<T> {
        Envelope {
            config_sha256: self.loaded.sha256.clone(),
            seed: self.seed,
            status: "complete".into(),
            error: None,
            result: Some(result),
        }
    }

    fn failed(&self, error: String) -> Envelope<()> {
        Envelope {
            config_sha256: self.loaded.sha256.clone(),
            seed: self.seed,
            status: "failed".into(),
            error: Some(error),
            result: None,
        }
    }

    fn table(&self) -> Result<TbsTable, CliError> {
        match &self.loaded.config.tbs_table {
            Some(p) => Ok(TbsTable::load(p)?),
            None => Ok(TbsTable::builtin()),
        }
    }

    fn dataset(&self, over: Option<&Path>) -> Result<Dataset, CliError> {
        let path = over.map(Path::to_path_buf).unwrap_or_else(|| self.loaded.dataset_path());
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "dataset {} does not exist; run `ingest` first",
                path.display()
            )));
        }
        Ok(Dataset::load_csv(&path)?)
    }

    /// A named model from the configuration, or the defaults of a model kind.
    pub fn model(&self, name: &str) -> Result<ModelConfig, CliError> {
        if let Some(c) = self.loaded.config.models.get(name) {
            return Ok(c.clone());
        }
        name.parse::<ModelKind>()
            .map(ModelKind::default_config)
            .map_err(|_| CliError::Usage(format!("unknown model `{name}`")))
    }
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<(), Box<dyn std::error::Error>>,
{
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_csv_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    write_with(path, |w| {
        let mut c = csv::Writer::from_writer(w);
        for r in rows {
            c.serialize(r)?;
        }
        c.flush()?;
        Ok(())
    })
}

fn read_csv_rows<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    rdr.deserialize()
        .collect::<Result<Vec<S>, _>>()
        .map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub(crate) fn ingest(ctx: &Context) -> Result<(), CliError> {
    let mut config = ctx.loaded.validate_ingest()?.clone();
    config.keep_packets = true;
    let out = run_pipeline(&config)?;
    let dataset_path = ctx.loaded.dataset_path();
    create_parent(&dataset_path)?;
    out.dataset.save_csv(&dataset_path)?;
    write_csv_rows(&ctx.out("packets.csv"), &out.packets)?;
    write_json(&ctx.out("ingest_summary.json"), &ctx.envelope(&out.summary))?;
    let s: &IngestSummary = &out.summary;
    println!("packets={}", s.packets_reconstructed);
    println!("sweeps={}", s.sweeps);
    println!("samples={}", s.samples);
    println!("rows_rejected={}", s.rows_rejected);
    println!("rounds={}", s.rounds.len());
    Ok(())
}

#[derive(Serialize)]
struct StatsSummary {
    packets: usize,
    kde: Vec<KdeSummary>,
    distance_unbinned: u64,
}

#[derive(Serialize)]
struct KdeSummary {
    area: String,
    n: usize,
    bandwidth: f64,
}

pub(crate) fn stats(ctx: &Context) -> Result<(), CliError> {
    let path = ctx.out("packets.csv");
    if !path.is_file() {
        return Err(CliError::Usage(format!("{} does not exist; run `ingest` first", path.display())));
    }
    let packets: Vec<LabeledPacket> = read_csv_rows(&path)?;
    let opts = &ctx.loaded.config.stats;
    let kde = kde_rsrp(&packets, opts.kde_bandwidth, opts.grid_points)?;
    let per_area = per_by_mcs_area(&packets);
    let per_dist = per_by_distance(&packets, &default_distance_edges(&packets, opts.distance_bin_m))?;
    write_with(&ctx.out("stats/rsrp_kde.csv"), |w| Ok(write_kde_csv(&kde, w)?))?;
    write_with(&ctx.out("stats/per_mcs_area.csv"), |w| Ok(write_per_csv(&per_area, w)?))?;
    write_with(&ctx.out("stats/per_distance.csv"), |w| Ok(write_per_csv(&per_dist.cells, w)?))?;
    let summary = StatsSummary {
        packets: packets.len(),
        kde: kde
            .iter()
            .map(|k| KdeSummary {
                area: k.area.to_string(),
                n: k.n,
                bandwidth: k.bandwidth,
            })
            .collect(),
        distance_unbinned: per_dist.unbinned,
    };
    write_json(&ctx.out("stats/summary.json"), &ctx.envelope(summary))?;
    println!("packets={}", packets.len());
    println!("areas={}", kde.len());
    Ok(())
}

#[derive(Serialize)]
struct TrainRun<'a> {
    model: &'a str,
    samples: usize,
    artifact: String,
}

pub(crate) fn train(ctx: &Context, name: &str, dataset: Option<&Path>) -> Result<(), CliError> {
    let config = ctx.model(name)?;
    let ds = ctx.dataset(dataset)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let model = config.fit(&ds.feature_matrix(&all)?, seed::substream(ctx.seed, "train", 0))?;
    let stem = file_stem(name);
    let path = ctx.out(&format!("models/{stem}.json"));
    create_parent(&path)?;
    model.save(&path)?;
    let run = TrainRun {
        model: name,
        samples: ds.len(),
        artifact: format!("{stem}.json"),
    };
    write_json(&ctx.out(&format!("models/{stem}.run.json")), &ctx.envelope(run))?;
    println!("model={}", path.display());
    Ok(())
}

/// Reference goodputs aggregated the same way as model scores: the mean over
/// folds of each test round's oracle and fixed-MCS goodput.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct FoldBaselines {
    pub oracle_bps: f64,
    pub best_static_mcs: u8,
    pub best_static_bps: f64,
}

fn fold_baselines(ds: &Dataset, report: &EvalReport, table: &TbsTable) -> Result<FoldBaselines, CliError> {
    let folds = logo_folds(ds)?;
    let mcs = report.baseline.best_static_mcs;
    let mut oracle = 0.0;
    let mut fixed = 0.0;
    for f in &folds {
        let t = ds.targets_of(&f.test_indices);
        oracle += oracle_goodput(&t, table)?;
        fixed += static_goodput(&t, mcs, table)?;
    }
    let n = folds.len() as f64;
    Ok(FoldBaselines {
        oracle_bps: oracle / n,
        best_static_mcs: mcs,
        best_static_bps: fixed / n,
    })
}

#[derive(Serialize, Deserialize)]
pub(crate) struct EvalRun {
    pub name: String,
    #[serde(default)]
    pub loss: Option<String>,
    #[serde(default)]
    pub kind: Option<String>,
    pub fold_baselines: FoldBaselines,
    pub report: EvalReport,
}

pub(crate) fn evaluate(
    ctx: &Context,
    model: Option<&str>,
    oracle: bool,
    fixed_mcs: Option<u8>,
    dataset: Option<&Path>,
) -> Result<(), CliError> {
    let (name, spec) = match (model, oracle, fixed_mcs) {
        (Some(m), false, None) => (m.to_string(), ModelSpec::Model(ctx.model(m)?)),
        (None, true, None) => ("oracle".to_string(), ModelSpec::Oracle),
        (None, false, Some(m)) => (format!("fixed-mcs-{m}"), ModelSpec::FixedMcs(m)),
        _ => return Err(CliError::Usage("give exactly one of --model, --oracle, --fixed-mcs".into())),
    };
    let table = ctx.table()?;
    let ds = ctx.dataset(dataset)?;
    let stem = file_stem(&name);
    let path = ctx.out(&format!("reports/eval_{stem}.json"));
    let mut report = match evaluate_model(&ds, &spec, &table, ctx.seed) {
        Ok(r) => r,
        Err(e) => {
            let err = CliError::from(e);
            write_json(&path, &ctx.failed(err.to_string()))?;
            return Err(err);
        }
    };
    report.correlation = pearson_correlation(&ds);
    let base = fold_baselines(&ds, &report, &table)?;
    write_with(&ctx.out(&format!("reports/eval_{stem}_folds.csv")), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["round", "n_train", "n_test", "goodput_bps"])?;
        for f in &report.per_fold {
            c.write_record([
                f.round.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                f.goodput_bps.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let (kind, loss) = match &spec {
        ModelSpec::Model(c) => (Some(c.kind().to_string()), Some(c.loss().label().to_string())),
        _ => (None, None),
    };
    println!("aggregate_bps={}", report.aggregate_bps);
    println!("oracle_bps={}", base.oracle_bps);
    println!("best_static_mcs={}", base.best_static_mcs);
    println!("best_static_bps={}", base.best_static_bps);
    println!("pooled_goodput_bps={}", report.baseline.mean_goodput_bps);
    println!("pooled_oracle_bps={}", report.baseline.oracle_bps);
    println!("pooled_best_static_bps={}", report.baseline.best_static_bps);
    let run = EvalRun {
        name,
        loss,
        kind,
        fold_baselines: base,
        report,
    };
    write_json(&path, &ctx.envelope(run))
}

pub(crate) fn importance(
    ctx: &Context,
    name: &str,
    repeats: Option<usize>,
    dataset: Option<&Path>,
) -> Result<(), CliError> {
    let config = ctx.model(name)?;
    let repeats = repeats.unwrap_or(ctx.loaded.config.importance.n_repeats);
    let table = ctx.table()?;
    let ds = ctx.dataset(dataset)?;
    let imp = permutation_importance(&ds, &config, &table, repeats, ctx.seed)?;
    write_importance(ctx, name, &imp)?;
    for i in &imp {
        println!("{}={}", i.feature, i.delta_bps);
    }
    Ok(())
}

fn importance_path(ctx: &Context, name: &str) -> PathBuf {
    ctx.out(&format!("reports/importance_{}.json", file_stem(name)))
}

fn write_importance(ctx: &Context, name: &str, imp: &[FeatureImportance]) -> Result<(), CliError> {
    write_json(&importance_path(ctx, name), &ctx.envelope(imp))?;
    write_csv_rows(&ctx.out(&format!("reports/importance_{}.csv", file_stem(name))), imp)
}

fn learners(ctx: &Context, names: &[String], fallback: &[String]) -> Result<Vec<(String, ModelConfig)>, CliError> {
    let names = if names.is_empty() { fallback } else { names };
    if names.is_empty() {
        return Err(CliError::Usage("no models given (use --models or sweeps.models)".into()));
    }
    names.iter().map(|n| Ok((n.clone(), ctx.model(n)?))).collect()
}

#[derive(Serialize)]
struct SweepRun {
    models: Vec<String>,
    x: &'static str,
    feature_order: Option<Vec<String>>,
    curves: Vec<Curve>,
}

/// Curves are labelled with the configured model names.
fn rename(curves: &mut [Curve], models: &[(String, ModelConfig)]) {
    for (c, (n, _)) in curves.iter_mut().zip(models) {
        c.series = n.clone();
    }
}

fn write_sweep(ctx: &Context, stem: &str, run: SweepRun) -> Result<(), CliError> {
    write_with(&ctx.out(&format!("reports/{stem}.csv")), |w| Ok(write_curves_csv(&run.curves, w)?))?;
    for c in &run.curves {
        for p in &c.points {
            println!("{}@{}={}", c.series, p.x, p.mean);
        }
    }
    write_json(&ctx.out(&format!("reports/{stem}.json")), &ctx.envelope(run))
}

pub(crate) fn sweep_features(ctx: &Context, names: &[String], dataset: Option<&Path>) -> Result<(), CliError> {
    let models = learners(ctx, names, &ctx.loaded.config.sweeps.models)?;
    let table = ctx.table()?;
    let ds = ctx.dataset(dataset)?;
    let imp_model = ctx
        .loaded
        .config
        .importance
        .model
        .clone()
        .unwrap_or_else(|| models[0].0.clone());
    let imp_path = importance_path(ctx, &imp_model);
    let imp: Vec<FeatureImportance> = if imp_path.is_file() {
        let env: Envelope<Vec<FeatureImportance>> = read_json(&imp_path)?;
        env.result
            .ok_or_else(|| CliError::Data(format!("{}: no importance result", imp_path.display())))?
    } else {
        let config = ctx.model(&imp_model)?;
        let imp = permutation_importance(&ds, &config, &table, ctx.loaded.config.importance.n_repeats, ctx.seed)?;
        write_importance(ctx, &imp_model, &imp)?;
        imp
    };
    let order: Vec<String> = imp.into_iter().map(|i| i.feature).collect();
    let refs: Vec<&dyn Learner> = models.iter().map(|(_, c)| c as &dyn Learner).collect();
    let mut curves = feature_count_sweep(&ds, &refs, &order, &table, ctx.seed)?;
    rename(&mut curves, &models);
    let run = SweepRun {
        models: models.iter().map(|m| m.0.clone()).collect(),
        x: "features",
        feature_order: Some(order),
        curves,
    };
    write_sweep(ctx, "sweep_features", run)
}

/// Powers of two from 32 up to, and including, the smallest training split.
fn default_sizes(available: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = std::iter::successors(Some(32usize), |s| s.checked_mul(2))
        .take_while(|&s| s < available)
        .collect();
    sizes.push(available);
    sizes
}

pub(crate) fn sweep_samples(
    ctx: &Context,
    names: &[String],
    sizes: &[usize],
    dataset: Option<&Path>,
) -> Result<(), CliError> {
    let models = learners(ctx, names, &ctx.loaded.config.sweeps.models)?;
    let table = ctx.table()?;
    let ds = ctx.dataset(dataset)?;
    let sizes = if !sizes.is_empty() {
        sizes.to_vec()
    } else if !ctx.loaded.config.sweeps.sizes.is_empty() {
        ctx.loaded.config.sweeps.sizes.clone()
    } else {
        let available = logo_folds(&ds)?.iter().map(|f| f.train_indices.len()).min().unwrap_or(0);
        default_sizes(available)
    };
    let refs: Vec<&dyn Learner> = models.iter().map(|(_, c)| c as &dyn Learner).collect();
    let mut curves = training_size_sweep(&ds, &refs, &sizes, &table, ctx.seed)?;
    rename(&mut curves, &models);
    let run = SweepRun {
        models: models.iter().map(|m| m.0.clone()).collect(),
        x: "training_samples",
        feature_order: None,
        curves,
    };
    write_sweep(ctx, "sweep_samples", run)
}

#[derive(Serialize)]
struct HyperoptRun<'a> {
    model: &'a str,
    n_iter: usize,
    space: &'a ParamSpace,
    failed_trials: usize,
    best: &'a TrialResult,
}

pub(crate) fn hyperopt(
    ctx: &Context,
    name: &str,
    n_iter: Option<usize>,
    space: Option<&Path>,
    dataset: Option<&Path>,
) -> Result<(), CliError> {
    let base = ctx.model(name)?;
    let table = ctx.table()?;
    let ds = ctx.dataset(dataset)?;
    let opts = &ctx.loaded.config.hyperopt;
    let space: ParamSpace = match space {
        Some(p) => read_json(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => opts
            .spaces
            .get(name)
            .cloned()
            .unwrap_or_else(|| default_space(base.kind(), ds.n_features())),
    };
    let n_iter = n_iter.unwrap_or(opts.n_iter);
    let result = random_search(&ds, &base, &space, n_iter, &table, ctx.seed)?;
    let stem = file_stem(name);
    write_with(&ctx.out(&format!("hyperopt/{stem}_trials.csv")), |w| {
        Ok(write_trial_log(&result.trials, w)?)
    })?;
    let run = HyperoptRun {
        model: name,
        n_iter,
        space: &space,
        failed_trials: result.trials.iter().filter(|t| t.score_bps.is_none()).count(),
        best: &result.best,
    };
    write_json(&ctx.out(&format!("hyperopt/{stem}_best.json")), &ctx.envelope(run))?;
    if let Some(c) = &result.best.config {
        let text = serde_json::to_string_pretty(c).map_err(|e| CliError::Data(e.to_string()))?;
        let path = ctx.out(&format!("hyperopt/{stem}_best_config.json"));
        create_parent(&path)?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    }
    println!("best_trial={}", result.best.trial);
    println!("best_score_bps={}", result.best.score_bps.unwrap_or(f64::NAN));
    Ok(())
}
