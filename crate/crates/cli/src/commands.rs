use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use qoe_core::dataset::synthetic::{generate_synthetic, GROUND_TRUTH_VERSION};
use qoe_core::dataset::{
    fit_discretizer, fit_scaler, kfold, load_csv, remove_outliers, resolution_label, split,
    write_csv, Dataset, DiscretizerSpec, Kqi, OutlierPolicy,
};
use qoe_core::feature_ranking::{center_out_order, rank_features};
use qoe_core::metrics::{mase_vs_mean, time_model, write_report_csv, ModelReportRow};
use qoe_core::qoe_objective::{
    optimize, Decision, DecisionPoint, Method, ModelPredictor, Regressor,
};
use qoe_core::qubo_ensemble::{self, EnsembleConfig, EnsembleModel, Solver};
use qoe_core::tt_regressor::{fit_tt, TTModel};
use qoe_core::Error;
use serde::Serialize;

use crate::config::{RunConfig, SolverKind};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Qubo,
    Tt,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Qubo => "qubo",
            ModelKind::Tt => "tt",
        }
    }

    fn extension(self) -> &'static str {
        match self {
            ModelKind::Qubo => "json",
            ModelKind::Tt => "ttm",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "qubo" => Some(ModelKind::Qubo),
            "tt" => Some(ModelKind::Tt),
            _ => None,
        }
    }
}

pub fn model_path(cfg: &RunConfig, kind: ModelKind, kqi: Kqi) -> PathBuf {
    cfg.model_dir().join(format!(
        "{}_{}.{}",
        kind.name(),
        kqi.slug(),
        kind.extension()
    ))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> qoe_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn synth(cfg: &RunConfig, n: usize, noise: f64) -> CliResult<()> {
    let d = generate_synthetic(n, cfg.seed, noise)?;
    let path = cfg.paths.out_dir.join("synthetic.csv");
    write_bytes(&path, &csv_bytes(|b| write_csv(&d, b))?)?;
    println!("ground truth {GROUND_TRUTH_VERSION}");
    println!("wrote {} rows to {}", d.len(), path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PreprocessReport {
    input_rows: usize,
    rejected_rows: usize,
    after_outlier_removal: usize,
    iqr_factor: f64,
    train: usize,
    val: usize,
    test: usize,
}

pub fn preprocess(cfg: &RunConfig, data: &Path) -> CliResult<()> {
    let loaded = load_csv(data, &cfg.schema)?;
    let parsed = loaded.dataset.len();
    let filtered = remove_outliers(
        &loaded.dataset,
        OutlierPolicy {
            iqr_factor: cfg.preprocess.iqr_factor,
        },
    )?;
    let d = split(&filtered, cfg.preprocess.fractions, cfg.seed)?;
    let scaler = fit_scaler(&d, &cfg.schema.features)?;
    let disc = fit_discretizer(&cfg.ranges)?;
    let (train, val, test) = d.split_counts();
    let report = PreprocessReport {
        input_rows: parsed + loaded.rejects.len(),
        rejected_rows: loaded.rejects.len(),
        after_outlier_removal: d.len(),
        iqr_factor: cfg.preprocess.iqr_factor,
        train,
        val,
        test,
    };
    let out = &cfg.paths.out_dir;
    write_bytes(
        &out.join("processed.csv"),
        &csv_bytes(|b| write_csv(&d, b))?,
    )?;
    write_json(&out.join("scaler.json"), &scaler)?;
    write_json(&out.join("discretizer.json"), &disc)?;
    write_json(&out.join("preprocess_report.json"), &report)?;
    for r in &loaded.rejects {
        eprintln!("rejected line {}: {}", r.line, r.reason);
    }
    println!(
        "samples: {} read, {} rejected, {} after outlier removal (train {train}, val {val}, test {test})",
        report.input_rows, report.rejected_rows, report.after_outlier_removal
    );
    Ok(())
}

fn processed(cfg: &RunConfig, data: Option<&Path>) -> CliResult<Dataset> {
    let path = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.paths.out_dir.join("processed.csv"));
    let d = load_csv(&path, &cfg.schema)?.dataset;
    if d.splits.is_none() {
        return Err(Error::config(format!(
            "{} has no split column; run preprocess first",
            path.display()
        ))
        .into());
    }
    Ok(d)
}

fn discretizer(cfg: &RunConfig) -> CliResult<DiscretizerSpec> {
    let path = cfg.paths.out_dir.join("discretizer.json");
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text).map_err(Error::from)?)
    } else {
        Ok(fit_discretizer(&cfg.ranges)?)
    }
}

/// Parses `9`, `1-9` or `1,3,5`.
pub fn parse_counts(s: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::config(format!("bad feature count list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// Parses `0,0.2,0.4`.
pub fn parse_floats(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::config(format!("bad number {p:?}")))
        })
        .collect()
}

enum Trained {
    Qubo(EnsembleModel),
    Tt(TTModel),
}

impl Trained {
    fn regressor(&self) -> &dyn Regressor {
        match self {
            Trained::Qubo(m) => m,
            Trained::Tt(m) => m,
        }
    }

    fn target_mean(&self) -> f64 {
        match self {
            Trained::Qubo(m) => m.target_mean,
            Trained::Tt(m) => m.target_mean,
        }
    }

    fn bytes(&self) -> CliResult<Vec<u8>> {
        Ok(match self {
            Trained::Qubo(m) => {
                let mut s = m.to_json()?;
                s.push('\n');
                s.into_bytes()
            }
            Trained::Tt(m) => m.to_bytes()?,
        })
    }
}

fn holdout_mase(m: &Trained, samples: &[&qoe_core::dataset::Sample], kqi: Kqi) -> CliResult<f64> {
    let preds: Vec<f64> = samples
        .iter()
        .map(|s| m.regressor().predict_sample(s))
        .collect::<qoe_core::Result<_>>()?;
    let actual = Dataset::target_column(samples, kqi);
    Ok(mase_vs_mean(&preds, &actual, m.target_mean())?.mase)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Candidate {
    lambda: Option<f64>,
    rank: Option<usize>,
}

fn fit_one(
    cfg: &RunConfig,
    kind: ModelKind,
    kqi: Kqi,
    features: &[String],
    d: &Dataset,
    disc: &DiscretizerSpec,
    c: &Candidate,
) -> CliResult<Trained> {
    Ok(match kind {
        ModelKind::Qubo => {
            let q = &cfg.qubo;
            let mut ec = EnsembleConfig::new(kqi, features.to_vec());
            ec.pool_size = q.pool_size;
            ec.encoding = q.encoding;
            ec.lambda = c.lambda.unwrap_or(0.0);
            ec.solver = match q.solver {
                SolverKind::Anneal => Solver::Annealing(q.schedule),
                SolverKind::Exact => Solver::Exact,
            };
            ec.tree = q.tree;
            ec.seed = cfg.seed;
            Trained::Qubo(qubo_ensemble::fit(d, &ec)?)
        }
        ModelKind::Tt => {
            let table = rank_features(d, kqi.name(), cfg.ranking.bins)?;
            let keep: Vec<_> = table
                .rows
                .iter()
                .filter(|r| features.contains(&r.feature))
                .cloned()
                .collect();
            let order = center_out_order(&qoe_core::feature_ranking::MiTable { rows: keep })?;
            let tc = cfg.tt.train_config(c.rank.unwrap_or(4), cfg.seed);
            Trained::Tt(fit_tt(d, &order, disc, kqi, &tc)?)
        }
    })
}

#[derive(Debug, Serialize)]
struct SweepRow {
    model: &'static str,
    kqi: &'static str,
    features: usize,
    feature_names: String,
    lambda: Option<f64>,
    rank: Option<usize>,
    cv_mase: Option<f64>,
    val_mase: f64,
    test_mase: f64,
}

pub fn train(
    cfg: &RunConfig,
    kind: ModelKind,
    targets: &[Kqi],
    counts: Option<&[usize]>,
    data: Option<&Path>,
) -> CliResult<()> {
    let d = processed(cfg, data)?;
    let disc = discretizer(cfg)?;
    let out = &cfg.paths.out_dir;
    let candidates: Vec<Candidate> = match kind {
        ModelKind::Qubo => cfg
            .qubo
            .lambda
            .iter()
            .map(|&l| Candidate {
                lambda: Some(l),
                rank: None,
            })
            .collect(),
        ModelKind::Tt => cfg
            .tt
            .ranks
            .iter()
            .map(|&r| Candidate {
                lambda: None,
                rank: Some(r),
            })
            .collect(),
    };
    let folds = if cfg.cv.folds >= 2 && candidates.len() > 1 {
        kfold(&d, cfg.cv.folds, cfg.seed)?
    } else {
        Vec::new()
    };
    for &kqi in targets {
        let table = rank_features(&d, kqi.name(), cfg.ranking.bins)?;
        write_bytes(
            &out.join(format!("mi_{}.csv", kqi.slug())),
            &csv_bytes(|b| table.write_csv(b))?,
        )?;
        let all = table.rows.len();
        let default = [all];
        let counts = counts.unwrap_or(&default);
        let mut rows = Vec::new();
        let mut last = None;
        for &k in counts {
            if k > all {
                return Err(Error::config(format!(
                    "--features {k} exceeds the {all} available features"
                ))
                .into());
            }
            let features = table.top(k).feature_names();
            let mut cv_scores = Vec::new();
            for c in &candidates {
                if folds.is_empty() {
                    break;
                }
                let mut total = 0.0;
                for f in &folds {
                    let m = fit_one(cfg, kind, kqi, &features, f, &disc, c)?;
                    total += holdout_mase(&m, &f.val(), kqi)?;
                }
                cv_scores.push(total / folds.len() as f64);
            }
            let best = cv_scores
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(i, _)| i);
            let chosen = &candidates[best];
            let model = fit_one(cfg, kind, kqi, &features, &d, &disc, chosen)?;
            let test_mase = holdout_mase(&model, &d.test(), kqi)?;
            let val_mase = holdout_mase(&model, &d.val(), kqi)?;
            println!(
                "{} {} features={k} {} test MASE {test_mase:.4}",
                kind.name(),
                kqi.name(),
                match (chosen.lambda, chosen.rank) {
                    (Some(l), _) => format!("lambda={l}"),
                    (_, Some(r)) => format!("rank={r}"),
                    _ => String::new(),
                }
            );
            rows.push(SweepRow {
                model: kind.name(),
                kqi: kqi.slug(),
                features: k,
                feature_names: features.join(";"),
                lambda: chosen.lambda,
                rank: chosen.rank,
                cv_mase: cv_scores.get(best).copied(),
                val_mase,
                test_mase,
            });
            last = Some(model);
        }
        let model = last.expect("at least one feature count");
        write_bytes(&model_path(cfg, kind, kqi), &model.bytes()?)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r).map_err(Error::from)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
        write_bytes(
            &out.join(format!("train_{}_{}.csv", kind.name(), kqi.slug())),
            &bytes,
        )?;
    }
    Ok(())
}

fn load_regressor(
    cfg: &RunConfig,
    kind: ModelKind,
    kqi: Kqi,
) -> CliResult<Box<dyn Regressor + Send + Sync>> {
    let path = model_path(cfg, kind, kqi);
    if !path.exists() {
        return Err(CliError::MissingModel {
            model: kind.name(),
            kqi,
            path,
        });
    }
    Ok(match kind {
        ModelKind::Qubo => Box::new(EnsembleModel::load(&path)?),
        ModelKind::Tt => Box::new(TTModel::load(&path)?),
    })
}

pub fn load_predictor(cfg: &RunConfig, kind: ModelKind) -> CliResult<ModelPredictor> {
    let freeze_path = model_path(cfg, kind, Kqi::FreezePercentage);
    Ok(ModelPredictor {
        latency: load_regressor(cfg, kind, Kqi::Latency)?,
        efps: load_regressor(cfg, kind, Kqi::Efps)?,
        freeze: if freeze_path.exists() {
            Some(load_regressor(cfg, kind, Kqi::FreezePercentage)?)
        } else {
            None
        },
        conditions: cfg.conditions.clone(),
    })
}

#[derive(Debug, Serialize)]
pub struct OptimizeReport {
    pub model: &'static str,
    pub method: Method,
    pub alpha: f64,
    pub min_res: &'static str,
    pub runs: usize,
    pub mean_time_ms: f64,
    pub mean_objective: f64,
    pub mean_evaluations: f64,
    pub modal_configuration: DecisionPoint,
    pub modal_count: usize,
    pub decision: Decision,
}

pub fn optimize_cell(
    cfg: &RunConfig,
    kind: ModelKind,
    pred: &ModelPredictor,
    alpha: f64,
    min_res: u8,
    method: Method,
    runs: usize,
) -> CliResult<OptimizeReport> {
    let mut spec = cfg.objective.clone();
    spec.alpha = alpha;
    spec.min_res = min_res;
    spec.validate()?;
    let mut decisions = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut tc = cfg.ttopt;
        tc.seed = cfg.seed.wrapping_add(run as u64);
        decisions.push(optimize(&spec, pred, method, &tc)?);
    }
    let n = runs as f64;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for d in &decisions {
        *counts.entry(d.result.best_index.clone()).or_default() += 1;
    }
    let (modal_index, modal_count) =
        counts.iter().fold(
            (None, 0),
            |(bi, bc), (i, &c)| if c > bc { (Some(i), c) } else { (bi, bc) },
        );
    let modal = decisions
        .iter()
        .find(|d| Some(&d.result.best_index) == modal_index)
        .expect("modal configuration comes from a run");
    Ok(OptimizeReport {
        model: kind.name(),
        method,
        alpha,
        min_res: resolution_label(min_res)?,
        runs,
        mean_time_ms: decisions.iter().map(|d| d.result.wall_time_ms).sum::<f64>() / n,
        mean_objective: decisions.iter().map(|d| d.result.best_value).sum::<f64>() / n,
        mean_evaluations: decisions
            .iter()
            .map(|d| d.result.evaluations as f64)
            .sum::<f64>()
            / n,
        modal_configuration: modal.point,
        modal_count,
        decision: decisions[0].clone(),
    })
}

pub struct OptimizeArgs {
    pub kind: ModelKind,
    pub alphas: Vec<f64>,
    pub min_res: Vec<u8>,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub sweep: bool,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    min_res: &'static str,
    alpha: f64,
    method: Method,
    mean_objective: f64,
    mean_time_ms: f64,
    runs: usize,
    gap_to_brute: Option<f64>,
}

pub fn optimize_cmd(cfg: &RunConfig, a: &OptimizeArgs) -> CliResult<()> {
    if a.runs == 0 {
        return Err(Error::config("--runs must be at least 1").into());
    }
    let pred = load_predictor(cfg, a.kind)?;
    let out = &cfg.paths.out_dir;
    if !a.sweep {
        let r = optimize_cell(
            cfg,
            a.kind,
            &pred,
            a.alphas[0],
            a.min_res[0],
            a.methods[0],
            a.runs,
        )?;
        write_json(&out.join("optimize.json"), &r)?;
        let text = serde_json::to_string_pretty(&r).map_err(Error::from)?;
        let _ = writeln!(std::io::stdout(), "{text}");
        return Ok(());
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for &mr in &a.min_res {
        for &alpha in &a.alphas {
            let cell: Vec<OptimizeReport> = a
                .methods
                .iter()
                .map(|&m| optimize_cell(cfg, a.kind, &pred, alpha, mr, m, a.runs))
                .collect::<CliResult<_>>()?;
            let brute = cell
                .iter()
                .find(|r| r.method == Method::Brute)
                .map(|r| r.decision.result.best_value);
            for r in &cell {
                rows.push(SweepCsvRow {
                    min_res: r.min_res,
                    alpha,
                    method: r.method,
                    mean_objective: r.mean_objective,
                    mean_time_ms: r.mean_time_ms,
                    runs: r.runs,
                    gap_to_brute: brute.map(|b| (b - r.mean_objective) / b.abs()),
                });
                println!(
                    "min-res {:<5} alpha {alpha:<4} {:<6} objective {:.6} time {:.3} ms",
                    r.min_res,
                    method_name(r.method),
                    r.mean_objective,
                    r.mean_time_ms
                );
            }
            reports.extend(cell);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    write_bytes(&out.join("alpha_sweep.csv"), &bytes)?;
    write_json(&out.join("alpha_sweep.json"), &reports)?;
    Ok(())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Ttopt => "ttopt",
        Method::Brute => "brute",
    }
}

pub fn benchmark(cfg: &RunConfig, runs: usize, data: Option<&Path>) -> CliResult<()> {
    let d = processed(cfg, data)?;
    let test = d.test();
    let dir = cfg.model_dir();
    let mut found = Vec::new();
    if dir.is_dir() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let Some((kind, slug)) = stem.split_once('_') else {
                continue;
            };
            let (Some(kind), Ok(kqi)) = (ModelKind::from_name(kind), slug.parse::<Kqi>()) else {
                continue;
            };
            if path.extension().and_then(|e| e.to_str()) == Some(kind.extension()) {
                found.push((kind, kqi, path));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::config(format!("no trained models in {}", dir.display())).into());
    }
    found.sort_by_key(|(k, q, _)| (k.name(), *q));
    let mut rows = Vec::new();
    for (kind, kqi, path) in &found {
        let (timing, model) = match kind {
            ModelKind::Qubo => (
                time_model(
                    || EnsembleModel::load(path),
                    |m, xs| m.predict_many(xs),
                    &test,
                    runs,
                )?,
                Trained::Qubo(EnsembleModel::load(path)?),
            ),
            ModelKind::Tt => (
                time_model(
                    || TTModel::load(path),
                    |m, xs| m.predict_many(xs),
                    &test,
                    runs,
                )?,
                Trained::Tt(TTModel::load(path)?),
            ),
        };
        let features = match &model {
            Trained::Qubo(m) => m.config.features.len(),
            Trained::Tt(m) => m.order.len(),
        };
        rows.push(ModelReportRow {
            model: kind.name().to_string(),
            kqi: kqi.name().to_string(),
            features,
            loading_ms: Some(timing.loading_ms),
            inference_ms: Some(timing.inference_ms),
            mase: Some(holdout_mase(&model, &test, *kqi)?),
            runs: Some(timing.runs),
            low_confidence: Some(timing.low_confidence),
        });
    }
    let out = cfg.paths.out_dir.join("benchmark.csv");
    write_bytes(&out, &csv_bytes(|b| write_report_csv(&rows, b))?)?;
    println!(
        "{:<6} {:<18} {:>8} {:>12} {:>14} {:>8}",
        "model", "kqi", "features", "loading ms", "inference ms", "MASE"
    );
    for r in &rows {
        println!(
            "{:<6} {:<18} {:>8} {:>12.3} {:>14.3} {:>8.4}{}",
            r.model,
            r.kqi,
            r.features,
            r.loading_ms.unwrap_or(f64::NAN),
            r.inference_ms.unwrap_or(f64::NAN),
            r.mase.unwrap_or(f64::NAN),
            if r.low_confidence == Some(true) {
                "  (single run)"
            } else {
                ""
            }
        );
    }
    Ok(())
}
