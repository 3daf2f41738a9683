//! Boosted-tree regression whose ensemble weights are picked by minimizing a
//! QUBO: every weight is a fixed-point binary code, the squared training loss
//! expands exactly into a quadratic form over those bits, and the form is
//! minimized by simulated annealing (or exhaustively for small pools).
//! Inference is a plain weighted sum of tree outputs.

mod qubo;
mod solver;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{fit_scaler, Dataset, Kqi, Sample, ScalerSpec};
use crate::metrics::{mase_vs_mean, mean};
use crate::{Error, Result};

pub use qubo::{
    build_qubo, build_qubo_from_outputs, decode, encode, ensemble_loss, QuboProblem, WeightEncoding,
};
pub use solver::{solve_exact, solve_sa, AnnealSchedule, Solution, MAX_EXACT_VARIABLES};
pub use tree::{train_pool, Node, RegressionTree, TreeConfig, WeakLearnerPool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Solver {
    Annealing(AnnealSchedule),
    Exact,
}

impl Solver {
    pub fn solve(&self, p: &QuboProblem, seed: u64) -> Result<Solution> {
        match self {
            Solver::Annealing(s) => solve_sa(p, *s, seed),
            Solver::Exact => solve_exact(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub target: Kqi,
    pub features: Vec<String>,
    pub pool_size: usize,
    pub encoding: WeightEncoding,
    pub lambda: f64,
    pub solver: Solver,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(target: Kqi, features: Vec<String>) -> Self {
        EnsembleConfig {
            target,
            features,
            pool_size: 32,
            encoding: WeightEncoding::default(),
            lambda: 0.0,
            solver: Solver::Annealing(AnnealSchedule::default()),
            tree: TreeConfig::default(),
            seed: 0,
        }
    }
}

/// Trained ensemble. Prediction needs only the scaler, the trees and the
/// decoded weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    pub scaler: ScalerSpec,
    pub pool: WeakLearnerPool,
    pub bits: Vec<u8>,
    pub weights: Vec<f64>,
    /// Learners are trained on `(y − target_mean) / target_std`.
    pub target_mean: f64,
    pub target_std: f64,
    pub qubo_energy: f64,
    pub validation_mase: Option<f64>,
}

pub(crate) fn standardization(y: &[f64]) -> (f64, f64) {
    let m = mean(y);
    let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64;
    let sd = var.sqrt();
    (
        m,
        if sd > 1e-12 * m.abs().max(1.0) {
            sd
        } else {
            1.0
        },
    )
}

/// train_pool → build_qubo → solve → decode, on the train split of `d`.
/// Validation MASE is recorded when `d` has a usable val split.
pub fn fit(d: &Dataset, cfg: &EnsembleConfig) -> Result<EnsembleModel> {
    let train = d.train();
    if train.len() < 2 {
        return Err(Error::TooSmall {
            have: train.len(),
            need: 2,
        });
    }
    let scaler = fit_scaler(d, &cfg.features)?;
    let x: Vec<Vec<f64>> = train
        .iter()
        .map(|s| scaler.apply(s))
        .collect::<Result<_>>()?;
    let y_raw = Dataset::target_column(&train, cfg.target);
    let (target_mean, target_std) = standardization(&y_raw);
    let y: Vec<f64> = y_raw
        .iter()
        .map(|v| (v - target_mean) / target_std)
        .collect();

    let pool = train_pool(&x, &y, cfg.pool_size, cfg.seed, cfg.tree)?;
    let qubo = build_qubo(&pool, &x, &y, &cfg.encoding, cfg.lambda)?;
    let sol = cfg.solver.solve(&qubo, cfg.seed)?;
    let weights = decode(&sol.bits, &cfg.encoding);

    let mut model = EnsembleModel {
        config: cfg.clone(),
        scaler,
        pool,
        bits: sol.bits,
        weights,
        target_mean,
        target_std,
        qubo_energy: sol.energy,
        validation_mase: None,
    };
    let val = d.val();
    if !val.is_empty() {
        let preds = model.predict_many(&val)?;
        let actual = Dataset::target_column(&val, cfg.target);
        model.validation_mase = mase_vs_mean(&preds, &actual, target_mean)
            .ok()
            .map(|r| r.mase);
    }
    Ok(model)
}

impl EnsembleModel {
    pub fn predict(&self, x: &Sample) -> Result<f64> {
        let z = self.scaler.apply(x)?;
        let s: f64 = self
            .weights
            .iter()
            .zip(&self.pool.learners)
            .map(|(w, t)| w * t.predict(&z))
            .sum();
        Ok(self.target_mean + self.target_std * s)
    }

    pub fn predict_many(&self, xs: &[&Sample]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: EnsembleModel = serde_json::from_str(s)?;
        if m.weights.len() != m.pool.len() {
            return Err(Error::Format("weight count differs from pool size".into()));
        }
        let enc = m.config.encoding;
        if m.weights.iter().any(|w| *w < enc.w_min || *w > enc.w_max) {
            return Err(Error::Format("weight outside the encoding range".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::generate_synthetic;
    use crate::dataset::{split, SplitFractions, CANONICAL_FEATURES};
    use crate::metrics::mae;

    fn features() -> Vec<String> {
        CANONICAL_FEATURES.iter().map(|s| s.to_string()).collect()
    }

    fn data(n: usize, seed: u64) -> Dataset {
        split(
            &generate_synthetic(n, seed, 0.1).unwrap(),
            SplitFractions::default(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn single_learner_equal_to_target_gets_unit_weight() {
        let h = vec![vec![0.5, -1.0, 2.0, 0.25, 1.5]];
        let y = h[0].clone();
        let p = build_qubo_from_outputs(&h, &y, &WeightEncoding::default(), 0.0).unwrap();
        let s = solve_exact(&p).unwrap();
        assert_eq!(decode(&s.bits, &WeightEncoding::default()), vec![1.0]);

        // Grid 0, 3/7, 6/7, ...: nearest to 1 is 6/7.
        let enc = WeightEncoding {
            bits: 3,
            w_min: 0.0,
            w_max: 3.0,
        };
        let p = build_qubo_from_outputs(&h, &y, &enc, 0.0).unwrap();
        let w = decode(&solve_exact(&p).unwrap().bits, &enc)[0];
        assert!((w - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_targets_with_penalty_select_no_bits() {
        let d = data(200, 1);
        let train = d.train();
        let scaler = fit_scaler(&d, &features()).unwrap();
        let x: Vec<Vec<f64>> = train.iter().map(|s| scaler.apply(s).unwrap()).collect();
        let y = vec![0.0; x.len()];
        let pool = train_pool(&x, &y, 3, 2, TreeConfig::default()).unwrap();
        let p = build_qubo(&pool, &x, &y, &WeightEncoding::default(), 0.5).unwrap();
        assert_eq!(solve_exact(&p).unwrap().bits, vec![0; 12]);
    }

    #[test]
    fn pool_mean_beats_naive() {
        let d = data(3000, 2);
        let train = d.train();
        let scaler = fit_scaler(&d, &features()).unwrap();
        let x: Vec<Vec<f64>> = train.iter().map(|s| scaler.apply(s).unwrap()).collect();
        let y = Dataset::target_column(&train, Kqi::Latency);
        let pool = train_pool(&x, &y, 32, 4, TreeConfig::default()).unwrap();
        let avg: Vec<f64> = x.iter().map(|r| mean(&pool.outputs(r))).collect();
        let naive = vec![mean(&y); y.len()];
        assert!(mae(&avg, &y) <= mae(&naive, &y));
    }

    #[test]
    fn larger_penalty_never_sets_more_bits() {
        let mut rng = crate::seeded_rng(8);
        use rand::Rng;
        for _ in 0..10 {
            let h: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut last = usize::MAX;
            for lambda in [0.0, 0.05, 0.2, 0.5, 1.0, 3.0, 10.0] {
                let p =
                    build_qubo_from_outputs(&h, &y, &WeightEncoding::default(), lambda).unwrap();
                let ones = solve_exact(&p)
                    .unwrap()
                    .bits
                    .iter()
                    .filter(|b| **b == 1)
                    .count();
                assert!(ones <= last);
                last = ones;
            }
        }
    }

    #[test]
    fn target_equal_to_one_learner_is_recovered() {
        // Targets are replaced by one pool member's output; an exact solve on
        // the weight grid must recover it closely.
        let d = data(1500, 3);
        let feats = features();
        let scaler = fit_scaler(&d, &feats).unwrap();
        let all: Vec<&Sample> = d.samples.iter().collect();
        let x_all: Vec<Vec<f64>> = all.iter().map(|s| scaler.apply(s).unwrap()).collect();
        let y0 = Dataset::target_column(&d.train(), Kqi::Efps);
        let x_train: Vec<Vec<f64>> = d.train().iter().map(|s| scaler.apply(s).unwrap()).collect();
        let pool = train_pool(&x_train, &y0, 4, 9, TreeConfig::default()).unwrap();
        let mut d2 = d.clone();
        for (s, x) in d2.samples.iter_mut().zip(&x_all) {
            s.targets.efps = pool.learners[0].predict(x);
        }
        let train = d2.train();
        let y = Dataset::target_column(&train, Kqi::Efps);
        let (m, sd) = standardization(&y);
        let ys: Vec<f64> = y.iter().map(|v| (v - m) / sd).collect();
        let outputs: Vec<Vec<f64>> = pool
            .output_matrix(&x_train)
            .into_iter()
            .map(|h| h.into_iter().map(|v| (v - m) / sd).collect())
            .collect();
        let enc = WeightEncoding::default();
        let p = build_qubo_from_outputs(&outputs, &ys, &enc, 0.0).unwrap();
        let w = decode(&solve_exact(&p).unwrap().bits, &enc);
        let val = d2.val();
        let preds: Vec<f64> = val
            .iter()
            .map(|s| {
                let z = scaler.apply(s).unwrap();
                let hs = pool.outputs(&z);
                m + sd
                    * w.iter()
                        .zip(&hs)
                        .map(|(w, h)| w * (h - m) / sd)
                        .sum::<f64>()
            })
            .collect();
        let actual = Dataset::target_column(&val, Kqi::Efps);
        let r = mase_vs_mean(&preds, &actual, m).unwrap();
        assert!(r.mase < 0.2, "mase {}", r.mase);
    }

    #[test]
    fn fit_beats_naive_and_round_trips() {
        let d = data(2000, 5);
        let mut cfg = EnsembleConfig::new(Kqi::Latency, features());
        cfg.pool_size = 16;
        cfg.solver = Solver::Annealing(AnnealSchedule {
            sweeps: 300,
            ..Default::default()
        });
        let m = fit(&d, &cfg).unwrap();
        assert!(m.validation_mase.unwrap() < 1.0);
        let back = EnsembleModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for s in d.test() {
            assert_eq!(
                back.predict(s).unwrap().to_bits(),
                m.predict(s).unwrap().to_bits()
            );
        }
        let again = fit(&d, &cfg).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn nan_input_is_rejected() {
        let d = data(300, 6);
        let mut cfg = EnsembleConfig::new(Kqi::Efps, features());
        cfg.pool_size = 2;
        cfg.solver = Solver::Exact;
        let m = fit(&d, &cfg).unwrap();
        let mut s = d.samples[0].clone();
        s.features.insert("SINR".into(), f64::NAN);
        assert!(m.predict(&s).is_err());
    }
}
