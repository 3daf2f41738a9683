//! Run configuration: one TOML file, every section optional.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! data = "measurements.csv"   # input CSV for `preprocess`
//! out_dir = "out"             # every artifact is written below this
//! model_dir = "out/models"    # defaults to <out_dir>/models
//!
//! [preprocess]
//! iqr_factor = 1.5            # inf disables outlier removal
//! fractions = { train = 0.7, val = 0.15, test = 0.15 }
//!
//! [ranking]
//! bins = 20
//!
//! [cv]
//! folds = 5
//!
//! [qubo]
//! pool_size = 32
//! lambda = [0.0, 0.01]        # CV candidates
//! solver = "anneal"           # or "exact"
//! encoding = { bits = 4, w_min = -1.0, w_max = 1.0 }
//! schedule = { sweeps = 2000, t_init = 5.0, t_final = 0.01, restarts = 10 }
//! tree = { max_depth = 3, min_leaf = 5 }
//!
//! [tt]
//! ranks = [2, 4]              # CV candidates
//! epochs = 200
//! learning_rate = 0.01
//! batch_size = 64
//! init_scale = 0.1
//!
//! [ttopt]
//! rank = 4
//! patience = 3
//!
//! [objective]
//! prb_min = 5
//! fps_values = [30.0, 60.0, 120.0]
//!
//! [conditions]
//! "Ping avg" = 40.0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qoe_core::dataset::{default_allowed_ranges, AllowedRange, Schema, SplitFractions};
use qoe_core::qoe_objective::{default_conditions, ObjectiveSpec};
use qoe_core::qubo_ensemble::{AnnealSchedule, TreeConfig, WeightEncoding};
use qoe_core::tt_regressor::{Init, TrainConfig};
use qoe_core::ttopt::TtoptConfig;
use qoe_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub schema: Schema,
    pub synth: SynthSettings,
    pub preprocess: PreprocessSettings,
    pub ranges: Vec<AllowedRange>,
    pub ranking: RankingSettings,
    pub cv: CvSettings,
    pub qubo: QuboSettings,
    pub tt: TtSettings,
    pub ttopt: TtoptConfig,
    pub objective: ObjectiveSpec,
    pub conditions: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            schema: Schema::default(),
            synth: SynthSettings::default(),
            preprocess: PreprocessSettings::default(),
            ranges: default_allowed_ranges(),
            ranking: RankingSettings::default(),
            cv: CvSettings::default(),
            qubo: QuboSettings::default(),
            tt: TtSettings::default(),
            ttopt: TtoptConfig::default(),
            objective: ObjectiveSpec::default(),
            conditions: default_conditions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: None,
            out_dir: PathBuf::from("out"),
            model_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub n: usize,
    pub noise: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            n: 3467,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    pub iqr_factor: f64,
    pub fractions: SplitFractions,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            iqr_factor: 1.5,
            fractions: SplitFractions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingSettings {
    pub bins: usize,
}

impl Default for RankingSettings {
    fn default() -> Self {
        RankingSettings {
            bins: qoe_core::feature_ranking::DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings { folds: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Anneal,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuboSettings {
    pub pool_size: usize,
    pub lambda: Vec<f64>,
    pub solver: SolverKind,
    pub encoding: WeightEncoding,
    pub schedule: AnnealSchedule,
    pub tree: TreeConfig,
}

impl Default for QuboSettings {
    fn default() -> Self {
        QuboSettings {
            pool_size: 32,
            lambda: vec![0.0, 0.01],
            solver: SolverKind::Anneal,
            encoding: WeightEncoding::default(),
            schedule: AnnealSchedule::default(),
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtSettings {
    pub ranks: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init_scale: f64,
    pub clip_norm: f64,
    pub init: Init,
}

impl Default for TtSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TtSettings {
            ranks: vec![2, 4],
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            init_scale: t.init_scale,
            clip_norm: t.clip_norm,
            init: t.init,
        }
    }
}

impl TtSettings {
    pub fn train_config(&self, rank: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            rank,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            init_scale: self.init_scale,
            clip_norm: self.clip_norm,
            init: self.init,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn model_dir(&self) -> PathBuf {
        self.paths
            .model_dir
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("models"))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.qubo.lambda.is_empty() || self.tt.ranks.is_empty() {
            return Err(Error::config(
                "qubo.lambda and tt.ranks need at least one candidate",
            ));
        }
        if self.cv.folds == 1 {
            return Err(Error::config("cv.folds must be 0 (disabled) or at least 2"));
        }
        if self.preprocess.iqr_factor.is_nan() || self.preprocess.iqr_factor < 0.0 {
            return Err(Error::config("preprocess.iqr_factor must be non-negative"));
        }
        self.objective.validate()
    }
}
