//! Cloud-gaming measurement data: ingestion, preprocessing, scaling and a
//! synthetic generator with a known ground truth.

mod csv_io;
pub(crate) mod preprocess;
mod scaling;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use csv_io::{load_csv, read_csv, write_csv, LoadReport, RowReject, Schema};
pub(crate) use preprocess::quantile_sorted;
pub use preprocess::{
    encode_resolution, kfold, remove_outliers, resolution_label, split, OutlierFences,
    OutlierPolicy, SplitFractions,
};
pub use scaling::{
    default_allowed_ranges, discretize, fit_discretizer, fit_scaler, AllowedRange, DiscretizerSpec,
    FeatureGrid, ScalerSpec,
};

pub const FPS: &str = "FPS";
pub const PING_AVG: &str = "Ping avg";
pub const RESOLUTION: &str = "Resolution";
pub const RSRP: &str = "RSRP";
pub const SINR: &str = "SINR";
pub const RSRQ: &str = "RSRQ";
pub const RSSI: &str = "RSSI";
pub const PING_HOST_LOSS: &str = "Ping Host Loss";
pub const PRBS: &str = "PRBs";

/// Input features in canonical order. Tie-breaks and exports follow this order.
pub const CANONICAL_FEATURES: [&str; 9] = [
    FPS,
    PING_AVG,
    RESOLUTION,
    RSRP,
    SINR,
    RSRQ,
    RSSI,
    PING_HOST_LOSS,
    PRBS,
];

/// Network-condition features, i.e. everything the optimizer does not control.
pub const CONDITION_FEATURES: [&str; 6] = [PING_AVG, RSRP, SINR, RSRQ, RSSI, PING_HOST_LOSS];

/// Position of `name` in [`CANONICAL_FEATURES`], or `usize::MAX` for extras.
pub fn canonical_rank(name: &str) -> usize {
    CANONICAL_FEATURES
        .iter()
        .position(|f| *f == name)
        .unwrap_or(usize::MAX)
}

/// Key quality indicators predicted by the regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kqi {
    Latency,
    FreezePercentage,
    Efps,
}

impl Kqi {
    pub const ALL: [Kqi; 3] = [Kqi::Latency, Kqi::FreezePercentage, Kqi::Efps];

    /// Canonical column name.
    pub fn name(self) -> &'static str {
        match self {
            Kqi::Latency => "Latency",
            Kqi::FreezePercentage => "Freeze Percentage",
            Kqi::Efps => "EFPS",
        }
    }

    /// Short lowercase tag used in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Kqi::Latency => "latency",
            Kqi::FreezePercentage => "freeze",
            Kqi::Efps => "efps",
        }
    }
}

impl fmt::Display for Kqi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kqi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "latency" => Ok(Kqi::Latency),
            "freeze" | "freezepercentage" | "freezepct" => Ok(Kqi::FreezePercentage),
            "efps" | "effectivefps" => Ok(Kqi::Efps),
            _ => Err(Error::UnknownTarget(s.to_string())),
        }
    }
}

/// Target KQI values of one measurement. Freeze percentage is a fraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub latency: f64,
    pub freeze: f64,
    pub efps: f64,
}

impl Targets {
    pub fn get(&self, kqi: Kqi) -> f64 {
        match kqi {
            Kqi::Latency => self.latency,
            Kqi::FreezePercentage => self.freeze,
            Kqi::Efps => self.efps,
        }
    }

    pub fn set(&mut self, kqi: Kqi, value: f64) {
        match kqi {
            Kqi::Latency => self.latency = value,
            Kqi::FreezePercentage => self.freeze = value,
            Kqi::Efps => self.efps = value,
        }
    }
}

/// One cloud-gaming measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: BTreeMap<String, f64>,
    pub targets: Targets,
}

impl Sample {
    pub fn new(features: BTreeMap<String, f64>, targets: Targets) -> Self {
        Sample { features, targets }
    }

    pub fn feature(&self, name: &str) -> Result<f64> {
        self.features
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn target(&self, kqi: Kqi) -> f64 {
        self.targets.get(kqi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split tag \"{other}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Csv(String),
    Synthetic { seed: u64 },
    Derived,
}

/// Ordered samples with an optional train/val/test assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
    /// One tag per sample once [`split`] has run.
    pub splits: Option<Vec<Split>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: Vec<Sample>, provenance: Provenance) -> Self {
        Dataset {
            feature_names,
            samples,
            splits: None,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples tagged with `which`. Empty when the dataset has not been split.
    pub fn subset(&self, which: Split) -> Vec<&Sample> {
        match &self.splits {
            Some(tags) => self
                .samples
                .iter()
                .zip(tags)
                .filter(|(_, t)| **t == which)
                .map(|(s, _)| s)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Training samples; the whole dataset when no split has been assigned.
    pub fn train(&self) -> Vec<&Sample> {
        match self.splits {
            Some(_) => self.subset(Split::Train),
            None => self.samples.iter().collect(),
        }
    }

    pub fn val(&self) -> Vec<&Sample> {
        self.subset(Split::Val)
    }

    pub fn test(&self) -> Vec<&Sample> {
        self.subset(Split::Test)
    }

    /// New unsplit dataset holding clones of `samples`.
    pub fn from_refs(&self, samples: &[&Sample]) -> Dataset {
        Dataset::new(
            self.feature_names.clone(),
            samples.iter().map(|s| (*s).clone()).collect(),
            Provenance::Derived,
        )
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        (self.train().len(), self.val().len(), self.test().len())
    }

    /// Column of one feature over `samples`.
    pub fn column(samples: &[&Sample], feature: &str) -> Result<Vec<f64>> {
        samples.iter().map(|s| s.feature(feature)).collect()
    }

    pub fn target_column(samples: &[&Sample], kqi: Kqi) -> Vec<f64> {
        samples.iter().map(|s| s.target(kqi)).collect()
    }
}
