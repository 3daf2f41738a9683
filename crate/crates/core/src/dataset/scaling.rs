use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::{Error, Result};

/// Min-max parameters fit on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerSpec {
    pub features: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Fits `(x - min) / (max - min)` per feature on the train split of `d`.
pub fn fit_scaler(d: &Dataset, features: &[String]) -> Result<ScalerSpec> {
    let train = d.train();
    if train.is_empty() {
        return Err(Error::EmptyInput("scaler fit on empty train split".into()));
    }
    let mut min = Vec::with_capacity(features.len());
    let mut max = Vec::with_capacity(features.len());
    for f in features {
        let (lo, hi) = train.iter().try_fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), s| -> Result<_> {
                let v = s.feature(f)?;
                Ok((lo.min(v), hi.max(v)))
            },
        )?;
        if hi <= lo {
            return Err(Error::DegenerateFeature(f.clone()));
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(ScalerSpec {
        features: features.to_vec(),
        min,
        max,
    })
}

impl ScalerSpec {
    /// Scaled feature vector; values outside the fit range clamp to [0, 1].
    pub fn apply(&self, x: &Sample) -> Result<Vec<f64>> {
        self.features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let v = x.feature(f)?;
                if !v.is_finite() {
                    return Err(Error::InvalidValue {
                        what: f.clone(),
                        value: v,
                    });
                }
                Ok(self.scale_value(i, v))
            })
            .collect()
    }

    pub fn scale_value(&self, i: usize, v: f64) -> f64 {
        ((v - self.min[i]) / (self.max[i] - self.min[i])).clamp(0.0, 1.0)
    }

    pub fn inverse(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .enumerate()
            .map(|(i, s)| self.min[i] + s * (self.max[i] - self.min[i]))
            .collect()
    }
}

/// Operator-supplied admissible range of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllowedRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Discrete features get `max - min` grid values, continuous ones 100.
    #[serde(default)]
    pub discrete: bool,
}

impl AllowedRange {
    pub fn continuous(name: &str, min: f64, max: f64) -> Self {
        AllowedRange {
            name: name.into(),
            min,
            max,
            discrete: false,
        }
    }

    pub fn discrete(name: &str, min: f64, max: f64) -> Self {
        AllowedRange {
            name: name.into(),
            min,
            max,
            discrete: true,
        }
    }
}

pub const CONTINUOUS_GRID_SIZE: usize = 100;

/// Standard operating ranges for the canonical features.
///
/// Resolution uses `[0, 4]` and PRBs `[1, 107]` so that every admissible
/// discrete value lands in its own cell under the half-open index rule.
pub fn default_allowed_ranges() -> Vec<AllowedRange> {
    use super::*;
    vec![
        AllowedRange::continuous(FPS, 0.0, 120.0),
        AllowedRange::continuous(PING_AVG, 0.0, 200.0),
        AllowedRange::discrete(RESOLUTION, 0.0, 4.0),
        AllowedRange::continuous(RSRP, -140.0, -44.0),
        AllowedRange::continuous(SINR, -23.0, 40.0),
        AllowedRange::continuous(RSRQ, -20.0, -3.0),
        AllowedRange::continuous(RSSI, -120.0, -20.0),
        AllowedRange::continuous(PING_HOST_LOSS, 0.0, 1.0),
        AllowedRange::discrete(PRBS, 1.0, 107.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    pub name: String,
    pub min_allowed: f64,
    pub max_allowed: f64,
    pub n_allowed_vals: usize,
}

impl FeatureGrid {
    /// Nearest grid index, clamped into `[0, n_allowed_vals)`.
    pub fn index(&self, v: f64) -> Result<usize> {
        if v.is_nan() {
            return Err(Error::InvalidValue {
                what: self.name.clone(),
                value: v,
            });
        }
        let n = self.n_allowed_vals as f64;
        let scaled = (v - self.min_allowed) / (self.max_allowed - self.min_allowed) * n;
        let idx = scaled.round().clamp(0.0, n - 1.0);
        Ok(idx as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerSpec {
    pub features: Vec<FeatureGrid>,
}

pub fn fit_discretizer(ranges: &[AllowedRange]) -> Result<DiscretizerSpec> {
    let features = ranges
        .iter()
        .map(|r| {
            if !(r.min.is_finite() && r.max.is_finite()) || r.max <= r.min {
                return Err(Error::config(format!(
                    "allowed range for \"{}\" must satisfy min < max, got [{}, {}]",
                    r.name, r.min, r.max
                )));
            }
            let n = if r.discrete {
                let span = r.max - r.min;
                if span.fract() != 0.0 {
                    return Err(Error::config(format!(
                        "discrete range for \"{}\" must span an integer count",
                        r.name
                    )));
                }
                span as usize
            } else {
                CONTINUOUS_GRID_SIZE
            };
            Ok(FeatureGrid {
                name: r.name.clone(),
                min_allowed: r.min,
                max_allowed: r.max,
                n_allowed_vals: n,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DiscretizerSpec { features })
}

/// Integer index vector in the spec's feature order.
pub fn discretize(spec: &DiscretizerSpec, x: &Sample) -> Result<Vec<usize>> {
    spec.features
        .iter()
        .map(|g| g.index(x.feature(&g.name)?))
        .collect()
}

impl DiscretizerSpec {
    pub fn grid(&self, name: &str) -> Result<&FeatureGrid> {
        self.features
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Spec restricted to `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<DiscretizerSpec> {
        let features = names
            .iter()
            .map(|n| self.grid(n).cloned())
            .collect::<Result<_>>()?;
        Ok(DiscretizerSpec { features })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.features.iter().map(|g| g.n_allowed_vals).collect()
    }
}
