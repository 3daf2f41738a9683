use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Kqi, Sample, Split};
use crate::{seeded_rng, Error, Result};

const RESOLUTION_LABELS: [&str; 4] = ["720p", "1080p", "1440p", "4K"];

/// 720p→0, 1080p→1, 1440p→2, 4K→3 (case-insensitive).
pub fn encode_resolution(label: &str) -> Result<u8> {
    let l = label.trim();
    RESOLUTION_LABELS
        .iter()
        .position(|r| r.eq_ignore_ascii_case(l))
        .map(|i| i as u8)
        .ok_or_else(|| Error::UnknownResolution(label.to_string()))
}

pub fn resolution_label(index: u8) -> Result<&'static str> {
    RESOLUTION_LABELS
        .get(index as usize)
        .copied()
        .ok_or_else(|| Error::InvalidValue {
            what: "resolution index".into(),
            value: f64::from(index),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierPolicy {
    pub iqr_factor: f64,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy { iqr_factor: 1.5 }
    }
}

/// Per-target acceptance intervals `[Q1 - k·IQR, Q3 + k·IQR]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFences {
    pub fences: Vec<(Kqi, f64, f64)>,
}

impl OutlierFences {
    pub fn fit(d: &Dataset, policy: OutlierPolicy) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptyInput("outlier filter on empty dataset".into()));
        }
        let k = policy.iqr_factor;
        if k.is_nan() || k < 0.0 {
            return Err(Error::InvalidValue {
                what: "iqr factor".into(),
                value: k,
            });
        }
        let fences = Kqi::ALL
            .iter()
            .map(|&kqi| {
                if k.is_infinite() {
                    return (kqi, f64::NEG_INFINITY, f64::INFINITY);
                }
                let mut v: Vec<f64> = d.samples.iter().map(|s| s.target(kqi)).collect();
                v.sort_by(f64::total_cmp);
                let q1 = quantile_sorted(&v, 0.25);
                let q3 = quantile_sorted(&v, 0.75);
                let iqr = q3 - q1;
                (kqi, q1 - k * iqr, q3 + k * iqr)
            })
            .collect();
        Ok(OutlierFences { fences })
    }

    /// Keeps samples whose every target lies inside its fence. Split tags of
    /// kept samples are preserved.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let keep: Vec<bool> = d
            .samples
            .iter()
            .map(|s| {
                self.fences
                    .iter()
                    .all(|&(k, lo, hi)| (lo..=hi).contains(&s.target(k)))
            })
            .collect();
        if !keep.iter().any(|&k| k) {
            return Err(Error::DegenerateFilter);
        }
        let samples = d
            .samples
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s.clone())
            .collect();
        let splits = d.splits.as_ref().map(|tags| {
            tags.iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(t, _)| *t)
                .collect()
        });
        Ok(Dataset {
            feature_names: d.feature_names.clone(),
            samples,
            splits,
            provenance: d.provenance.clone(),
        })
    }
}

/// Linear-interpolation quantile of already sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Drops samples with any target outside the IQR fence. Quartiles are
/// computed on `d` itself.
pub fn remove_outliers(d: &Dataset, policy: OutlierPolicy) -> Result<Dataset> {
    OutlierFences::fit(d, policy)?.apply(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    /// `(train, val, test)` sizes: floor for train and val, remainder to test.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let val = floor(self.val).min(n - train);
        (train, val, n - train - val)
    }
}

pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Seeded shuffled train/val/test assignment. Sample order is unchanged.
pub fn split(d: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Dataset> {
    let f = fractions;
    let sum = f.train + f.val + f.test;
    if [f.train, f.val, f.test]
        .iter()
        .any(|x| !x.is_finite() || *x < 0.0)
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(Error::config(format!(
            "split fractions must be non-negative and sum to 1, got ({}, {}, {})",
            f.train, f.val, f.test
        )));
    }
    let n = d.len();
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::TooSmall {
            have: n,
            need: MIN_SPLIT_SAMPLES,
        });
    }
    let (n_train, n_val, _) = f.counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut tags = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        tags[i] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let mut out = d.clone();
    out.splits = Some(tags);
    Ok(out)
}

/// K-fold views of the train and validation samples of `d`: fold `j` tags its
/// own samples `Val` and the rest of the pool `Train`. Test samples are left
/// out. Fold membership comes from a seeded shuffle.
pub fn kfold(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Dataset>> {
    let pool: Vec<&Sample> = match &d.splits {
        Some(_) => d
            .samples
            .iter()
            .zip(d.splits.iter().flatten())
            .filter(|(_, t)| **t != Split::Test)
            .map(|(s, _)| s)
            .collect(),
        None => d.samples.iter().collect(),
    };
    if k < 2 {
        return Err(Error::config("k-fold needs k >= 2"));
    }
    if pool.len() < k {
        return Err(Error::TooSmall {
            have: pool.len(),
            need: k,
        });
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut fold_of = vec![0; pool.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    let base = d.from_refs(&pool);
    Ok((0..k)
        .map(|j| {
            let mut f = base.clone();
            f.splits = Some(
                fold_of
                    .iter()
                    .map(|&g| if g == j { Split::Val } else { Split::Train })
                    .collect(),
            );
            f
        })
        .collect())
}
