//! Tensor-train regression over discretized feature indices.
//!
//! The model value at an index tuple `(i_1, …, i_N)` is the matrix product
//! `G_1[i_1] · G_2[i_2] ⋯ G_N[i_N]` of core slices, with boundary ranks 1.
//! Cores are trained with mini-batch Adam on the squared error of
//! standardized targets.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{discretize, Dataset, DiscretizerSpec, Kqi, Sample};
use crate::feature_ranking::FeatureOrder;
use crate::metrics::{mae, mase_vs_mean};
use crate::qubo_ensemble::standardization;
use crate::{seeded_rng, Error, Result};

/// One core, stored slice-major: entry `(l, i, r)` lives at
/// `i·left·right + l·right + r`, so each slice `G[:, i, :]` is a contiguous
/// row-major `left × right` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub left: usize,
    pub dim: usize,
    pub right: usize,
    pub data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, dim: usize, right: usize) -> Self {
        Core {
            left,
            dim,
            right,
            data: vec![0.0; left * dim * right],
        }
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let s = self.left * self.right;
        &self.data[i * s..(i + 1) * s]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.left * self.right;
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn get(&self, l: usize, i: usize, r: usize) -> f64 {
        self.data[i * self.left * self.right + l * self.right + r]
    }

    pub fn set(&mut self, l: usize, i: usize, r: usize, v: f64) {
        let k = i * self.left * self.right + l * self.right + r;
        self.data[k] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    pub cores: Vec<Core>,
}

impl TensorTrain {
    /// Validates boundary ranks and chaining.
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::config("tensor train needs at least one core"));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::config("tensor train boundary ranks must be 1"));
        }
        for w in cores.windows(2) {
            if w[0].right != w[1].left {
                return Err(Error::config("adjacent core ranks do not match"));
            }
        }
        if cores
            .iter()
            .any(|c| c.dim == 0 || c.data.len() != c.left * c.dim * c.right)
        {
            return Err(Error::config("core shape and data length disagree"));
        }
        Ok(TensorTrain { cores })
    }

    /// Random cores with i.i.d. `N(0, (init_scale/√rank)²)` entries.
    pub fn random(dims: &[usize], rank: usize, init_scale: f64, seed: u64) -> Result<Self> {
        Self::initialized(dims, rank, init_scale, seed, Init::Gaussian)
    }

    pub fn initialized(
        dims: &[usize],
        rank: usize,
        init_scale: f64,
        seed: u64,
        init: Init,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::config("rank must be at least 1"));
        }
        let n = dims.len();
        let sd = init_scale / (rank as f64).sqrt();
        let normal = Normal::new(0.0, sd).map_err(|e| Error::config(e.to_string()))?;
        let mut rng = seeded_rng(seed);
        let cores = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let l = if k == 0 { 1 } else { rank };
                let r = if k + 1 == n { 1 } else { rank };
                let mut c = Core::zeros(l, d, r);
                c.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                if init == Init::IdentityNoise {
                    for i in 0..d {
                        for a in 0..l.min(r) {
                            c.set(a, i, a, c.get(a, i, a) + 1.0);
                        }
                    }
                }
                c
            })
            .collect();
        TensorTrain::new(cores)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.left).collect();
        r.push(1);
        r
    }

    pub fn param_count(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// Position of the first out-of-range index, if any.
    pub fn check(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.cores.len() {
            return Some(idx.len().min(self.cores.len()));
        }
        idx.iter().zip(&self.cores).position(|(&i, c)| i >= c.dim)
    }

    /// Contraction without bounds checks beyond slice indexing.
    pub fn value(&self, idx: &[usize]) -> f64 {
        let mut v = vec![1.0];
        let mut next = Vec::new();
        for (c, &i) in self.cores.iter().zip(idx) {
            next.clear();
            next.resize(c.right, 0.0);
            let s = c.slice(i);
            for (l, &vl) in v.iter().enumerate() {
                let row = &s[l * c.right..(l + 1) * c.right];
                for (o, &g) in next.iter_mut().zip(row) {
                    *o += vl * g;
                }
            }
            std::mem::swap(&mut v, &mut next);
        }
        v[0]
    }

    /// Adds `scale · ∂value/∂G_k[:, i_k, :]` into `grads[k]` for every core
    /// and returns the value.
    pub fn accumulate_gradient(&self, idx: &[usize], scale: f64, grads: &mut [Vec<f64>]) -> f64 {
        let n = self.cores.len();
        // lefts[k] = G_1[i_1]⋯G_{k}[i_k] as a row vector (lefts[0] = [1]).
        let mut lefts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        lefts.push(vec![1.0]);
        for (k, c) in self.cores.iter().enumerate() {
            let s = c.slice(idx[k]);
            let prev = &lefts[k];
            let mut out = vec![0.0; c.right];
            for (l, &vl) in prev.iter().enumerate() {
                for (o, &g) in out.iter_mut().zip(&s[l * c.right..(l + 1) * c.right]) {
                    *o += vl * g;
                }
            }
            lefts.push(out);
        }
        let value = lefts[n][0];
        let mut right = vec![1.0];
        for k in (0..n).rev() {
            let c = &self.cores[k];
            let off = idx[k] * c.left * c.right;
            let g = &mut grads[k][off..off + c.left * c.right];
            for (l, &al) in lefts[k].iter().enumerate() {
                let a = scale * al;
                for (gv, &rv) in g[l * c.right..(l + 1) * c.right].iter_mut().zip(&right) {
                    *gv += a * rv;
                }
            }
            let s = c.slice(idx[k]);
            let mut next = vec![0.0; c.left];
            for (l, o) in next.iter_mut().enumerate() {
                *o = s[l * c.right..(l + 1) * c.right]
                    .iter()
                    .zip(&right)
                    .map(|(a, b)| a * b)
                    .sum();
            }
            right = next;
        }
        value
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.cores.iter().map(|c| vec![0.0; c.data.len()]).collect()
    }
}

/// Core initialization. `IdentityNoise` adds the identity (first row or
/// column on the boundary cores) to the Gaussian draw, so the initial model
/// is close to the constant 1 and long chains do not start near zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Gaussian,
    IdentityNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rank: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Global gradient-norm cap applied to every mini-batch step.
    pub clip_norm: f64,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 4,
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            init_scale: 0.1,
            clip_norm: 10.0,
            init: Init::IdentityNoise,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "rank, epochs and batch size must be at least 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.init_scale > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::config(
                "learning rate, init scale and clip norm must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error on standardized training targets.
    pub train_mse: f64,
    pub val_mae: Option<f64>,
    pub val_mase: Option<f64>,
}

/// Trained tensor-train regressor for one KQI.
#[derive(Debug, Clone, PartialEq)]
pub struct TTModel {
    pub tt: TensorTrain,
    pub order: FeatureOrder,
    /// Grids in core order.
    pub discretizer: DiscretizerSpec,
    pub target: Kqi,
    pub target_mean: f64,
    pub target_std: f64,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TTModel {
    /// Raw (standardized-scale) contraction at an index tuple in core order.
    pub fn tt_forward(&self, idx: &[usize]) -> Result<f64> {
        self.check(idx)?;
        Ok(self.tt.value(idx))
    }

    /// Gradient of `½(value − y)²` for one core tuple given `residual = value − y`.
    pub fn tt_gradient(&self, idx: &[usize], residual: f64) -> Result<Vec<Vec<f64>>> {
        self.check(idx)?;
        let mut g = self.tt.zero_grads();
        self.tt.accumulate_gradient(idx, residual, &mut g);
        Ok(g)
    }

    fn check(&self, idx: &[usize]) -> Result<()> {
        match self.tt.check(idx) {
            None => Ok(()),
            Some(k) => Err(Error::IndexOutOfRange {
                feature: self
                    .order
                    .names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("#{k}")),
                index: idx.get(k).copied().unwrap_or(usize::MAX),
                dim: self.tt.cores.get(k).map_or(0, |c| c.dim),
            }),
        }
    }

    pub fn predict(&self, x: &Sample) -> Result<f64> {
        let idx = discretize(&self.discretizer, x)?;
        Ok(self.target_mean + self.target_std * self.tt_forward(&idx)?)
    }

    pub fn predict_many(&self, xs: &[&Sample]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// The same function with the core chain reversed (slices transposed).
    pub fn reversed(&self) -> TTModel {
        let cores = self
            .tt
            .cores
            .iter()
            .rev()
            .map(|c| {
                let mut t = Core::zeros(c.right, c.dim, c.left);
                for i in 0..c.dim {
                    for l in 0..c.left {
                        for r in 0..c.right {
                            t.set(r, i, l, c.get(l, i, r));
                        }
                    }
                }
                t
            })
            .collect();
        let mut m = self.clone();
        m.tt = TensorTrain { cores };
        m.order.names.reverse();
        m.discretizer.features.reverse();
        m
    }
}

/// Mini-batch Adam on the train split; returns the epoch checkpoint with the
/// lowest validation MAE (train MSE when there is no validation split).
pub fn fit_tt(
    d: &Dataset,
    order: &FeatureOrder,
    discretizer: &DiscretizerSpec,
    target: Kqi,
    cfg: &TrainConfig,
) -> Result<TTModel> {
    cfg.validate()?;
    if order.is_empty() {
        return Err(Error::config("feature order is empty"));
    }
    let grids = discretizer.select(&order.names)?;
    let train = d.train();
    if train.is_empty() {
        return Err(Error::EmptyInput(
            "tensor-train fit on empty train split".into(),
        ));
    }
    let x: Vec<Vec<usize>> = train
        .iter()
        .map(|s| discretize(&grids, s))
        .collect::<Result<_>>()?;
    let y_raw = Dataset::target_column(&train, target);
    let (target_mean, target_std) = standardization(&y_raw);
    let y: Vec<f64> = y_raw
        .iter()
        .map(|v| (v - target_mean) / target_std)
        .collect();

    let val = d.val();
    let val_x: Vec<Vec<usize>> = val
        .iter()
        .map(|s| discretize(&grids, s))
        .collect::<Result<_>>()?;
    let val_y = Dataset::target_column(&val, target);

    let mut tt =
        TensorTrain::initialized(&grids.dims(), cfg.rank, cfg.init_scale, cfg.seed, cfg.init)?;
    let mut adam = Adam::new(&tt);
    let mut rng = seeded_rng(cfg.seed.wrapping_add(1));
    let mut order_idx: Vec<usize> = (0..x.len()).collect();
    let mut grads = tt.zero_grads();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, TensorTrain)> = None;
    for epoch in 1..=cfg.epochs {
        order_idx.shuffle(&mut rng);
        for batch in order_idx.chunks(cfg.batch_size) {
            grads
                .iter_mut()
                .for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let inv = 1.0 / batch.len() as f64;
            for &s in batch {
                let residual = tt.value(&x[s]) - y[s];
                tt.accumulate_gradient(&x[s], residual * inv, &mut grads);
            }
            clip(&mut grads, cfg.clip_norm);
            adam.step(&mut tt, &grads, cfg.learning_rate);
        }
        let train_mse = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| (tt.value(xi) - yi).powi(2))
            .sum::<f64>()
            / x.len() as f64;
        if !train_mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let (val_mae, val_mase) = if val.is_empty() {
            (None, None)
        } else {
            let preds: Vec<f64> = val_x
                .iter()
                .map(|xi| target_mean + target_std * tt.value(xi))
                .collect();
            let m = mae(&preds, &val_y);
            let mase = mase_vs_mean(&preds, &val_y, target_mean)
                .ok()
                .map(|r| r.mase);
            (Some(m), mase)
        };
        history.push(EpochRecord {
            epoch,
            train_mse,
            val_mae,
            val_mase,
        });
        let score = val_mae.unwrap_or(train_mse);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, tt.clone()));
        }
    }
    let (_, best_epoch, tt) = best.expect("at least one epoch");
    Ok(TTModel {
        tt,
        order: order.clone(),
        discretizer: grids,
        target,
        target_mean,
        target_std,
        config: *cfg,
        history,
        best_epoch,
    })
}

fn clip(grads: &mut [Vec<f64>], max_norm: f64) {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(tt: &TensorTrain) -> Self {
        Adam {
            m: tt.zero_grads(),
            v: tt.zero_grads(),
            t: 0,
        }
    }

    fn step(&mut self, tt: &mut TensorTrain, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (k, core) in tt.cores.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for (j, p) in core.data.iter_mut().enumerate() {
                m[j] = Self::BETA1 * m[j] + (1.0 - Self::BETA1) * g[j];
                v[j] = Self::BETA2 * v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
                *p -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

const MAGIC: &[u8; 8] = b"QOETT001";

#[derive(Serialize, Deserialize)]
struct Header {
    shapes: Vec<[usize; 3]>,
    order: FeatureOrder,
    discretizer: DiscretizerSpec,
    target: Kqi,
    target_mean: f64,
    target_std: f64,
    config: TrainConfig,
    history: Vec<EpochRecord>,
    best_epoch: usize,
}

impl TTModel {
    /// `QOETT001`, header length (u64 LE), JSON header, then every core entry
    /// as f64 LE in storage order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            shapes: self
                .tt
                .cores
                .iter()
                .map(|c| [c.left, c.dim, c.right])
                .collect(),
            order: self.order.clone(),
            discretizer: self.discretizer.clone(),
            target: self.target,
            target_mean: self.target_mean,
            target_std: self.target_std,
            config: self.config,
            history: self.history.clone(),
            best_epoch: self.best_epoch,
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 8 * self.tt.param_count());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for v in self.tt.cores.iter().flat_map(|c| &c.data) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io("<tt model>", e))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<tt model>", e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("tt model: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let h: Header = serde_json::from_slice(body)?;
        let mut blob = bytes[16 + hlen..].chunks_exact(8);
        let mut cores = Vec::with_capacity(h.shapes.len());
        for [l, d, r] in &h.shapes {
            let mut c = Core::zeros(*l, *d, *r);
            for v in c.data.iter_mut() {
                let chunk = blob.next().ok_or_else(|| bad("truncated core data"))?;
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            cores.push(c);
        }
        if blob.next().is_some() || !blob.remainder().is_empty() {
            return Err(bad("trailing bytes"));
        }
        let tt = TensorTrain::new(cores)?;
        if h.order.len() != tt.cores.len() || h.discretizer.features.len() != tt.cores.len() {
            return Err(bad("feature count differs from core count"));
        }
        Ok(TTModel {
            tt,
            order: h.order,
            discretizer: h.discretizer,
            target: h.target,
            target_mean: h.target_mean,
            target_std: h.target_std,
            config: h.config,
            history: h.history,
            best_epoch: h.best_epoch,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
