//! Discrete maximization over product grids.
//!
//! [`ttopt_maximize`] runs alternating TT-cross sweeps: at every dimension
//! it evaluates the objective on (left set × local index) × right set, and
//! refreshes the index sets with [`maxvol`] applied to an orthonormal basis of
//! the transformed values. Every raw evaluation feeds a best-seen record, so
//! the returned point is always one the objective was actually evaluated at.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: Vec<Dimension>,
}

impl Grid {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("grid has no dimensions"));
        }
        for d in &dims {
            if d.values.is_empty() {
                return Err(Error::config(format!("grid dimension {} is empty", d.name)));
            }
            if d.values.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::config(format!(
                    "grid dimension {} is not strictly increasing",
                    d.name
                )));
            }
        }
        Ok(Grid { dims })
    }

    /// Dimensions `0..n_k` for each size, values equal to indices.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        Grid::new(
            sizes
                .iter()
                .enumerate()
                .map(|(k, &n)| Dimension {
                    name: format!("x{k}"),
                    values: (0..n).map(|i| i as f64).collect(),
                })
                .collect(),
        )
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.values.len()).collect()
    }

    /// Number of grid points, saturating.
    pub fn size(&self) -> usize {
        self.dims
            .iter()
            .fold(1usize, |a, d| a.saturating_mul(d.values.len()))
    }

    pub fn values_at(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.dims)
            .map(|(&i, d)| d.values[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_index: Vec<usize>,
    pub best_values: Vec<f64>,
    pub best_value: f64,
    /// Calls made to the objective.
    pub evaluations: usize,
    pub sweeps: usize,
    pub wall_time_ms: f64,
    /// Evaluated points whose value equals `best_value` exactly.
    pub tie_count: usize,
    /// `(evaluation number, best value)` at every strict improvement.
    pub trace: Vec<(usize, f64)>,
}

impl OptResult {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &OptResult) -> bool {
        let mut a = self.clone();
        a.wall_time_ms = other.wall_time_ms;
        &a == other
    }
}

pub const SHARPNESS: f64 = 0.05;
pub const MAXVOL_TOL: f64 = 0.01;
pub const MAXVOL_MAX_ITER: usize = 100;
const JITTER: f64 = 1e-12;

/// Rows of `a` (n×r, n ≥ r) spanning a dominant r×r submatrix: every entry
/// of `a · a[I]⁻¹` is at most `1 + delta` in magnitude, unless `max_iter`
/// swaps were used up first.
pub fn maxvol(a: &DMatrix<f64>, delta: f64, max_iter: usize) -> Result<Vec<usize>> {
    let (n, r) = a.shape();
    if r == 0 || n < r {
        return Err(Error::config(format!(
            "maxvol needs n >= r >= 1, got {n}x{r}"
        )));
    }
    let (mut rows, work) = match pivot_rows(a) {
        Some(rows) => (rows, a.clone()),
        None => {
            let mut j = a.clone();
            for k in 0..r {
                j[(k, k)] += JITTER;
            }
            (pivot_rows(&j).ok_or(Error::NumericalRank)?, j)
        }
    };
    for _ in 0..max_iter {
        let b = coefficients(&work, &rows)?;
        let (mut bi, mut bj, mut bv) = (0, 0, 0.0);
        for i in 0..n {
            for j in 0..r {
                let v = b[(i, j)].abs();
                if v > bv {
                    (bi, bj, bv) = (i, j, v);
                }
            }
        }
        if bv <= 1.0 + delta {
            break;
        }
        rows[bj] = bi;
    }
    Ok(rows)
}

/// Pivot rows of Gaussian elimination with partial pivoting, or `None` when
/// a pivot vanishes.
fn pivot_rows(a: &DMatrix<f64>) -> Option<Vec<usize>> {
    let (n, r) = a.shape();
    let mut m = a.clone();
    let mut used = vec![false; n];
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut rows = Vec::with_capacity(r);
    for c in 0..r {
        let (mut p, mut pv) = (usize::MAX, 0.0);
        for i in (0..n).filter(|&i| !used[i]) {
            if m[(i, c)].abs() > pv {
                (p, pv) = (i, m[(i, c)].abs());
            }
        }
        if p == usize::MAX || pv <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        used[p] = true;
        rows.push(p);
        for i in (0..n).filter(|&i| !used[i]) {
            let f = m[(i, c)] / m[(p, c)];
            for k in c..r {
                m[(i, k)] -= f * m[(p, k)];
            }
        }
    }
    Some(rows)
}

fn coefficients(a: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    let sub = a.select_rows(rows);
    let inv = sub.try_inverse().ok_or(Error::NumericalRank)?;
    Ok(a * inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtoptConfig {
    pub rank: usize,
    /// `None` means `10 · rank · Σ n_k`.
    pub budget: Option<usize>,
    /// Consecutive sweeps without improvement before stopping.
    pub patience: usize,
    /// Width of the arctan transform relative to the value spread of the
    /// current matrix; smaller values concentrate maxvol on near-best rows.
    pub sharpness: f64,
    pub seed: u64,
}

impl Default for TtoptConfig {
    fn default() -> Self {
        TtoptConfig {
            rank: 4,
            budget: None,
            patience: 3,
            sharpness: SHARPNESS,
            seed: 0,
        }
    }
}

impl TtoptConfig {
    pub fn budget_for(&self, grid: &Grid) -> usize {
        self.budget
            .unwrap_or(10 * self.rank * grid.sizes().iter().sum::<usize>())
    }
}

struct Search<F> {
    f: F,
    cache: HashMap<Vec<usize>, f64>,
    budget: usize,
    best: Option<(Vec<usize>, f64)>,
    ties: usize,
    trace: Vec<(usize, f64)>,
}

impl<F: FnMut(&[usize]) -> f64> Search<F> {
    fn eval(&mut self, idx: Vec<usize>) -> Option<f64> {
        if let Some(&v) = self.cache.get(&idx) {
            return Some(v);
        }
        if self.cache.len() >= self.budget {
            return None;
        }
        let v = (self.f)(&idx);
        self.record(&idx, v);
        self.cache.insert(idx, v);
        Some(v)
    }

    fn record(&mut self, idx: &[usize], v: f64) {
        let n = self.cache.len() + 1;
        match &mut self.best {
            None => {
                self.best = Some((idx.to_vec(), v));
                self.ties = 1;
                self.trace.push((n, v));
            }
            Some((bi, bv)) => {
                if v > *bv {
                    *bi = idx.to_vec();
                    *bv = v;
                    self.ties = 1;
                    self.trace.push((n, v));
                } else if v == *bv {
                    self.ties += 1;
                    if idx < bi.as_slice() {
                        *bi = idx.to_vec();
                    }
                }
            }
        }
    }

    /// Evaluates `rows × cols` where each point is `row ++ col`; `None` once
    /// the budget runs out.
    fn matrix(&mut self, rows: &[Vec<usize>], cols: &[Vec<usize>]) -> Option<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                let mut idx = r.clone();
                idx.extend_from_slice(c);
                m[(i, j)] = self.eval(idx)?;
            }
        }
        Some(m)
    }

    fn best_value(&self) -> f64 {
        self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1)
    }

    /// Rows of `m` chosen by maxvol on an orthonormal basis of the
    /// transformed values.
    fn select(&self, m: &DMatrix<f64>, sharpness: f64) -> Result<Vec<usize>> {
        let best = self.best_value();
        let (lo, hi) = m
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let spread = sharpness * if hi > lo { hi - lo } else { 1.0 };
        let g = m.map(|y| FRAC_PI_2 + ((y - best) / spread).atan());
        let q = g.qr().q();
        maxvol(&q, MAXVOL_TOL, MAXVOL_MAX_ITER)
    }
}

/// TT-cross maximization. The budget caps distinct evaluations, which are
/// cached so repeated fibers cost nothing.
pub fn ttopt_maximize<F>(f: F, grid: &Grid, cfg: &TtoptConfig) -> Result<OptResult>
where
    F: FnMut(&[usize]) -> f64,
{
    let start = Instant::now();
    let sizes = grid.sizes();
    let d = sizes.len();
    let r = cfg.rank;
    if r == 0 {
        return Err(Error::config("ttopt rank must be at least 1"));
    }
    if !(cfg.sharpness > 0.0) {
        return Err(Error::config("ttopt sharpness must be positive"));
    }
    if cfg.patience == 0 {
        return Err(Error::config("ttopt patience must be at least 1"));
    }
    let budget = cfg.budget_for(grid);
    let min_budget = r * sizes.iter().sum::<usize>();
    if budget < min_budget {
        return Err(Error::config(format!(
            "ttopt budget {budget} is below rank * sum(n_k) = {min_budget}"
        )));
    }

    let mut rng = seeded_rng(cfg.seed);
    // left[k]: prefixes over dims 0..k; right[k]: suffixes over dims k+1..d.
    let mut left: Vec<Vec<Vec<usize>>> = vec![vec![]; d];
    left[0] = vec![vec![]];
    let mut right: Vec<Vec<Vec<usize>>> = vec![vec![]; d];
    right[d - 1] = vec![vec![]];
    for k in (0..d - 1).rev() {
        let mut cand: Vec<Vec<usize>> = (0..sizes[k + 1])
            .flat_map(|i| {
                right[k + 1].iter().map(move |s| {
                    let mut v = vec![i];
                    v.extend_from_slice(s);
                    v
                })
            })
            .collect();
        cand.shuffle(&mut rng);
        cand.truncate(r);
        cand.sort();
        right[k] = cand;
    }

    let mut s = Search {
        f,
        cache: HashMap::new(),
        budget,
        best: None,
        ties: 0,
        trace: Vec::new(),
    };
    let mut sweeps = 0;
    let mut stale = 0;
    'outer: loop {
        let before_best = s.best_value();
        let before_evals = s.cache.len();
        let forward = sweeps % 2 == 0;
        sweeps += 1;
        if forward {
            for k in 0..d {
                let rows = extend_right(&left[k], sizes[k]);
                let Some(m) = s.matrix(&rows, &right[k]) else {
                    break 'outer;
                };
                if k + 1 < d {
                    let sel = s.select(&m, cfg.sharpness)?;
                    let mut next: Vec<Vec<usize>> =
                        sel.into_iter().map(|i| rows[i].clone()).collect();
                    next.sort();
                    left[k + 1] = next;
                }
            }
        } else {
            for k in (0..d).rev() {
                let rows = extend_left(sizes[k], &right[k]);
                // Row layout (i ++ suffix), column layout prefix; points are prefix ++ row.
                let Some(mt) = s.matrix(&left[k], &rows) else {
                    break 'outer;
                };
                if k > 0 {
                    let sel = s.select(&mt.transpose(), cfg.sharpness)?;
                    let mut next: Vec<Vec<usize>> =
                        sel.into_iter().map(|i| rows[i].clone()).collect();
                    next.sort();
                    right[k - 1] = next;
                }
            }
        }
        if s.best_value() > before_best {
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience || (s.cache.len() == before_evals && sweeps >= 2) {
            break;
        }
    }
    let (best_index, best_value) = s.best.clone().expect("at least one evaluation");
    Ok(OptResult {
        best_values: grid.values_at(&best_index),
        best_index,
        best_value,
        evaluations: s.cache.len(),
        sweeps,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        tie_count: s.ties,
        trace: s.trace,
    })
}

fn extend_right(prefixes: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    prefixes
        .iter()
        .flat_map(|p| {
            (0..n).map(move |i| {
                let mut v = p.clone();
                v.push(i);
                v
            })
        })
        .collect()
}

fn extend_left(n: usize, suffixes: &[Vec<usize>]) -> Vec<Vec<usize>> {
    (0..n)
        .flat_map(|i| {
            suffixes.iter().map(move |s| {
                let mut v = vec![i];
                v.extend_from_slice(s);
                v
            })
        })
        .collect()
}

pub const MAX_BRUTE_FORCE_POINTS: usize = 10_000_000;

/// Exhaustive scan in lexicographic order; ties keep the smallest index.
pub fn brute_force_maximize<F>(mut f: F, grid: &Grid) -> Result<OptResult>
where
    F: FnMut(&[usize]) -> f64,
{
    let start = Instant::now();
    let total = grid.size();
    if total > MAX_BRUTE_FORCE_POINTS {
        return Err(Error::TooLarge(format!(
            "grid has {total} points, brute force allows {MAX_BRUTE_FORCE_POINTS}"
        )));
    }
    let sizes = grid.sizes();
    let mut idx = vec![0usize; sizes.len()];
    let mut best_index = idx.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut ties = 0;
    let mut trace = Vec::new();
    for n in 1..=total {
        let v = f(&idx);
        if v > best_value || n == 1 {
            best_value = v;
            best_index.copy_from_slice(&idx);
            ties = 1;
            trace.push((n, v));
        } else if v == best_value {
            ties += 1;
        }
        for k in (0..sizes.len()).rev() {
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(OptResult {
        best_values: grid.values_at(&best_index),
        best_index,
        best_value,
        evaluations: total,
        sweeps: 1,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        tie_count: ties,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded_rng(seed);
        DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn maxvol_identity_rows() {
        let mut a = DMatrix::zeros(6, 3);
        for k in 0..3 {
            a[(k, k)] = 1.0;
        }
        let mut rows = maxvol(&a, MAXVOL_TOL, MAXVOL_MAX_ITER).unwrap();
        rows.sort();
        assert_eq!(rows, vec![0, 1, 2]);
    }

    #[test]
    fn maxvol_square_takes_all_rows() {
        let a = random_matrix(4, 4, 1);
        let mut rows = maxvol(&a, MAXVOL_TOL, MAXVOL_MAX_ITER).unwrap();
        rows.sort();
        assert_eq!(rows, vec![0, 1, 2, 3]);
    }

    #[test]
    fn maxvol_dominance_and_volume() {
        let a = random_matrix(20, 3, 7);
        let rows = maxvol(&a, MAXVOL_TOL, MAXVOL_MAX_ITER).unwrap();
        let b = coefficients(&a, &rows).unwrap();
        assert!(b.iter().all(|v| v.abs() <= 1.0 + MAXVOL_TOL + 1e-12));
        let ours = a.select_rows(&rows).determinant().abs();
        let (mut total, mut beaten) = (0, 0);
        for i in 0..20 {
            for j in i + 1..20 {
                for k in j + 1..20 {
                    total += 1;
                    if a.select_rows(&[i, j, k]).determinant().abs() > ours {
                        beaten += 1;
                    }
                }
            }
        }
        assert_eq!(total, 1140);
        assert!(
            beaten * 100 <= total,
            "{beaten} of {total} subsets beat maxvol"
        );
    }

    #[test]
    fn maxvol_rank_deficient_errors() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let rows = maxvol(&a, MAXVOL_TOL, MAXVOL_MAX_ITER).unwrap();
        assert_ne!(rows[0], rows[1]);
        let z = DMatrix::<f64>::zeros(4, 2);
        assert!(maxvol(&z, MAXVOL_TOL, MAXVOL_MAX_ITER).is_ok());
        let nan = DMatrix::from_element(4, 2, f64::NAN);
        assert!(matches!(
            maxvol(&nan, MAXVOL_TOL, MAXVOL_MAX_ITER),
            Err(Error::NumericalRank)
        ));
    }

    #[test]
    fn one_dimensional_is_exhaustive() {
        let grid = Grid::from_sizes(&[106]).unwrap();
        let f = |i: &[usize]| ((i[0] as f64) * 0.37).sin();
        let bf = brute_force_maximize(f, &grid).unwrap();
        let t = ttopt_maximize(f, &grid, &TtoptConfig::default()).unwrap();
        assert_eq!(t.best_index, bf.best_index);
        assert_eq!(t.evaluations, 106);
    }

    #[test]
    fn separable_ten_cubed() {
        let grid = Grid::from_sizes(&[10, 10, 10]).unwrap();
        for seed in 0..100u64 {
            let mut rng = seeded_rng(1000 + seed);
            let t: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..10).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let f = |i: &[usize]| t[0][i[0]] + t[1][i[1]] + t[2][i[2]];
            let bf = brute_force_maximize(f, &grid).unwrap();
            let cfg = TtoptConfig {
                seed,
                ..TtoptConfig::default()
            };
            let r = ttopt_maximize(f, &grid, &cfg).unwrap();
            assert_eq!(r.best_index, bf.best_index, "seed {seed}");
            assert!(r.evaluations <= 1200);
        }
    }

    #[test]
    fn two_dimensional_full_rank_matches_brute_force() {
        for seed in 0..50u64 {
            let mut rng = seeded_rng(seed);
            let (n1, n2) = (rng.gen_range(1..8), rng.gen_range(1..8));
            let table: Vec<f64> = (0..n1 * n2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grid = Grid::from_sizes(&[n1, n2]).unwrap();
            let f = |i: &[usize]| table[i[0] * n2 + i[1]];
            let cfg = TtoptConfig {
                rank: n1.min(n2),
                seed,
                ..TtoptConfig::default()
            };
            let r = ttopt_maximize(f, &grid, &cfg).unwrap();
            let bf = brute_force_maximize(f, &grid).unwrap();
            assert_eq!(r.best_value, bf.best_value, "seed {seed} {n1}x{n2}");
        }
    }

    #[test]
    fn brute_force_flat_and_delta() {
        let grid = Grid::from_sizes(&[3, 4, 2]).unwrap();
        let r = brute_force_maximize(|_| 1.0, &grid).unwrap();
        assert_eq!(
            (r.best_index.clone(), r.tie_count, r.evaluations),
            (vec![0, 0, 0], 24, 24)
        );
        let r = brute_force_maximize(|i| if i == [2, 1, 1] { 1.0 } else { 0.0 }, &grid).unwrap();
        assert_eq!((r.best_index, r.tie_count), (vec![2, 1, 1], 1));
    }

    #[test]
    fn brute_force_too_large() {
        let grid = Grid::from_sizes(&[1000, 1000, 11]).unwrap();
        assert!(matches!(
            brute_force_maximize(|_| 0.0, &grid),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn budget_below_minimum_is_config_error() {
        let grid = Grid::from_sizes(&[5, 5]).unwrap();
        let cfg = TtoptConfig {
            rank: 2,
            budget: Some(19),
            ..TtoptConfig::default()
        };
        assert!(matches!(
            ttopt_maximize(|_| 0.0, &grid, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![]).is_err());
        let bad = Dimension {
            name: "a".into(),
            values: vec![1.0, 1.0],
        };
        assert!(Grid::new(vec![bad]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn accounting_budget_and_determinism(
            sizes in proptest::collection::vec(1usize..7, 1..5),
            rank in 1usize..4,
            extra in 0usize..200,
            seed in 0u64..1000,
            fseed in 0u64..1000,
        ) {
            let grid = Grid::from_sizes(&sizes).unwrap();
            let mut rng = seeded_rng(fseed);
            let w: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |i: &[usize]| i.iter().enumerate().map(|(k, &x)| w[k] * (x as f64 + w[k + 8]).sin() * w[(x + k) % 32]).sum::<f64>();
            let budget = rank * sizes.iter().sum::<usize>() + extra;
            let cfg = TtoptConfig { rank, budget: Some(budget), seed, ..TtoptConfig::default() };
            let mut calls = 0usize;
            let mut seen = f64::NEG_INFINITY;
            let mut monotone = true;
            let r = ttopt_maximize(|i| { calls += 1; let v = f(i); seen = seen.max(v); v }, &grid, &cfg).unwrap();
            prop_assert_eq!(r.evaluations, calls);
            prop_assert!(calls <= budget);
            prop_assert_eq!(r.best_value, seen);
            prop_assert_eq!(f(&r.best_index), r.best_value);
            for w in r.trace.windows(2) {
                monotone &= w[0].0 < w[1].0 && w[0].1 < w[1].1;
            }
            prop_assert!(monotone);
            let again = ttopt_maximize(f, &grid, &cfg).unwrap();
            prop_assert!(again.same_outcome(&r));
        }
    }
}
