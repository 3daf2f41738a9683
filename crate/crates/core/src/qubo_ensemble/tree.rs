use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 3,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Shallow CART regression tree over a scaled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Indices into the feature vector this tree was allowed to split on.
    pub features: Vec<usize>,
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Fits on the rows `idx` of `x`, splitting only on `features`.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        idx: &[usize],
        features: Vec<usize>,
        cfg: TreeConfig,
    ) -> Self {
        let mut tree = RegressionTree {
            features,
            nodes: Vec::new(),
        };
        let mut rows = idx.to_vec();
        tree.grow(x, y, &mut rows, 0, cfg);
        tree
    }

    fn grow(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        rows: &mut [usize],
        depth: usize,
        cfg: TreeConfig,
    ) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= cfg.max_depth || rows.len() < 2 * cfg.min_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(x, y, rows, cfg.min_leaf.max(1)) else {
            return id;
        };
        let mut cut = 0;
        for i in 0..rows.len() {
            if x[rows[i]][feature] <= threshold {
                rows.swap(i, cut);
                cut += 1;
            }
        }
        let (l, r) = rows.split_at_mut(cut);
        let left = self.grow(x, y, l, depth + 1, cfg);
        let right = self.grow(x, y, r, depth + 1, cfg);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(
        &self,
        x: &[Vec<f64>],
        y: &[f64],
        rows: &[usize],
        min_leaf: usize,
    ) -> Option<(usize, f64)> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| y[r]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for &f in &self.features {
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                // Maximizing this is minimizing the children's squared error.
                let gain = left_sum * left_sum / nl as f64 + (total - left_sum).powi(2) / nr as f64;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (a + b)));
                }
            }
        }
        let parent = total * total / n as f64;
        best.filter(|(g, _, _)| *g > parent + 1e-12 * parent.abs())
            .map(|(_, f, t)| (f, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLearnerPool {
    pub learners: Vec<RegressionTree>,
}

impl WeakLearnerPool {
    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    /// Every learner's output on one input.
    pub fn outputs(&self, x: &[f64]) -> Vec<f64> {
        self.learners.iter().map(|t| t.predict(x)).collect()
    }

    /// `h[i][n]`: learner i on row n.
    pub fn output_matrix(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.learners
            .iter()
            .map(|t| x.iter().map(|row| t.predict(row)).collect())
            .collect()
    }
}

/// K trees, each on a bootstrap resample and a random ⌈√F⌉ feature subset.
pub fn train_pool(
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    seed: u64,
    cfg: TreeConfig,
) -> Result<WeakLearnerPool> {
    if k == 0 {
        return Err(Error::config("pool size must be at least 1"));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rows, {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::TooSmall {
            have: x.len(),
            need: 2,
        });
    }
    let f = x[0].len();
    if f == 0 {
        return Err(Error::config("pool needs at least one feature"));
    }
    let subset = (f as f64).sqrt().ceil() as usize;
    let mut rng = seeded_rng(seed);
    let n = x.len();
    let learners = (0..k)
        .map(|_| {
            let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut feats = sample_indices(&mut rng, f, subset).into_vec();
            feats.sort_unstable();
            RegressionTree::fit(x, y, &boot, feats, cfg)
        })
        .collect();
    Ok(WeakLearnerPool { learners })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64 / n as f64, ((i * 7) % n) as f64 / n as f64])
            .collect();
        let y = x.iter().map(|r| 2.0 * r[0] + 0.5).collect();
        (x, y)
    }

    #[test]
    fn single_learner_is_finite_and_shallow() {
        let (x, y) = linear(100);
        let pool = train_pool(&x, &y, 1, 3, TreeConfig::default()).unwrap();
        assert_eq!(pool.len(), 1);
        assert!(pool.learners[0].depth() <= 3);
        assert!(x.iter().all(|r| pool.learners[0].predict(r).is_finite()));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = linear(200);
        let a = train_pool(&x, &y, 8, 5, TreeConfig::default()).unwrap();
        let b = train_pool(&x, &y, 8, 5, TreeConfig::default()).unwrap();
        assert_eq!(a.output_matrix(&x), b.output_matrix(&x));
    }

    #[test]
    fn tree_reduces_error_on_step() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| if i < 20 { 1.0 } else { 5.0 }).collect();
        let idx: Vec<usize> = (0..50).collect();
        let t = RegressionTree::fit(&x, &y, &idx, vec![0], TreeConfig::default());
        assert_eq!(t.predict(&[3.0]), 1.0);
        assert_eq!(t.predict(&[40.0]), 5.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(train_pool(&[vec![1.0]], &[1.0], 4, 0, TreeConfig::default()).is_err());
        let (x, y) = linear(10);
        assert!(train_pool(&x, &y, 0, 0, TreeConfig::default()).is_err());
    }
}
