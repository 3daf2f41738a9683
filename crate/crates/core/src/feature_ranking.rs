//! Plug-in mutual information between features and KQIs, and the
//! center-out feature ordering used to lay out tensor-train cores.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{canonical_rank, quantile_sorted, Dataset, Kqi};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 20;

/// How a series was discretized before counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSpec {
    /// Few distinct values: one bin per value (sorted).
    Categories(Vec<f64>),
    /// Equal-frequency bins; `edges[k]` separates bin k from bin k + 1.
    Quantile(Vec<f64>),
}

impl BinSpec {
    pub fn bin_count(&self) -> usize {
        match self {
            BinSpec::Categories(v) => v.len(),
            BinSpec::Quantile(e) => e.len() + 1,
        }
    }

    pub fn assign(&self, v: f64) -> usize {
        match self {
            BinSpec::Categories(c) => c
                .binary_search_by(|p| p.total_cmp(&v))
                .unwrap_or_else(|i| i.min(c.len() - 1)),
            BinSpec::Quantile(edges) => edges.partition_point(|e| *e < v),
        }
    }
}

/// Bins a series: native categories when it has at most `bins` distinct
/// values, quantile bins otherwise.
pub fn bin_series(x: &[f64], bins: usize) -> (Vec<usize>, BinSpec) {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    let spec = if distinct.len() <= bins {
        BinSpec::Categories(distinct)
    } else {
        let edges = (1..bins)
            .map(|k| quantile_sorted(&sorted, k as f64 / bins as f64))
            .collect();
        BinSpec::Quantile(edges)
    };
    let idx = x.iter().map(|&v| spec.assign(v)).collect();
    (idx, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Nats.
    pub mi: f64,
    /// Set when either series is constant; `mi` is then 0.
    pub degenerate: bool,
}

pub fn estimate_mi(x: &[f64], y: &[f64], bins: usize) -> Result<MiEstimate> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "mi series lengths {} and {}",
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
    if bins < 2 {
        return Err(Error::config("mi needs at least 2 bins"));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::InvalidValue {
            what: "mi input".into(),
            value: *v,
        });
    }
    let (bx, sx) = bin_series(x, bins);
    let (by, sy) = bin_series(y, bins);
    let (nx, ny) = (sx.bin_count(), sy.bin_count());
    if nx < 2 || ny < 2 {
        return Ok(MiEstimate {
            mi: 0.0,
            degenerate: true,
        });
    }
    Ok(MiEstimate {
        mi: mi_from_bins(&bx, nx, &by, ny),
        degenerate: false,
    })
}

/// Eq.-style plug-in sum over the joint histogram. Terms are summed in sorted
/// order so that swapping the arguments gives a bit-identical result.
fn mi_from_bins(bx: &[usize], nx: usize, by: &[usize], ny: usize) -> f64 {
    let n = bx.len() as f64;
    let mut joint = vec![0u32; nx * ny];
    let mut px = vec![0u32; nx];
    let mut py = vec![0u32; ny];
    for (&i, &j) in bx.iter().zip(by) {
        joint[i * ny + j] += 1;
        px[i] += 1;
        py[j] += 1;
    }
    let mut terms = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let c = joint[i * ny + j];
            if c == 0 {
                continue;
            }
            let pxy = f64::from(c) / n;
            let pi = f64::from(px[i]) / n;
            let pj = f64::from(py[j]) / n;
            terms.push(pxy * (pxy / (pi * pj)).ln());
        }
    }
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>().max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    pub feature: String,
    pub target: Kqi,
    pub mi: f64,
    /// 1-based position after sorting.
    pub rank: usize,
    pub degenerate: bool,
    pub bins: usize,
    pub feature_bins: BinSpec,
}

/// MI of every feature against one target, sorted by descending MI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiTable {
    pub rows: Vec<MiRow>,
}

impl MiTable {
    pub fn feature_names(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.feature.clone()).collect()
    }

    /// The `k` highest-ranked rows.
    pub fn top(&self, k: usize) -> MiTable {
        MiTable {
            rows: self.rows.iter().take(k).cloned().collect(),
        }
    }

    /// `feature,target,mi,rank` rows for external plotting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "target", "mi", "rank"])?;
        for r in &self.rows {
            w.write_record([
                r.feature.clone(),
                r.target.name().to_string(),
                r.mi.to_string(),
                r.rank.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<mi csv>", e))?;
        Ok(())
    }
}

/// Ranks the dataset's features by MI with `target` on the train split.
/// Exact ties keep canonical feature order.
pub fn rank_features(d: &Dataset, target: &str, bins: usize) -> Result<MiTable> {
    let kqi: Kqi = target.parse()?;
    let train = d.train();
    if train.is_empty() {
        return Err(Error::EmptyInput(
            "feature ranking needs a train split".into(),
        ));
    }
    let y = Dataset::target_column(&train, kqi);
    let mut rows = Vec::with_capacity(d.feature_names.len());
    for f in &d.feature_names {
        let x = Dataset::column(&train, f)?;
        let est = estimate_mi(&x, &y, bins)?;
        let (_, spec) = bin_series(&x, bins);
        rows.push(MiRow {
            feature: f.clone(),
            target: kqi,
            mi: est.mi,
            rank: 0,
            degenerate: est.degenerate,
            bins,
            feature_bins: spec,
        });
    }
    rows.sort_by(|a, b| {
        b.mi.total_cmp(&a.mi)
            .then_with(|| canonical_rank(&a.feature).cmp(&canonical_rank(&b.feature)))
            .then_with(|| a.feature.cmp(&b.feature))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(MiTable { rows })
}

/// Feature order for tensor-train cores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOrder {
    pub names: Vec<String>,
    pub center_out: bool,
}

impl FeatureOrder {
    pub fn identity(names: Vec<String>) -> Self {
        FeatureOrder {
            names,
            center_out: false,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Places the top-ranked feature at 1-based position ⌈N/2⌉, then the rest
/// alternately right and left of it.
pub fn center_out_order(ranked: &MiTable) -> Result<FeatureOrder> {
    if ranked.rows.is_empty() {
        return Err(Error::EmptyInput("center-out order of no features".into()));
    }
    Ok(FeatureOrder {
        names: center_out(&ranked.feature_names()),
        center_out: true,
    })
}

pub(crate) fn center_out(ranked: &[String]) -> Vec<String> {
    let n = ranked.len();
    let center = n.div_ceil(2) - 1;
    let mut slots: Vec<Option<String>> = vec![None; n];
    slots[center] = Some(ranked[0].clone());
    let (mut left, mut right) = (center, center);
    for (k, name) in ranked.iter().enumerate().skip(1) {
        let go_right = (k % 2 == 1 && right + 1 < n) || left == 0;
        if go_right {
            right += 1;
            slots[right] = Some(name.clone());
        } else {
            left -= 1;
            slots[left] = Some(name.clone());
        }
    }
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::generate_synthetic;
    use crate::dataset::{split, SplitFractions, FPS};
    use proptest::prelude::*;
    use rand::Rng;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn entropy_of(bins: &[usize]) -> f64 {
        let n = bins.len() as f64;
        let mut counts = std::collections::BTreeMap::new();
        for b in bins {
            *counts.entry(*b).or_insert(0usize) += 1;
        }
        -counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    #[test]
    fn self_information_is_binned_entropy() {
        let x: Vec<f64> = (0..1000)
            .map(|i| (i as f64 * 0.7).sin() * 50.0 + i as f64)
            .collect();
        let est = estimate_mi(&x, &x, 10).unwrap();
        let (b, _) = bin_series(&x, 10);
        let h = entropy_of(&b);
        assert!((est.mi - h).abs() < 1e-12, "{} vs {}", est.mi, h);
        assert!((h - 10f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn independent_uniforms_are_near_zero() {
        let mut rng = crate::seeded_rng(5);
        let x: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        assert!(estimate_mi(&x, &y, 10).unwrap().mi < 0.05);
    }

    #[test]
    fn constant_series_is_degenerate_zero() {
        let x = vec![3.0; 50];
        let y: Vec<f64> = (0..50).map(f64::from).collect();
        let e = estimate_mi(&x, &y, 10).unwrap();
        assert_eq!(e.mi, 0.0);
        assert!(e.degenerate);
    }

    #[test]
    fn input_errors() {
        assert!(estimate_mi(&[1.0, 2.0], &[1.0], 10).is_err());
        assert!(estimate_mi(&[1.0], &[1.0], 10).is_err());
        assert!(estimate_mi(&[1.0, 2.0], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn center_out_examples() {
        assert_eq!(
            center_out(&names(&["A", "B", "C", "D", "E"])),
            names(&["E", "C", "A", "B", "D"])
        );
        assert_eq!(center_out(&names(&["A"])), names(&["A"]));
        assert_eq!(center_out(&names(&["A", "B"])), names(&["A", "B"]));
        assert_eq!(
            center_out(&names(&["A", "B", "C", "D"])),
            names(&["C", "A", "B", "D"])
        );
        assert!(center_out_order(&MiTable { rows: vec![] }).is_err());
    }

    #[test]
    fn fps_ranks_first_for_efps() {
        let d = generate_synthetic(4000, 2, 0.02).unwrap();
        let d = split(&d, SplitFractions::default(), 1).unwrap();
        let t = rank_features(&d, "EFPS", DEFAULT_BINS).unwrap();
        assert_eq!(t.rows[0].feature, FPS);
        assert_eq!(
            t.rows.iter().map(|r| r.rank).collect::<Vec<_>>(),
            (1..=9).collect::<Vec<_>>()
        );
        assert!(matches!(
            rank_features(&d, "Jitter", 20),
            Err(Error::UnknownTarget(_))
        ));
    }

    #[test]
    fn shuffled_targets_carry_no_information() {
        use rand::seq::SliceRandom;
        let mut d = generate_synthetic(10_000, 4, 0.1).unwrap();
        let mut lat: Vec<f64> = d.samples.iter().map(|s| s.targets.latency).collect();
        lat.shuffle(&mut crate::seeded_rng(99));
        for (s, l) in d.samples.iter_mut().zip(lat) {
            s.targets.latency = l;
        }
        let t = rank_features(&d, "latency", DEFAULT_BINS).unwrap();
        assert!(
            t.rows.iter().all(|r| r.mi < 0.05),
            "{:?}",
            t.rows.iter().map(|r| r.mi).collect::<Vec<_>>()
        );
    }

    #[test]
    fn exact_ties_keep_canonical_order() {
        let mut d = generate_synthetic(500, 4, 0.1).unwrap();
        // Same values under every feature -> identical MI everywhere.
        for s in d.samples.iter_mut() {
            let v = s.features["Ping avg"];
            for val in s.features.values_mut() {
                *val = v;
            }
        }
        let t = rank_features(&d, "latency", DEFAULT_BINS).unwrap();
        assert_eq!(t.feature_names(), d.feature_names);
    }

    #[test]
    fn csv_export_has_one_row_per_feature() {
        let d = generate_synthetic(200, 4, 0.1).unwrap();
        let t = rank_features(&d, "freeze", 10).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("feature,target,mi,rank"));
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..300),
            bins in 2usize..25,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let a = estimate_mi(&x, &y, bins).unwrap().mi;
            let b = estimate_mi(&y, &x, bins).unwrap().mi;
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn joint_permutation_invariance(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..200),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::seeded_rng(seed));
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (xs, ys): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
            prop_assert_eq!(estimate_mi(&x, &y, 8).unwrap().mi, estimate_mi(&xs, &ys, 8).unwrap().mi);
        }

        #[test]
        fn center_out_is_permutation(n in 1usize..40) {
            let ranked: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
            let mut out = center_out(&ranked);
            prop_assert_eq!(&out[n.div_ceil(2) - 1], &ranked[0]);
            out.sort();
            let mut expect = ranked.clone();
            expect.sort();
            prop_assert_eq!(out, expect);
        }
    }
}
