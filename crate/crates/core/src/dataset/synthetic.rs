//! Synthetic cloud-gaming measurements with a closed-form ground truth.
//!
//! Feature distributions (all independent):
//!
//! | feature        | distribution                  |
//! |----------------|-------------------------------|
//! | FPS            | uniform over {30, 60, 120}    |
//! | Resolution     | uniform over {0, 1, 2, 3}     |
//! | PRBs           | uniform integer in 5..=106    |
//! | Ping avg       | U(10, 80) ms                  |
//! | Ping Host Loss | U(0, 0.05)                    |
//! | SINR           | U(-5, 30) dB                  |
//! | RSRP           | U(-120, -70) dBm              |
//! | RSRQ           | U(-20, -3) dB                 |
//! | RSSI           | U(-90, -40) dBm               |
//!
//! Ground truth (version [`GROUND_TRUTH_VERSION`]):
//!
//! ```text
//! latency = 20 + ping + 8·res + 0.15·fps + 1500 / (prb + 10)
//! efps    = fps · (1 − 0.6·exp(−prb / 25)) · (1 − 4·loss) · (1 − 0.05·res)
//! freeze  = 0.25 · (1 − exp(−(ping / 60 + 12·loss))) + 0.02·res
//! ```
//!
//! Latency is additive in the features; EFPS is a product of per-feature
//! factors. SINR, RSRP, RSRQ and RSSI carry no signal. Noise is additive
//! Gaussian with standard deviation `noise × scale`, scales 30 ms (latency),
//! 15 fps (EFPS) and 0.05 (freeze); noisy targets are clamped to be
//! non-negative and freeze to at most 1.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::{seeded_rng, Error, Result};

pub const GROUND_TRUTH_VERSION: &str = "synthetic-gt-v1";

pub const FPS_CHOICES: [f64; 3] = [30.0, 60.0, 120.0];
pub const LATENCY_NOISE_SCALE: f64 = 30.0;
pub const EFPS_NOISE_SCALE: f64 = 15.0;
pub const FREEZE_NOISE_SCALE: f64 = 0.05;

/// Noise-free targets for a feature map holding the canonical features.
pub fn ground_truth(features: &BTreeMap<String, f64>) -> Result<Targets> {
    let get = |k: &str| {
        features
            .get(k)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(k.to_string()))
    };
    let fps = get(FPS)?;
    let res = get(RESOLUTION)?;
    let prb = get(PRBS)?;
    let ping = get(PING_AVG)?;
    let loss = get(PING_HOST_LOSS)?;
    Ok(Targets {
        latency: 20.0 + ping + 8.0 * res + 0.15 * fps + 1500.0 / (prb + 10.0),
        efps: fps * (1.0 - 0.6 * (-prb / 25.0).exp()) * (1.0 - 4.0 * loss) * (1.0 - 0.05 * res),
        freeze: 0.25 * (1.0 - (-(ping / 60.0 + 12.0 * loss)).exp()) + 0.02 * res,
    })
}

pub fn generate_synthetic(n: usize, seed: u64, noise: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyInput("synthetic generator needs n >= 1".into()));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidValue {
            what: "noise".into(),
            value: noise,
        });
    }
    let mut rng = seeded_rng(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut f = BTreeMap::new();
        f.insert(FPS.to_string(), FPS_CHOICES[rng.gen_range(0..3)]);
        f.insert(PING_AVG.to_string(), rng.gen_range(10.0..80.0));
        f.insert(RESOLUTION.to_string(), f64::from(rng.gen_range(0u8..4)));
        f.insert(RSRP.to_string(), rng.gen_range(-120.0..-70.0));
        f.insert(SINR.to_string(), rng.gen_range(-5.0..30.0));
        f.insert(RSRQ.to_string(), rng.gen_range(-20.0..-3.0));
        f.insert(RSSI.to_string(), rng.gen_range(-90.0..-40.0));
        f.insert(PING_HOST_LOSS.to_string(), rng.gen_range(0.0..0.05));
        f.insert(PRBS.to_string(), f64::from(rng.gen_range(5u32..=106)));

        let mut t = ground_truth(&f)?;
        if noise > 0.0 {
            t.latency += noise * LATENCY_NOISE_SCALE * std_normal.sample(&mut rng);
            t.efps += noise * EFPS_NOISE_SCALE * std_normal.sample(&mut rng);
            t.freeze += noise * FREEZE_NOISE_SCALE * std_normal.sample(&mut rng);
            t.latency = t.latency.max(0.0);
            t.efps = t.efps.max(0.0);
            t.freeze = t.freeze.clamp(0.0, 1.0);
        }
        samples.push(Sample::new(f, t));
    }
    Ok(Dataset::new(
        CANONICAL_FEATURES.iter().map(|s| s.to_string()).collect(),
        samples,
        Provenance::Synthetic { seed },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn zero_noise_matches_formula() {
        let d = generate_synthetic(1000, 3, 0.0).unwrap();
        for s in &d.samples {
            let f = |k: &str| s.features[k];
            let lat = 20.0
                + f(PING_AVG)
                + 8.0 * f(RESOLUTION)
                + 0.15 * f(FPS)
                + 1500.0 / (f(PRBS) + 10.0);
            assert_eq!(s.targets.latency, lat);
            assert_eq!(s.targets, ground_truth(&s.features).unwrap());
            assert!(s.targets.freeze >= 0.0 && s.targets.freeze <= 1.0);
            assert!(s.targets.efps >= 0.0);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let export = |seed| {
            let mut buf = Vec::new();
            write_csv(&generate_synthetic(300, seed, 0.1).unwrap(), &mut buf).unwrap();
            buf
        };
        assert_eq!(export(9), export(9));
        assert_ne!(export(9), export(10));
    }

    #[test]
    fn efps_tracks_fps() {
        let d = generate_synthetic(5000, 21, 0.1).unwrap();
        let refs: Vec<&Sample> = d.samples.iter().collect();
        let fps = Dataset::column(&refs, FPS).unwrap();
        let efps = Dataset::target_column(&refs, Kqi::Efps);
        assert!(pearson(&fps, &efps) > 0.5);
    }

    #[test]
    fn ground_truth_monotonicity() {
        let d = generate_synthetic(1, 0, 0.0).unwrap();
        let base = d.samples[0].features.clone();
        let at = |k: &str, v: f64| {
            let mut f = base.clone();
            f.insert(k.into(), v);
            ground_truth(&f).unwrap()
        };
        assert!(at(PRBS, 10.0).latency > at(PRBS, 90.0).latency);
        assert!(at(PRBS, 10.0).efps < at(PRBS, 90.0).efps);
        assert!(at(FPS, 30.0).efps < at(FPS, 120.0).efps);
        assert!(at(PING_AVG, 20.0).freeze < at(PING_AVG, 70.0).freeze);
        assert!(at(PING_HOST_LOSS, 0.0).freeze < at(PING_HOST_LOSS, 0.04).freeze);
    }

    #[test]
    fn rejects_empty_request() {
        assert!(generate_synthetic(0, 0, 0.0).is_err());
    }
}
