//! Cloud-gaming QoE estimation and network-configuration optimization.
//!
//! The crate covers the whole offline/online pipeline:
//!
//! * [`dataset`]: CSV ingestion, outlier filtering, splits, min-max scaling,
//!   integer-grid discretization and a synthetic data generator.
//! * [`feature_ranking`]: histogram mutual information and the center-out
//!   feature ordering used by the tensor-train regressor.
//! * [`metrics`]: MASE and a load/inference timing harness.
//! * [`qubo_ensemble`]: a boosted-tree ensemble whose weights are chosen by
//!   solving a QUBO (simulated annealing or exhaustive search).
//! * [`tt_regressor`]: a tensor-train regressor over discretized features.
//! * [`ttopt`]: maxvol-driven TT-cross maximization over discrete grids and a
//!   brute-force reference.
//! * [`qoe_objective`]: the service/network trade-off objective over
//!   (PRB, resolution, FPS) decisions.

pub mod dataset;
pub mod error;
pub mod feature_ranking;
pub mod metrics;
pub mod qoe_objective;
pub mod qubo_ensemble;
pub mod tt_regressor;
pub mod ttopt;

pub use error::{Error, Result};

/// Seeded generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

pub(crate) fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
