//! Service/network trade-off objective over (PRB, resolution, FPS) decisions.
//!
//! The optimized quantity is `α·F_S + (1−α)·(1 − F_N(PRB))`, so `α = 0`
//! minimizes PRB usage and `α = 1` maximizes service quality. Setting
//! [`ObjectiveSpec::literal`] switches the network term to `F_N` itself.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::synthetic::ground_truth;
use crate::dataset::{Sample, Targets, FPS, PRBS, RESOLUTION};
use crate::qubo_ensemble::EnsembleModel;
use crate::tt_regressor::TTModel;
use crate::ttopt::{brute_force_maximize, ttopt_maximize, Dimension, Grid, OptResult, TtoptConfig};
use crate::{Error, Result};

pub const PRB_DOMAIN_MAX: u32 = 106;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveSpec {
    pub alpha: f64,
    pub min_res: u8,
    pub efps_scale: f64,
    pub latency_scale: f64,
    pub latency_coefficient: f64,
    /// Weights of the resolution, EFPS and latency terms.
    pub service_weights: [f64; 3],
    pub prb_midpoint: f64,
    pub prb_slope: f64,
    pub prb_min: u32,
    pub prb_max: u32,
    pub fps_values: Vec<f64>,
    pub resolution_values: Vec<u8>,
    pub literal: bool,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            alpha: 0.5,
            min_res: 0,
            efps_scale: 43.25,
            latency_scale: 150.0,
            latency_coefficient: 0.5,
            service_weights: [0.25, 0.25, 0.5],
            prb_midpoint: 53.0,
            prb_slope: 10.0,
            prb_min: 5,
            prb_max: PRB_DOMAIN_MAX,
            fps_values: vec![30.0, 60.0, 120.0],
            resolution_values: vec![0, 1, 2, 3],
            literal: false,
        }
    }
}

impl ObjectiveSpec {
    pub fn with_alpha(alpha: f64, min_res: u8) -> Self {
        ObjectiveSpec {
            alpha,
            min_res,
            ..ObjectiveSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        let wsum: f64 = self.service_weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 || self.service_weights.iter().any(|w| *w < 0.0) {
            return Err(Error::config(
                "service weights must be non-negative and sum to 1",
            ));
        }
        if !(self.efps_scale > 0.0 && self.latency_scale > 0.0 && self.prb_slope > 0.0) {
            return Err(Error::config("objective scales must be positive"));
        }
        if self.prb_min < 1 || self.prb_max > PRB_DOMAIN_MAX || self.prb_min > self.prb_max {
            return Err(Error::config(format!(
                "PRB domain {}..={} is not within 1..={PRB_DOMAIN_MAX}",
                self.prb_min, self.prb_max
            )));
        }
        if self.fps_values.is_empty() || self.resolution_values.is_empty() {
            return Err(Error::config("empty FPS or resolution domain"));
        }
        if self.resolution_values.iter().any(|&r| r > 3) || self.min_res > 3 {
            return Err(Error::config("resolution indices must be 0..=3"));
        }
        Ok(())
    }

    pub fn service_cost(&self, res: u8, efps: f64, latency: f64) -> Result<f64> {
        check_non_negative("efps", efps)?;
        check_non_negative("latency", latency)?;
        let [wr, we, wl] = self.service_weights;
        let d = f64::from(res) - f64::from(self.min_res);
        Ok(wr / (1.0 + (-d).exp())
            + we * (1.0 - (-efps / self.efps_scale).exp())
            + wl * (-self.latency_coefficient * (latency / self.latency_scale)).exp())
    }

    pub fn network_cost(&self, prb: u32) -> Result<f64> {
        if prb < self.prb_min || prb > self.prb_max {
            return Err(Error::Domain(format!(
                "PRB {prb} outside {}..={}",
                self.prb_min, self.prb_max
            )));
        }
        Ok(logistic(
            (f64::from(prb) - self.prb_midpoint) / self.prb_slope,
        ))
    }

    /// Objective value given already-predicted KQIs.
    pub fn combine(&self, p: &DecisionPoint, kqis: &Kqis) -> Result<f64> {
        let fs = self.service_cost(p.resolution, kqis.efps, kqis.latency)?;
        let fn_ = self.network_cost(p.prb)?;
        let net = if self.literal { fn_ } else { 1.0 - fn_ };
        Ok(self.alpha * fs + (1.0 - self.alpha) * net)
    }
}

fn check_non_negative(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} must be non-negative, got {v}"
        )))
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Service cost with the default constants.
pub fn service_cost(res: u8, min_res: u8, efps: f64, latency: f64) -> Result<f64> {
    ObjectiveSpec::with_alpha(1.0, min_res).service_cost(res, efps, latency)
}

/// Network cost with the default constants over the full `1..=106` domain.
pub fn network_cost(prb: u32) -> Result<f64> {
    ObjectiveSpec {
        prb_min: 1,
        ..ObjectiveSpec::default()
    }
    .network_cost(prb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub prb: u32,
    pub resolution: u8,
    pub fps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kqis {
    pub latency: f64,
    pub efps: f64,
    pub freeze: Option<f64>,
}

pub trait KqiPredictor {
    fn predict(&self, p: &DecisionPoint) -> Result<Kqis>;
}

/// Anything that maps a sample to one KQI value.
pub trait Regressor {
    fn predict_sample(&self, x: &Sample) -> Result<f64>;
}

impl Regressor for TTModel {
    fn predict_sample(&self, x: &Sample) -> Result<f64> {
        self.predict(x)
    }
}

impl Regressor for EnsembleModel {
    fn predict_sample(&self, x: &Sample) -> Result<f64> {
        self.predict(x)
    }
}

/// Merges decision variables into frozen network conditions.
pub fn decision_sample(conditions: &BTreeMap<String, f64>, p: &DecisionPoint) -> Sample {
    let mut f = conditions.clone();
    f.insert(PRBS.to_string(), f64::from(p.prb));
    f.insert(RESOLUTION.to_string(), f64::from(p.resolution));
    f.insert(FPS.to_string(), p.fps);
    Sample::new(f, Targets::default())
}

/// Trained regressors queried with frozen network conditions. Predicted
/// latency and EFPS are clamped at zero.
pub struct ModelPredictor {
    pub latency: Box<dyn Regressor + Send + Sync>,
    pub efps: Box<dyn Regressor + Send + Sync>,
    pub freeze: Option<Box<dyn Regressor + Send + Sync>>,
    pub conditions: BTreeMap<String, f64>,
}

impl KqiPredictor for ModelPredictor {
    fn predict(&self, p: &DecisionPoint) -> Result<Kqis> {
        let x = decision_sample(&self.conditions, p);
        Ok(Kqis {
            latency: self.latency.predict_sample(&x)?.max(0.0),
            efps: self.efps.predict_sample(&x)?.max(0.0),
            freeze: self
                .freeze
                .as_ref()
                .map(|m| m.predict_sample(&x))
                .transpose()?,
        })
    }
}

/// Noise-free synthetic ground truth under frozen conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPredictor {
    pub conditions: BTreeMap<String, f64>,
}

impl KqiPredictor for GroundTruthPredictor {
    fn predict(&self, p: &DecisionPoint) -> Result<Kqis> {
        let t = ground_truth(&decision_sample(&self.conditions, p).features)?;
        Ok(Kqis {
            latency: t.latency.max(0.0),
            efps: t.efps.max(0.0),
            freeze: Some(t.freeze),
        })
    }
}

impl<P: KqiPredictor + ?Sized> KqiPredictor for &P {
    fn predict(&self, p: &DecisionPoint) -> Result<Kqis> {
        (**self).predict(p)
    }
}

/// Network conditions used when none are configured.
pub fn default_conditions() -> BTreeMap<String, f64> {
    use crate::dataset::{PING_AVG, PING_HOST_LOSS, RSRP, RSRQ, RSSI, SINR};
    [
        (PING_AVG, 40.0),
        (RSRP, -90.0),
        (SINR, 15.0),
        (RSRQ, -10.0),
        (RSSI, -65.0),
        (PING_HOST_LOSS, 0.01),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn objective<P: KqiPredictor + ?Sized>(
    spec: &ObjectiveSpec,
    pred: &P,
    p: &DecisionPoint,
) -> Result<f64> {
    spec.combine(p, &pred.predict(p)?)
}

pub const GRID_PRB: &str = PRBS;
pub const GRID_RESOLUTION: &str = RESOLUTION;
pub const GRID_FPS: &str = FPS;

/// `[PRB domain] × [resolutions] × [FPS values]`; MinRes only enters through
/// the service cost.
pub fn build_decision_grid(spec: &ObjectiveSpec) -> Result<Grid> {
    spec.validate()?;
    let mut res: Vec<f64> = spec
        .resolution_values
        .iter()
        .map(|&r| f64::from(r))
        .collect();
    res.sort_by(f64::total_cmp);
    let mut fps = spec.fps_values.clone();
    fps.sort_by(f64::total_cmp);
    Grid::new(vec![
        Dimension {
            name: GRID_PRB.to_string(),
            values: (spec.prb_min..=spec.prb_max).map(f64::from).collect(),
        },
        Dimension {
            name: GRID_RESOLUTION.to_string(),
            values: res,
        },
        Dimension {
            name: GRID_FPS.to_string(),
            values: fps,
        },
    ])
}

pub fn decision_point(grid: &Grid, idx: &[usize]) -> DecisionPoint {
    let v = grid.values_at(idx);
    DecisionPoint {
        prb: v[0] as u32,
        resolution: v[1] as u8,
        fps: v[2],
    }
}

/// Objective over grid indices for the index-based optimizers. The first
/// predictor error is kept and the point scores `-∞`.
pub struct GridObjective<'a, P: ?Sized> {
    pub spec: &'a ObjectiveSpec,
    pub predictor: &'a P,
    pub grid: &'a Grid,
    error: RefCell<Option<Error>>,
}

impl<'a, P: KqiPredictor + ?Sized> GridObjective<'a, P> {
    pub fn new(spec: &'a ObjectiveSpec, predictor: &'a P, grid: &'a Grid) -> Self {
        GridObjective {
            spec,
            predictor,
            grid,
            error: RefCell::new(None),
        }
    }

    pub fn eval(&self, idx: &[usize]) -> f64 {
        match objective(self.spec, self.predictor, &decision_point(self.grid, idx)) {
            Ok(v) => v,
            Err(e) => {
                self.error.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.error.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ttopt,
    Brute,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ttopt" => Ok(Method::Ttopt),
            "brute" | "brute-force" | "bruteforce" => Ok(Method::Brute),
            _ => Err(Error::config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub method: Method,
    pub alpha: f64,
    pub min_res: u8,
    pub point: DecisionPoint,
    pub kqis: Kqis,
    pub service_cost: f64,
    pub network_cost: f64,
    pub result: OptResult,
}

pub fn optimize<P: KqiPredictor + ?Sized>(
    spec: &ObjectiveSpec,
    predictor: &P,
    method: Method,
    ttopt: &TtoptConfig,
) -> Result<Decision> {
    let grid = build_decision_grid(spec)?;
    let obj = GridObjective::new(spec, predictor, &grid);
    let result = match method {
        Method::Ttopt => ttopt_maximize(|i| obj.eval(i), &grid, ttopt)?,
        Method::Brute => brute_force_maximize(|i| obj.eval(i), &grid)?,
    };
    obj.finish()?;
    let point = decision_point(&grid, &result.best_index);
    let kqis = predictor.predict(&point)?;
    Ok(Decision {
        method,
        alpha: spec.alpha,
        min_res: spec.min_res,
        point,
        kqis,
        service_cost: spec.service_cost(point.resolution, kqis.efps, kqis.latency)?,
        network_cost: spec.network_cost(point.prb)?,
        result,
    })
}
