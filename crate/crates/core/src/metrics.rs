//! MASE and the load/inference timing harness.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaseReport {
    pub mase: f64,
    pub model_mae: f64,
    pub naive_mae: f64,
    pub n: usize,
}

pub fn mae(predictions: &[f64], actuals: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / predictions.len() as f64
}

/// `mean|pred − actual| / mean|naive − actual|`.
pub fn mase(predictions: &[f64], actuals: &[f64], naive: &[f64]) -> Result<MaseReport> {
    let n = actuals.len();
    if predictions.len() != n || naive.len() != n {
        return Err(Error::LengthMismatch(format!(
            "mase inputs have lengths {}, {}, {}",
            predictions.len(),
            n,
            naive.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput("mase of an empty series".into()));
    }
    let model_mae = mae(predictions, actuals);
    let naive_mae = mae(naive, actuals);
    if naive_mae == 0.0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok(MaseReport {
        mase: model_mae / naive_mae,
        model_mae,
        naive_mae,
        n,
    })
}

/// MASE against the constant `train_mean` predictor.
pub fn mase_vs_mean(predictions: &[f64], actuals: &[f64], train_mean: f64) -> Result<MaseReport> {
    mase(predictions, actuals, &vec![train_mean; actuals.len()])
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub loading_ms: f64,
    pub loading_ms_std: f64,
    /// Whole-test-set inference time per run.
    pub inference_ms: f64,
    pub inference_ms_std: f64,
    pub runs: usize,
    pub test_set_size: usize,
    /// Single-run reports carry no spread estimate.
    pub low_confidence: bool,
}

/// Times `load` (deserialization) and `infer` (whole test set) over `runs`
/// sequential repetitions, after one untimed warm-up.
pub fn time_model<M, L, I>(
    mut load: L,
    mut infer: I,
    test: &[&Sample],
    runs: usize,
) -> Result<TimingReport>
where
    L: FnMut() -> Result<M>,
    I: FnMut(&M, &[&Sample]) -> Result<Vec<f64>>,
{
    if runs == 0 {
        return Err(Error::config("timing needs at least one run"));
    }
    let wrap = |run: usize| {
        move |e: Error| Error::TimedRun {
            run,
            source: Box::new(e),
        }
    };
    let warm = load().map_err(wrap(0))?;
    infer(&warm, test).map_err(wrap(0))?;
    drop(warm);

    let mut load_ms = Vec::with_capacity(runs);
    let mut infer_ms = Vec::with_capacity(runs);
    for run in 1..=runs {
        let t0 = Instant::now();
        let model = load().map_err(wrap(run))?;
        let t1 = Instant::now();
        let preds = infer(&model, test).map_err(wrap(run))?;
        let t2 = Instant::now();
        std::hint::black_box(&preds);
        load_ms.push((t1 - t0).as_secs_f64() * 1e3);
        infer_ms.push((t2 - t1).as_secs_f64() * 1e3);
    }
    Ok(TimingReport {
        loading_ms: mean(&load_ms),
        loading_ms_std: std_dev(&load_ms),
        inference_ms: mean(&infer_ms),
        inference_ms_std: std_dev(&infer_ms),
        runs,
        test_set_size: test.len(),
        low_confidence: runs == 1,
    })
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReportRow {
    pub model: String,
    pub kqi: String,
    pub features: usize,
    pub loading_ms: Option<f64>,
    pub inference_ms: Option<f64>,
    pub mase: Option<f64>,
    pub runs: Option<usize>,
    pub low_confidence: Option<bool>,
}

pub fn write_report_csv<W: Write>(rows: &[ModelReportRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<report csv>", e))?;
    Ok(())
}
