//! RMSE, the asymmetric PHM08 score and MAPE over every cycle of a test set.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::data::LabeledSample;
use crate::error::{ensure_finite, Error, Result};
use crate::model::BaceRulModel;

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Usage("metrics need at least one prediction".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Usage(format!(
            "{} predictions but {} ground-truth values",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    ensure_finite((sq / pred.len() as f64).sqrt(), || "rmse".into())
}

/// Per-sample score term for `d = pred - truth`; late predictions cost more.
pub fn phm_term(d: f64) -> f64 {
    if d < 0.0 {
        (-d / 13.0).exp_m1()
    } else {
        (d / 10.0).exp_m1()
    }
}

pub fn phm_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| phm_term(p - t)).sum();
    ensure_finite(s, || "phm score".into())
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(Error::Usage(format!("ground truth {i} is zero; mape is undefined")));
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| ((p - t) / t).abs()).sum();
    ensure_finite(s / pred.len() as f64 * 100.0, || "mape".into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclePrediction {
    pub unit_id: u32,
    pub cycle: u32,
    pub true_rul: f64,
    pub pred_mean: f64,
    pub pred_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub rmse: f64,
    pub score: f64,
    pub mape: f64,
    pub n: usize,
    pub per_unit: Vec<CyclePrediction>,
}

impl EvalResult {
    /// Metrics over precomputed per-cycle predictions.
    pub fn from_predictions(per_unit: Vec<CyclePrediction>) -> Result<Self> {
        let pred: Vec<f64> = per_unit.iter().map(|p| p.pred_mean).collect();
        let truth: Vec<f64> = per_unit.iter().map(|p| p.true_rul).collect();
        Ok(Self {
            rmse: rmse(&pred, &truth)?,
            score: phm_score(&pred, &truth)?,
            mape: mape(&pred, &truth)?,
            n: per_unit.len(),
            per_unit,
        })
    }

    pub fn summary(&self) -> String {
        format!(
            "summary,n={},rmse={},score={},mape={}",
            self.n, self.rmse, self.score, self.mape
        )
    }

    /// `unit,cycle,true_rul,pred_mean,pred_std` rows followed by the summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit,cycle,true_rul,pred_mean,pred_std\n");
        for p in &self.per_unit {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.unit_id, p.cycle, p.true_rul, p.pred_mean, p.pred_std
            );
        }
        out.push_str(&self.summary());
        out.push('\n');
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Predicts every test cycle and scores the means against the clipped labels.
pub fn evaluate<R: Rng + ?Sized>(
    model: &BaceRulModel,
    test: &[LabeledSample],
    rng: &mut R,
    n_samples: usize,
) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(Error::Usage("test set is empty".into()));
    }
    let mut rows = Vec::with_capacity(test.len());
    for s in test {
        let p = model.predict(&s.x, rng, n_samples)?;
        rows.push(CyclePrediction {
            unit_id: s.unit_id,
            cycle: s.cycle,
            true_rul: s.t as f64,
            pred_mean: p.mean,
            pred_std: p.std,
        });
    }
    EvalResult::from_predictions(rows)
}
