use super::MlpParams;
use crate::error::{Error, Result};

/// Compares the analytic gradient returned by `loss_fn` against central
/// differences, perturbing one parameter at a time by `±step`.
///
/// Returns `max |a - f| / max(|a|, |f|, 1e-8)` over all parameters.
/// `loss_fn` must be deterministic in its argument.
pub fn grad_check<F>(params: &MlpParams, step: f64, mut loss_fn: F) -> Result<f64>
where
    F: FnMut(&MlpParams) -> Result<(f64, MlpParams)>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step {step} must be positive")));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({base})")));
    }
    if !analytic.same_shape(params) {
        return Err(Error::Shape("analytic gradient shape does not match parameters".into()));
    }
    let analytic: Vec<f64> = analytic.values().copied().collect();

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *probe.values().nth(idx).expect("index in range");
        set(&mut probe, idx, original + step);
        let (hi, _) = loss_fn(&probe)?;
        set(&mut probe, idx, original - step);
        let (lo, _) = loss_fn(&probe)?;
        set(&mut probe, idx, original);
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::Numeric(format!("loss not finite when perturbing parameter {idx}")));
        }
        let f = (hi - lo) / (2.0 * step);
        let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn set(params: &mut MlpParams, idx: usize, value: f64) {
    if let Some(v) = params.values_mut().nth(idx) {
        *v = value;
    }
}
