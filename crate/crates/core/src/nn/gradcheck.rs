//! Central finite-difference check of analytic gradients.

use crate::error::{Error, Result};

/// Denominator floor of the relative error, so gradients that vanish up to
/// rounding do not blow the ratio up.
pub const RELATIVE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates whose step straddles a kink (ReLU or L1), detected by the
    /// central difference changing when the step is halved.
    pub skipped: usize,
}

/// Agreement required between the step and half-step estimates before a
/// coordinate counts as smooth.
pub const KINK_TOLERANCE: f64 = 1e-5;

/// `|a − n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` (one vector per parameter slice, in the order given by
/// `params`) against central differences of `loss` with step `step`.
///
/// A kink lying exactly at the evaluation point (a ReLU input of exactly 0)
/// is not detected; callers perturb parameters away from such ties.
pub fn check_gradients<T>(
    model: &mut T,
    params: impl Fn(&mut T) -> Vec<&mut [f64]>,
    analytic: &[Vec<f64>],
    loss: impl Fn(&T) -> Result<f64>,
    step: f64,
) -> Result<GradCheck> {
    let shapes: Vec<usize> = params(model).iter().map(|s| s.len()).collect();
    if shapes.len() != analytic.len() || shapes.iter().zip(analytic).any(|(&n, a)| n != a.len()) {
        return Err(Error::ShapeMismatch("analytic gradients do not match parameter slices".into()));
    }
    let mut report = GradCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (s, &n) in shapes.iter().enumerate() {
        for (i, &a) in analytic[s].iter().enumerate().take(n) {
            let full = central_difference(model, &params, &loss, (s, i), step)?;
            let half = central_difference(model, &params, &loss, (s, i), step / 2.0)?;
            if relative_error(full, half) > KINK_TOLERANCE {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            report.max_relative_error = report.max_relative_error.max(relative_error(a, full));
        }
    }
    Ok(report)
}

fn central_difference<T>(
    model: &mut T,
    params: &impl Fn(&mut T) -> Vec<&mut [f64]>,
    loss: &impl Fn(&T) -> Result<f64>,
    (s, i): (usize, usize),
    h: f64,
) -> Result<f64> {
    let original = params(model)[s][i];
    params(model)[s][i] = original + h;
    let plus = loss(model);
    params(model)[s][i] = original - h;
    let minus = loss(model);
    params(model)[s][i] = original;
    Ok((plus? - minus?) / (2.0 * h))
}
