use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter_index: usize,
    pub analytic_value: f64,
    pub numeric_value: f64,
    /// Step whose estimate was kept for the worst parameter.
    pub epsilon: f64,
    pub parameters_checked: usize,
    /// Parameters that needed a step past the first to pass `tolerance`.
    pub refined: usize,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `loss_fn` against central
/// differences `(f(p + eps) - f(p - eps)) / (2 eps)` for every parameter.
///
/// `loss_fn` maps a parameter vector to `(loss, gradient)`; only the loss is
/// used at the perturbed points. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(loss_fn: F, parameters: &[f64], epsilon: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    grad_check_steps(loss_fn, parameters, &[epsilon], 0.0)
}

/// Like [`grad_check`], but a parameter whose error at `steps[0]` exceeds
/// `tolerance` is retried with the later steps and keeps its smallest error.
///
/// Piecewise-linear activations put kinks in the loss; a central difference
/// whose stencil straddles one is wrong even for a correct gradient, while a
/// shorter stencil usually is not.
pub fn grad_check_steps<F>(mut loss_fn: F, parameters: &[f64], steps: &[f64], tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if steps.is_empty() || steps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(format!("steps must be positive, got {steps:?}")));
    }
    let (base, analytic) = loss_fn(parameters)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at base point".into()));
    }
    if analytic.len() != parameters.len() {
        return Err(Error::dim("analytic gradient", parameters.len(), analytic.len()));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter_index: 0,
        analytic_value: analytic.first().copied().unwrap_or(0.0),
        numeric_value: 0.0,
        epsilon: steps[0],
        parameters_checked: parameters.len(),
        refined: 0,
    };
    let mut probe = parameters.to_vec();
    for i in 0..parameters.len() {
        let a = analytic[i];
        let mut best: Option<(f64, f64, f64)> = None;
        for (j, &eps) in steps.iter().enumerate() {
            probe[i] = parameters[i] + eps;
            let (plus, _) = loss_fn(&probe)?;
            probe[i] = parameters[i] - eps;
            let (minus, _) = loss_fn(&probe)?;
            probe[i] = parameters[i];
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing parameter {i}")));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = rel_err(a, numeric);
            if best.is_none_or(|(r, _, _)| rel < r) {
                best = Some((rel, numeric, eps));
            }
            if rel <= tolerance {
                if j > 0 {
                    report.refined += 1;
                }
                break;
            }
        }
        let (rel, numeric, eps) = best.expect("at least one step");
        if i == 0 || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_parameter_index = i;
            report.analytic_value = a;
            report.numeric_value = numeric;
            report.epsilon = eps;
        }
    }
    Ok(report)
}
