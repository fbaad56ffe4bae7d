use crate::error::{LtcsError, Result};
use crate::params::ParamStore;

/// Outcome of [`grad_check`]: the worst relative error and where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients with central finite differences.
///
/// `loss_fn(params, with_grad)` must return the loss and, when `with_grad`
/// is set, accumulate its gradient into `params` (grads are zeroed first).
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<L>(params: &mut ParamStore<f64>, eps: f64, mut loss_fn: L) -> Result<GradCheckReport>
where
    L: FnMut(&mut ParamStore<f64>, bool) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(LtcsError::InvalidArgument(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    params.zero_grads();
    let base = loss_fn(params, true)?;
    if !base.is_finite() {
        return Err(LtcsError::Numerical("grad_check: loss at the base point is not finite".into()));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    // Snapshot first: `loss_fn` may touch the gradient buffers on later calls.
    let named: Vec<(String, _, Vec<f64>)> =
        params.iter_named().map(|(n, id)| (n.to_string(), id, params.grad(id).data().to_vec())).collect();
    for (name, id, analytic) in named {
        for (i, &a) in analytic.iter().enumerate() {
            let orig = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = orig + eps;
            let plus = loss_fn(params, false)?;
            params.value_mut(id).data_mut()[i] = orig - eps;
            let minus = loss_fn(params, false)?;
            params.value_mut(id).data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(LtcsError::Numerical(format!("grad_check: non-finite loss perturbing {name}[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
