//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Per-element denominators never drop below this, so gradients that are
/// numerically zero are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |a − n| / max(|a|, |n|, RELATIVE_FLOOR)` over checked coordinates.
    pub max_rel_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
    pub passed: bool,
}

/// Checks `f` at `x` on every coordinate.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = (0..x.len()).map(|i| (0, i)).collect();
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), &coords, eps, tol)
}

/// Checks `f` over several inputs, restricted to the `(input, index)`
/// coordinates listed in `coords`.
pub fn grad_check_many<F>(
    f: F,
    inputs: &[Tensor],
    coords: &[(usize, usize)],
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out)
            .item()
            .ok_or_else(|| Error::Contract("gradient check needs a scalar function".into()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
        passed: true,
    };
    for &(k, i) in coords {
        let analytic = grads.get(vars[k]).map_or(0.0, |g| g.data()[i]);
        let base = work[k].data()[i];
        work[k].data_mut()[i] = base + eps;
        let plus = eval(&work)?;
        work[k].data_mut()[i] = base - eps;
        let minus = eval(&work)?;
        work[k].data_mut()[i] = base;
        let numeric = (plus - minus) / (2.0 * eps);
        if !numeric.is_finite() {
            return Err(Error::NonFinite("finite difference".into()));
        }
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = (k, i);
        }
        report.checked += 1;
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}
