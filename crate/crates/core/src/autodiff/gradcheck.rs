//! Finite-difference gradient checks.

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::AutodiffError;

/// Denominator floor for the relative error, so entries whose true gradient
/// is zero compare on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
}

impl GradCheckReport {
    fn new() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.max_rel_error = self.max_rel_error.max(rel_error(analytic, numeric));
        self.max_abs_error = self.max_abs_error.max((analytic - numeric).abs());
        self.checked += 1;
    }
}

/// Checks `d f(x) / d x` for a function of one tensor input by central
/// differences with step `h`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    let eval = |t: &Tensor| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let v = tape.constant(t.clone());
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(v)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));

    let mut report = GradCheckReport::new();
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[k] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[k] = orig;
        report.record(analytic.data()[k], (up - down) / (2.0 * h));
    }
    Ok(report)
}

/// Checks gradients of a scalar loss with respect to the selected parameters
/// (all unfrozen ones when `only` is `None`). `loss` must build its graph
/// through [`Tape::param`].
pub fn grad_check_params<F>(
    store: &mut ParamStore,
    only: Option<&[ParamId]>,
    loss: F,
    h: f64,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, AutodiffError>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    tape.backward(out)?;
    tape.accumulate_param_grads(store);

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.ids().filter(|&id| !store.get(id).frozen).collect(),
    };
    let mut report = GradCheckReport::new();
    for id in ids {
        let analytic = store.get(id).grad.clone();
        for k in 0..analytic.len() {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + h;
            let up = eval_loss(&loss, store)?;
            store.get_mut(id).value.data_mut()[k] = orig - h;
            let down = eval_loss(&loss, store)?;
            store.get_mut(id).value.data_mut()[k] = orig;
            report.record(analytic.data()[k], (up - down) / (2.0 * h));
        }
    }
    store.zero_grads();
    Ok(report)
}

fn eval_loss<F>(loss: &F, store: &ParamStore) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    Ok(tape.value(out).item())
}
