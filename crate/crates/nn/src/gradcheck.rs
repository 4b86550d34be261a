//! Central finite-difference gradient checks.

use crate::error::NnError;
use crate::params::ParameterStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub checked: usize,
    /// [`Tape::kink_margin`] of the unperturbed forward pass.
    pub kink_margin: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `loss` with respect to every parameter
/// entry against `(L(θ + ε) − L(θ − ε)) / 2ε`. `loss` must rebuild the
/// whole computation from `store` on the tape it is given.
pub fn check_parameter_gradients<F>(
    store: &mut ParameterStore,
    eps: f64,
    floor: f64,
    loss: F,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, NnError>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let eval = |store: &ParameterStore| -> Result<f64, NnError> {
        let mut t = Tape::frozen();
        let v = loss(&mut t, store)?;
        Ok(t.value(v).item())
    };
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        checked: 0,
        kink_margin: tape.kink_margin(),
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        for i in 0..n {
            let analytic = grads.param(id).map_or(0.0, |g| g.data()[i]);
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic, numeric, floor);
            report.checked += 1;
            if err > report.max_relative_error || report.worst_parameter.is_empty() {
                report.max_relative_error = err.max(report.max_relative_error);
                report.worst_parameter = store.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
