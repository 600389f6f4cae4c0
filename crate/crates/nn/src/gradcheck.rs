//! Central finite-difference check of tape gradients.
//!
//! The numerical side only re-evaluates the caller's forward closure on
//! perturbed copies of the parameters; it never touches the backward pass.

use crate::params::ParamStore;
use crate::tape::{Gradients, Tape, Var};

/// Worst disagreement found by [`check_params`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare analytic gradients with central differences for every scalar of
/// every parameter in `store`.
///
/// `loss` builds the forward graph on the given tape and returns the scalar
/// loss node. `floor` bounds the denominator of the relative error so that
/// gradients that are zero up to rounding do not produce spurious failures.
pub fn check_params<F>(store: &ParamStore, step: f64, floor: f64, loss: F) -> GradCheckReport
where
    F: Fn(&mut Tape) -> Var,
{
    let analytic: Gradients = {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape);
        tape.backward(l)
    };
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let l = loss(&mut tape);
        tape.scalar(l)
    };

    let mut work = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    for id in store.ids() {
        let (rows, cols) = store.get(id).dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = store.get(id)[[r, c]];
                work.get_mut(id)[[r, c]] = orig + step;
                let up = eval(&work);
                work.get_mut(id)[[r, c]] = orig - step;
                let down = eval(&work);
                work.get_mut(id)[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * step);
                let a = analytic.get(id).map_or(0.0, |g| g[[r, c]]);
                let err = relative_error(a, numeric, floor);
                report.checked += 1;
                if err > report.max_rel_error || report.checked == 1 {
                    report.max_rel_error = err;
                    report.worst_param = store.name(id).to_string();
                    report.worst_index = (r, c);
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    report
}
