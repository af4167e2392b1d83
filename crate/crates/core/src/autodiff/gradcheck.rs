//! Central finite-difference checks of recorded gradients.

use rand::seq::index::sample;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)
    pub max_rel_error: f64,
    /// Parameter element that produced the maximum, as `name[index]`.
    pub worst: String,
    pub elements_checked: usize,
    pub probes: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: String::new(),
            elements_checked: 0,
            probes: 0,
        }
    }

    fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.elements_checked += other.elements_checked;
        self.probes += other.probes;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn scalar(tape: &Tape, root: Var) -> f64 {
    tape.value(root).values()[0]
}

/// Compares the backward pass of `objective` against the fourth-order
/// central difference `(8(f(+h) - f(-h)) - (f(+2h) - f(-2h))) / 12h` with
/// `h = eps` at the current parameter values.
///
/// `objective` must rebuild the same function on every call: any random
/// draws it makes have to come from a freshly seeded stream. At most
/// `max_per_param` randomly chosen elements of each parameter are probed.
pub fn grad_check<F>(
    store: &mut ParamStore,
    eps: f64,
    max_per_param: usize,
    rng: &mut Rng,
    mut objective: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = objective(&mut tape, store)?;
    tape.backward(root, store)?;
    let analytic: Vec<Vec<f64>> = store
        .iter()
        .map(|(_, p)| p.grad.as_ref().map(|g| g.values().to_vec()).unwrap_or_default())
        .collect();

    let mut report = GradCheckReport::empty();
    report.probes = 1;
    for (pi, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let picks: Vec<usize> = if len <= max_per_param {
            (0..len).collect()
        } else {
            sample(rng, len, max_per_param).into_vec()
        };
        for j in picks {
            let id = store.iter().nth(pi).map(|(id, _)| id).expect("index in range");
            let orig = store.get(id).value.values()[j];
            let mut eval = |v: f64, store: &mut ParamStore| -> Result<f64> {
                store.get_mut(id).value.values_mut()[j] = v;
                let mut t = Tape::new();
                let r = objective(&mut t, store)?;
                Ok(scalar(&t, r))
            };
            let d1 = eval(orig + eps, store)? - eval(orig - eps, store)?;
            let d2 = eval(orig + 2.0 * eps, store)? - eval(orig - 2.0 * eps, store)?;
            store.get_mut(id).value.values_mut()[j] = orig;
            let numeric = (8.0 * d1 - d2) / (12.0 * eps);
            let err = relative_error(grad[j], numeric);
            report.elements_checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{}[{}]", store.get(id).name, j);
            }
        }
    }
    Ok(report)
}

/// Runs [`grad_check`] at `probes` random points produced by `init`.
/// Points whose recorded operands sit within `10 * eps` of a kink are
/// redrawn.
pub fn grad_check_probes<I, F>(
    probes: usize,
    eps: f64,
    max_per_param: usize,
    rng: &mut Rng,
    mut init: I,
    mut objective: F,
) -> Result<GradCheckReport>
where
    I: FnMut(&mut Rng) -> Result<ParamStore>,
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut report = GradCheckReport::empty();
    let mut done = 0;
    let mut attempts = 0;
    while done < probes {
        attempts += 1;
        if attempts > 100 * probes.max(1) {
            return Err(Error::State(format!(
                "could not find {probes} probe points away from non-differentiable kinks"
            )));
        }
        let mut store = init(rng)?;
        let mut tape = Tape::new();
        objective(&mut tape, &store)?;
        if tape.kink_distance() < 10.0 * eps {
            continue;
        }
        report.merge(grad_check(&mut store, eps, max_per_param, rng, &mut objective)?);
        done += 1;
    }
    Ok(report)
}
