//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;

use super::{ParamStore, Tape, Var};
use crate::rng::substream;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
}

/// Relative error with an absolute floor on the denominator so that
/// gradients that are zero up to rounding do not blow the ratio up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare the tape gradient of `loss` against central differences with step
/// `h` on `count` scalar parameters drawn (seeded) across the whole store.
///
/// `loss` must be a deterministic function of the store; stochastic layers
/// have to reseed their generator on every call.
pub fn check_gradients<F>(store: &ParamStore, count: usize, h: f64, seed: u64, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape)?;
        tape.backward(l)?
    };
    let flat: Vec<(usize, usize)> = store
        .ids()
        .flat_map(|id| (0..store.get(id).len()).map(move |k| (id.index(), k)))
        .collect();
    let count = count.min(flat.len());
    let picks = sample(&mut substream(seed, "gradcheck"), flat.len(), count);
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(s);
        let l = loss(&mut tape)?;
        Ok(tape.value(l).data()[0])
    };
    let mut worst = 0.0f64;
    let mut work = store.clone();
    for p in picks {
        let (pi, k) = flat[p];
        let id = store.ids().nth(pi).expect("index from store");
        let orig = store.get(id).data()[k];
        work.get_mut(id).data_mut()[k] = orig + h;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[k] = orig - h;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(grads.get(id).data()[k], numeric));
    }
    Ok(GradCheckReport {
        checked: count,
        max_relative_error: worst,
    })
}
