//! Use cases built on a trained motif model: forecasting, anomaly detection
//! and clustering, plus their evaluation measures.

pub mod anomaly;
pub mod cluster;
pub mod dtw;
pub mod forecast;
pub mod metrics;

use rand::seq::SliceRandom;

use crate::nn::{Adam, Mlp, Mode, ParamStore, Tape, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Rows stacked into one `[n, w]` tensor.
fn stack(rows: &[&[f64]]) -> Result<Tensor> {
    let w = rows.first().map_or(0, |r| r.len());
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::matrix(rows.len(), w, data)
}

/// One epoch of minibatch Adam on mean squared error. Batches follow a
/// shuffled order drawn from `rng`.
#[allow(clippy::too_many_arguments)]
fn regression_epoch(
    mlp: &Mlp,
    params: &mut ParamStore,
    adam: &mut Adam,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    batch_size: usize,
    rng: &mut Rng,
) -> Result<()> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(rng);
    for chunk in order.chunks(batch_size.max(1)) {
        let x: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i].as_slice()).collect();
        let y: Vec<&[f64]> = chunk.iter().map(|&i| targets[i].as_slice()).collect();
        let grads = {
            let mut tape = Tape::new(params);
            let xv = tape.constant(stack(&x)?)?;
            let yv = tape.constant(stack(&y)?)?;
            let out = mlp.forward(&mut tape, xv, &mut Mode::Eval)?;
            let d = tape.sub(out, yv)?;
            let sq = tape.square(d);
            let loss = tape.mean(sq);
            tape.backward(loss)?
        };
        adam.step(params, &grads)?;
    }
    Ok(())
}

fn predict_rows(mlp: &Mlp, params: &ParamStore, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| mlp.apply(params, x)).collect()
}

fn mse(pred: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(targets) {
        for (a, b) in p.iter().zip(t) {
            sum += (a - b).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("no windows to evaluate".into()));
    }
    let m = sum / n as f64;
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite("mean squared error".into()))
    }
}
