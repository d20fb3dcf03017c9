use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Dense layer `y = x W^T + b`, initialized uniformly in `±sqrt(1 / fan_in)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<f64>>();
        let w = Tensor::matrix(out_dim, in_dim, draw(out_dim * in_dim)).expect("positive dims");
        let b = Tensor::matrix(1, out_dim, draw(out_dim)).expect("positive dims");
        Self {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.linear(x, w, b)
    }

    /// Check that the referenced parameters exist with matching shapes.
    pub fn validate(&self, store: &ParamStore) -> Result<()> {
        let ok = |id: ParamId, rows: usize, cols: usize| {
            id.index() < store.len() && {
                let t = store.get(id);
                t.rows() == rows && t.cols() == cols
            }
        };
        if ok(self.weight, self.out_dim, self.in_dim) && ok(self.bias, 1, self.out_dim) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "linear {}x{} does not match its stored parameters",
                self.out_dim, self.in_dim
            )))
        }
    }

    /// Plain forward pass without recording, for inference paths.
    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape(format!("linear expects {} inputs, got {}", self.in_dim, x.len())));
        }
        let w = store.get(self.weight).data();
        let b = store.get(self.bias).data();
        Ok((0..self.out_dim)
            .map(|o| {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect())
    }
}

/// Whether stochastic layers are active. Training mode carries the dropout
/// generator.
pub enum Mode<'r> {
    Train(&'r mut Rng),
    Eval,
}

impl Mode<'_> {
    pub fn rng(&mut self) -> Option<&mut Rng> {
        match self {
            Mode::Train(r) => Some(&mut **r),
            Mode::Eval => None,
        }
    }

    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

/// Stack of linear layers with a shared hidden activation and dropout, and a
/// separate output activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
            dropout,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, mut x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, x)?;
            if i < last {
                x = activate(tape, x, self.hidden);
                x = tape.dropout(x, self.dropout, mode.rng())?;
            } else {
                x = activate(tape, x, self.output);
            }
        }
        Ok(x)
    }

    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let last = self.layers.len().saturating_sub(1);
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h)?;
            let act = if i < last { self.hidden } else { self.output };
            h.iter_mut().for_each(|v| *v = activate_scalar(*v, act));
        }
        Ok(h)
    }
}

pub fn activate(tape: &mut Tape<'_>, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Identity => x,
    }
}

pub fn activate_scalar(v: f64, act: Activation) -> f64 {
    match act {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => super::sigmoid(v),
        Activation::Identity => v,
    }
}
