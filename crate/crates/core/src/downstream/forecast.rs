//! Window-to-window forecasting with an optional motif-causality penalty.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{mse, predict_rows, regression_epoch};
use crate::gnn::LinkSession;
use crate::nn::{Activation, Adam, Mlp, ParamStore};
use crate::rng::substream;
use crate::trace_data::TraceSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    /// Input window, prediction horizon and motif length.
    pub window: usize,
    /// Weight of the MC penalty in the reported loss.
    pub mc_weight: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub batch_size: usize,
    /// Windows sampled (once, seeded) for the MC penalty.
    pub penalty_windows: usize,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: 6,
            mc_weight: 1.0,
            epochs: 30,
            learning_rate: 1e-3,
            hidden: 64,
            batch_size: 64,
            penalty_windows: 512,
            seed: 0,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.window == 0 || self.epochs == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("forecast window, epochs, hidden width and batch size must be positive");
        }
        if !(self.mc_weight >= 0.0 && self.mc_weight.is_finite()) {
            return bad("forecast mc_weight must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("forecast learning rate must be positive");
        }
        Ok(())
    }
}

/// `(input, target)` pairs: every window of length `w` followed by the next
/// `w` values, stride 1.
pub fn forecast_windows(traces: &TraceSet, w: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in traces {
        if t.len() < 2 * w {
            return Err(Error::Degenerate(format!(
                "trace {} has {} points, forecasting needs at least {}",
                t.trace_id,
                t.len(),
                2 * w
            )));
        }
        for s in 0..=t.len() - 2 * w {
            xs.push(t.values[s..s + w].to_vec());
            ys.push(t.values[s + w..s + 2 * w].to_vec());
        }
    }
    Ok((xs, ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub mse: f64,
    pub penalty: Option<f64>,
    pub reported: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub window: usize,
    pub mlp: Mlp,
    pub params: ParamStore,
    pub history: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
}

impl Forecaster {
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.window {
            return Err(Error::Shape(format!("forecaster expects {} inputs, got {}", self.window, input.len())));
        }
        self.mlp.apply(&self.params, input)
    }
}

/// Mean `|MC(x -> y_pred) - MC(x -> y_true)|` over the chosen windows.
fn mc_penalty(
    session: &LinkSession<'_>,
    picks: &[usize],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    pred: &[Vec<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for &i in picks {
        let (_, c_pred) = session.predict_new_edge(&xs[i], &pred[i])?;
        let (_, c_true) = session.predict_new_edge(&xs[i], &ys[i])?;
        total += (c_pred - c_true).abs();
    }
    Ok(total / picks.len().max(1) as f64)
}

/// Feedforward `w -> hidden -> hidden -> w` regressor trained on squared
/// error. After every epoch the reported loss is the training MSE, plus
/// `mc_weight` times the MC penalty when a motif model is given; the epoch
/// with the lowest reported loss is kept. The penalty is not differentiated.
pub fn train_forecaster(train: &TraceSet, cfg: &ForecastConfig, mc: Option<&LinkSession<'_>>) -> Result<Forecaster> {
    cfg.validate()?;
    if let Some(s) = mc {
        if s.model().tau != cfg.window {
            return Err(Error::TauMismatch {
                expected: cfg.window,
                found: s.model().tau,
            });
        }
    }
    let (xs, ys) = forecast_windows(train, cfg.window)?;
    if xs.is_empty() {
        return Err(Error::NoTraces);
    }
    let w = cfg.window;
    let mut params = ParamStore::new();
    let mlp = Mlp::new(
        &mut params,
        "forecast",
        &[w, cfg.hidden, cfg.hidden, w],
        Activation::Relu,
        Activation::Identity,
        0.0,
        &mut substream(cfg.seed, "forecast.init"),
    );
    let picks: Vec<usize> = {
        let k = cfg.penalty_windows.min(xs.len());
        let mut p = sample(&mut substream(cfg.seed, "forecast.penalty"), xs.len(), k).into_vec();
        p.sort_unstable();
        p
    };
    let mut adam = Adam::new(cfg.learning_rate);
    let mut shuffle = substream(cfg.seed, "forecast.shuffle");
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=cfg.epochs {
        regression_epoch(&mlp, &mut params, &mut adam, &xs, &ys, cfg.batch_size, &mut shuffle)?;
        let pred = predict_rows(&mlp, &params, &xs)?;
        let m = mse(&pred, &ys)?;
        let penalty = mc.map(|s| mc_penalty(s, &picks, &xs, &ys, &pred)).transpose()?;
        let reported = m + penalty.map_or(0.0, |p| cfg.mc_weight * p);
        history.push(EpochLog {
            mse: m,
            penalty,
            reported,
        });
        if best.as_ref().is_none_or(|(b, _, _)| reported < *b) {
            best = Some((reported, epoch, params.clone()));
        }
    }
    let (_, selected_epoch, params) = best.expect("at least one epoch");
    Ok(Forecaster {
        window: w,
        mlp,
        params,
        history,
        selected_epoch,
    })
}

/// Root mean squared error over every `w`-step test window.
pub fn forecast_rmse(f: &Forecaster, test: &TraceSet) -> Result<f64> {
    let (xs, ys) = forecast_windows(test, f.window)?;
    let pred = predict_rows(&f.mlp, &f.params, &xs)?;
    Ok(mse(&pred, &ys)?.sqrt())
}
