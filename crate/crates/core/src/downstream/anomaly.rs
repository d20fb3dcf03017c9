//! Window anomaly detection: autoencoder reconstruction error, and motif
//! causality between consecutive windows.

use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::regression_epoch;
use crate::gnn::LinkSession;
use crate::motifs::extract_chop;
use crate::nn::{Activation, Adam, Mlp, ParamStore};
use crate::rng::substream;
use crate::trace_data::{TimeSeriesTrace, TraceSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyConfig {
    pub window: usize,
    pub theta: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Threshold is mean + `threshold_std` standard deviations of the
    /// training reconstruction errors.
    pub threshold_std: f64,
    pub seed: u64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            window: 48,
            theta: 0.1,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            threshold_std: 1.0,
            seed: 0,
        }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("anomaly window, epochs and batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidConfig(format!("theta must be in [0, 1], got {}", self.theta)));
        }
        if !(self.learning_rate > 0.0 && self.threshold_std.is_finite()) {
            return Err(Error::InvalidConfig("anomaly learning rate and threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLabel {
    pub trace_id: String,
    pub window_index: usize,
    pub anomalous: bool,
    /// Reconstruction MAE (autoencoder) or MC from the previous window; the
    /// first window of a trace has no MC score.
    pub score: Option<f64>,
}

/// Non-overlapping windows of every trace, in trace order.
pub fn trace_windows(traces: &TraceSet, w: usize) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    traces
        .iter()
        .map(|t| Ok((t.trace_id.clone(), extract_chop(t, w)?)))
        .collect()
}

/// Dense `w -> 32 -> 8 -> 32 -> w` autoencoder with its decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub window: usize,
    pub mlp: Mlp,
    pub params: ParamStore,
    pub threshold: f64,
}

impl Autoencoder {
    pub fn reconstruction_error(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.window {
            return Err(Error::TauMismatch {
                expected: self.window,
                found: window.len(),
            });
        }
        let r = self.mlp.apply(&self.params, window)?;
        Ok(r.iter().zip(window).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.window as f64)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

/// Train on windows of normal traces; the threshold is mean + k·std of the
/// training reconstruction MAEs.
pub fn train_autoencoder(normal: &TraceSet, cfg: &AnomalyConfig) -> Result<Autoencoder> {
    cfg.validate()?;
    let windows: Vec<Vec<f64>> = trace_windows(normal, cfg.window)?.into_iter().flat_map(|(_, w)| w).collect();
    if windows.is_empty() {
        return Err(Error::Degenerate(format!("no complete windows of length {}", cfg.window)));
    }
    let w = cfg.window;
    let mut params = ParamStore::new();
    let mlp = Mlp::new(
        &mut params,
        "autoencoder",
        &[w, 32, 8, 32, w],
        Activation::Relu,
        Activation::Identity,
        0.0,
        &mut substream(cfg.seed, "autoencoder.init"),
    );
    let mut adam = Adam::new(cfg.learning_rate);
    let mut shuffle = substream(cfg.seed, "autoencoder.shuffle");
    for _ in 0..cfg.epochs {
        regression_epoch(&mlp, &mut params, &mut adam, &windows, &windows, cfg.batch_size, &mut shuffle)?;
    }
    let mut ae = Autoencoder {
        window: w,
        mlp,
        params,
        threshold: f64::INFINITY,
    };
    let errs: Vec<f64> = windows.iter().map(|x| ae.reconstruction_error(x)).collect::<Result<_>>()?;
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    ae.threshold = mean + cfg.threshold_std * std;
    if !ae.threshold.is_finite() {
        return Err(Error::NonFinite("reconstruction threshold".into()));
    }
    Ok(ae)
}

/// Flag windows whose reconstruction MAE exceeds the threshold.
pub fn detect_anomalies_base(ae: &Autoencoder, traces: &TraceSet) -> Result<Vec<WindowLabel>> {
    let mut out = Vec::new();
    for (id, windows) in trace_windows(traces, ae.window)? {
        for (i, w) in windows.iter().enumerate() {
            let e = ae.reconstruction_error(w)?;
            out.push(WindowLabel {
                trace_id: id.clone(),
                window_index: i,
                anomalous: e > ae.threshold,
                score: Some(e),
            });
        }
    }
    Ok(out)
}

/// Flag window `t` when the MC from window `t - 1` to window `t` is below
/// `theta`. The first window of each trace is normal.
pub fn detect_anomalies_mc(session: &LinkSession<'_>, traces: &TraceSet, cfg: &AnomalyConfig) -> Result<Vec<WindowLabel>> {
    cfg.validate()?;
    if session.model().tau != cfg.window {
        return Err(Error::TauMismatch {
            expected: cfg.window,
            found: session.model().tau,
        });
    }
    let mut out = Vec::new();
    for (id, windows) in trace_windows(traces, cfg.window)? {
        for (i, w) in windows.iter().enumerate() {
            let score = match i {
                0 => None,
                _ => Some(session.predict_new_edge(&windows[i - 1], w)?.1),
            };
            out.push(WindowLabel {
                trace_id: id.clone(),
                window_index: i,
                anomalous: score.is_some_and(|c| c < cfg.theta),
                score,
            });
        }
    }
    Ok(out)
}

/// Replace `count` randomly chosen windows (never a trace's first) with the
/// constant 1.0. Returns the modified traces and per-window truth labels in
/// [`trace_windows`] order.
pub fn inject_anomalies(traces: &TraceSet, w: usize, count: usize, seed: u64) -> Result<(TraceSet, Vec<bool>)> {
    let per_trace = traces.trace_length().unwrap_or(0) / w;
    if per_trace < 2 {
        return Err(Error::Degenerate("traces need at least two windows for injection".into()));
    }
    let slots = traces.len() * (per_trace - 1);
    if count > slots {
        return Err(Error::InvalidConfig(format!("cannot inject {count} anomalies into {slots} windows")));
    }
    let mut truth = vec![false; traces.len() * per_trace];
    for s in sample(&mut substream(seed, "inject"), slots, count) {
        let (t, b) = (s / (per_trace - 1), s % (per_trace - 1) + 1);
        truth[t * per_trace + b] = true;
    }
    let out = traces
        .iter()
        .enumerate()
        .map(|(t, tr)| {
            let mut v = tr.values.clone();
            for b in 0..per_trace {
                if truth[t * per_trace + b] {
                    v[b * w..(b + 1) * w].fill(1.0);
                }
            }
            TimeSeriesTrace::new(tr.trace_id.clone(), v)
        })
        .collect();
    Ok((TraceSet::new(out)?, truth))
}

pub fn write_labels_csv<W: Write>(labels: &[WindowLabel], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io {
        path: "labels csv".into(),
        source: e.into(),
    };
    w.write_record(["trace_id", "window_index", "label", "score"]).map_err(io)?;
    for l in labels {
        w.write_record([
            l.trace_id.clone(),
            l.window_index.to_string(),
            u8::from(l.anomalous).to_string(),
            l.score.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("labels csv", e))
}
