//! k-means over whole traces with a DTW distance, optionally extended by a
//! motif-causality term.

use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dtw::dtw;
use crate::gnn::LinkSession;
use crate::rng::substream;
use crate::trace_data::TraceSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub k: usize,
    pub tau: usize,
    pub mc_weight: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 3,
            tau: 48,
            mc_weight: 1.0,
            max_iters: 20,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.tau == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("cluster k must be at least 2, tau and max_iters positive".into()));
        }
        if !(self.mc_weight >= 0.0 && self.mc_weight.is_finite()) {
            return Err(Error::InvalidConfig("cluster mc_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Mean MC from each `tau`-block of the centroid to the aligned block of the
/// trace.
pub fn average_mc(session: &LinkSession<'_>, centroid: &[f64], trace: &[f64], tau: usize) -> Result<f64> {
    let blocks = centroid.len().min(trace.len()) / tau;
    if blocks == 0 {
        return Err(Error::Degenerate(format!("sequences shorter than one motif of length {tau}")));
    }
    let mut total = 0.0;
    for b in 0..blocks {
        let r = b * tau..(b + 1) * tau;
        total += session.predict_new_edge(&centroid[r.clone()], &trace[r])?.1;
    }
    Ok(total / blocks as f64)
}

fn distance(trace: &[f64], centroid: &[f64], cfg: &ClusterConfig, mc: Option<&LinkSession<'_>>) -> Result<f64> {
    let d = dtw(trace, centroid)?;
    match mc {
        Some(s) if cfg.mc_weight > 0.0 => Ok(d + cfg.mc_weight * (1.0 - average_mc(s, centroid, trace, cfg.tau)?)),
        _ => Ok(d),
    }
}

/// Lloyd iteration: assign each trace to its nearest centroid (lowest index
/// on ties), then move each centroid to the pointwise mean of its members.
/// An empty cluster keeps its centroid. Starts from `k` distinct traces.
pub fn kmeans(traces: &TraceSet, cfg: &ClusterConfig, mc: Option<&LinkSession<'_>>) -> Result<Clustering> {
    cfg.validate()?;
    let n = traces.len();
    if cfg.k > n {
        return Err(Error::InvalidConfig(format!("k = {} exceeds the {n} traces", cfg.k)));
    }
    if let Some(s) = mc {
        if s.model().tau != cfg.tau {
            return Err(Error::TauMismatch {
                expected: cfg.tau,
                found: s.model().tau,
            });
        }
    }
    let data: Vec<&[f64]> = traces.iter().map(|t| t.values.as_slice()).collect();
    let mut centroids: Vec<Vec<f64>> = sample(&mut substream(cfg.seed, "kmeans.init"), n, cfg.k)
        .into_iter()
        .map(|i| data[i].to_vec())
        .collect();
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let next: Vec<usize> = data
            .par_iter()
            .map(|t| {
                let mut best = (0, f64::INFINITY);
                for (c, cent) in centroids.iter().enumerate() {
                    let d = distance(t, cent, cfg, mc)?;
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                Ok(best.0)
            })
            .collect::<Result<_>>()?;
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
        for (c, cent) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = (0..n).filter(|&i| assignments[i] == c).map(|i| data[i]).collect();
            if members.is_empty() {
                continue;
            }
            let len = cent.len();
            *cent = (0..len)
                .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
                .collect();
        }
    }
    Ok(Clustering {
        assignments,
        centroids,
        iterations,
    })
}

pub fn write_assignments_csv<W: Write>(traces: &TraceSet, clustering: &Clustering, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io {
        path: "assignments csv".into(),
        source: e.into(),
    };
    w.write_record(["trace_id", "cluster"]).map_err(io)?;
    for (t, c) in traces.iter().zip(&clustering.assignments) {
        w.write_record([t.trace_id.clone(), c.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("assignments csv", e))
}
