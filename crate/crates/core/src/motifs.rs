//! Motif extraction and the deduplicated motif set.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::trace_data::{TimeSeriesTrace, TraceSet};
use crate::{Error, Result};

pub type MotifId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub id: MotifId,
    pub values: Vec<f64>,
}

/// Every distinct motif pulled from a trace set, indexed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifSet {
    pub tau: usize,
    pub motifs: Vec<Motif>,
}

impl MotifSet {
    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    /// Ids are dense, so lookup is by position.
    pub fn get(&self, id: MotifId) -> Option<&Motif> {
        self.motifs.get(id as usize).filter(|m| m.id == id)
    }
}

/// A trace re-encoded as the sequence of its motif ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifTrace {
    pub trace_id: String,
    pub motif_ids: Vec<MotifId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMethod {
    Chop,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub method: ExtractionMethod,
    pub tau: usize,
    pub stride: usize,
    pub dedup_precision: u32,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            method: ExtractionMethod::Chop,
            tau: 48,
            stride: 48,
            dedup_precision: 6,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 2 {
            return Err(Error::InvalidConfig(format!("tau must be >= 2, got {}", self.tau)));
        }
        if self.method == ExtractionMethod::Sliding && (self.stride == 0 || self.stride > self.tau) {
            return Err(Error::InvalidConfig(format!(
                "stride must be in 1..={}, got {}",
                self.tau, self.stride
            )));
        }
        Ok(())
    }
}

/// Non-overlapping length-`tau` chunks; a trailing remainder shorter than
/// `tau` is dropped.
pub fn extract_chop(trace: &TimeSeriesTrace, tau: usize) -> Result<Vec<Vec<f64>>> {
    extract_sliding(trace, tau, tau)
}

/// Windows starting at 0, stride, 2*stride, ... that fit entirely in the trace.
pub fn extract_sliding(trace: &TimeSeriesTrace, tau: usize, stride: usize) -> Result<Vec<Vec<f64>>> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    if tau == 0 || tau > trace.len() {
        return Err(Error::InvalidConfig(format!(
            "tau {tau} exceeds trace {} of length {}",
            trace.trace_id,
            trace.len()
        )));
    }
    Ok((0..=trace.len() - tau)
        .step_by(stride)
        .map(|o| trace.values[o..o + tau].to_vec())
        .collect())
}

pub fn extract(trace: &TimeSeriesTrace, cfg: &ExtractionConfig) -> Result<Vec<Vec<f64>>> {
    match cfg.method {
        ExtractionMethod::Chop => extract_chop(trace, cfg.tau),
        ExtractionMethod::Sliding => extract_sliding(trace, cfg.tau, cfg.stride),
    }
}

const CASCADE_TOP: u32 = 12;

/// Decimal rounding applied as a cascade from `CASCADE_TOP` digits down, so
/// the value at precision `p - 1` is a function of the value at `p`. Two
/// chunks equal at some precision therefore stay equal at every coarser one.
pub(crate) fn round_to(v: f64, precision: u32) -> f64 {
    let direct = |v: f64, p: u32| {
        let scale = 10f64.powi(p as i32);
        (v * scale).round() / scale
    };
    let mut r = direct(v, precision.max(CASCADE_TOP));
    for p in (precision..CASCADE_TOP).rev() {
        r = direct(r, p);
    }
    // Fold -0.0 into 0.0 so the two never produce distinct motifs.
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

/// Round every chunk to `dedup_precision` decimals, give identical rounded
/// chunks one id (first appearance order) and re-encode each trace.
pub fn build_motif_set(
    chunks: &[(String, Vec<Vec<f64>>)],
    cfg: &ExtractionConfig,
) -> Result<(MotifSet, Vec<MotifTrace>)> {
    cfg.validate()?;
    let mut index: HashMap<Vec<u64>, MotifId> = HashMap::new();
    let mut motifs = Vec::new();
    let mut traces = Vec::with_capacity(chunks.len());
    for (trace_id, trace_chunks) in chunks {
        let mut ids = Vec::with_capacity(trace_chunks.len());
        for chunk in trace_chunks {
            if chunk.len() != cfg.tau {
                return Err(Error::TauMismatch {
                    expected: cfg.tau,
                    found: chunk.len(),
                });
            }
            let rounded: Vec<f64> = chunk.iter().map(|&v| round_to(v, cfg.dedup_precision)).collect();
            let next = motifs.len() as MotifId;
            let id = *index.entry(key(&rounded)).or_insert_with(|| {
                motifs.push(Motif { id: next, values: rounded });
                next
            });
            ids.push(id);
        }
        traces.push(MotifTrace {
            trace_id: trace_id.clone(),
            motif_ids: ids,
        });
    }
    Ok((MotifSet { tau: cfg.tau, motifs }, traces))
}

/// Extract and deduplicate motifs from every trace of a set.
pub fn motifs_from_traces(traces: &TraceSet, cfg: &ExtractionConfig) -> Result<(MotifSet, Vec<MotifTrace>)> {
    let chunks = traces
        .iter()
        .map(|t| Ok((t.trace_id.clone(), extract(t, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    build_motif_set(&chunks, cfg)
}

/// Serialized form: `{tau, motifs:[{id, values}], traces:[{trace_id, motif_ids}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifDocument {
    pub tau: usize,
    pub motifs: Vec<Motif>,
    pub traces: Vec<MotifTrace>,
}

impl MotifDocument {
    pub fn new(set: &MotifSet, traces: &[MotifTrace]) -> Self {
        Self {
            tau: set.tau,
            motifs: set.motifs.clone(),
            traces: traces.to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(MotifSet, Vec<MotifTrace>)> {
        for (i, m) in self.motifs.iter().enumerate() {
            if m.id as usize != i {
                return Err(Error::parse("motif document", format!("motif at position {i} has id {}", m.id)));
            }
            if m.values.len() != self.tau {
                return Err(Error::TauMismatch {
                    expected: self.tau,
                    found: m.values.len(),
                });
            }
        }
        let n = self.motifs.len() as MotifId;
        if let Some(bad) = self.traces.iter().flat_map(|t| &t.motif_ids).find(|&&id| id >= n) {
            return Err(Error::UnknownNode(*bad));
        }
        Ok((
            MotifSet {
                tau: self.tau,
                motifs: self.motifs,
            },
            self.traces,
        ))
    }
}
