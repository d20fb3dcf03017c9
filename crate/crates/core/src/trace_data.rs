//! Trace ingestion, splitting, normalization and planted-structure synthesis.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::{Error, Result};

/// Default number of points in a day-long trace (5-minute sampling).
pub const DEFAULT_TRACE_LENGTH: usize = 288;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTrace {
    pub trace_id: String,
    pub values: Vec<f64>,
}

impl TimeSeriesTrace {
    pub fn new(trace_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            trace_id: trace_id.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A collection of equal-length traces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSet {
    traces: Vec<TimeSeriesTrace>,
}

impl TraceSet {
    pub fn new(traces: Vec<TimeSeriesTrace>) -> Result<Self> {
        if let Some(first) = traces.first() {
            let expected = first.len();
            if expected == 0 {
                return Err(Error::RaggedTrace {
                    trace_id: first.trace_id.clone(),
                    expected: 1,
                    found: 0,
                });
            }
            for t in &traces {
                if t.len() != expected {
                    return Err(Error::RaggedTrace {
                        trace_id: t.trace_id.clone(),
                        expected,
                        found: t.len(),
                    });
                }
                if let Some(v) = t.values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("trace {} (value {v})", t.trace_id)));
                }
            }
        }
        Ok(Self { traces })
    }

    pub fn traces(&self) -> &[TimeSeriesTrace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<TimeSeriesTrace> {
        self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Common trace length, `None` for an empty set.
    pub fn trace_length(&self) -> Option<usize> {
        self.traces.first().map(TimeSeriesTrace::len)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TimeSeriesTrace> {
        self.traces.iter()
    }

    fn min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.traces.iter().flat_map(|t| t.values.iter().copied());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

impl<'a> IntoIterator for &'a TraceSet {
    type Item = &'a TimeSeriesTrace;
    type IntoIter = std::slice::Iter<'a, TimeSeriesTrace>;

    fn into_iter(self) -> Self::IntoIter {
        self.traces.iter()
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    trace_id: String,
    t: usize,
    value: f64,
}

/// Load a `trace_id,t,value` CSV. Traces keep first-appearance order and are
/// sorted by `t` within each trace.
pub fn load_traces(path: impl AsRef<Path>, expected_length: usize) -> Result<TraceSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces(file, expected_length, &path.display().to_string())
}

pub fn read_traces<R: Read>(reader: R, expected_length: usize, source: &str) -> Result<TraceSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(i + 2, |p| p.line() as usize);
            Error::parse(format!("{source}:{line}"), e)
        })?;
        let entry = grouped.entry(row.trace_id.clone()).or_insert_with(|| {
            order.push(row.trace_id.clone());
            Vec::new()
        });
        entry.push((row.t, row.value));
    }
    if order.is_empty() {
        return Err(Error::NoTraces);
    }
    let mut traces = Vec::with_capacity(order.len());
    for id in order {
        let mut points = grouped.remove(&id).unwrap_or_default();
        if points.len() != expected_length {
            return Err(Error::RaggedTrace {
                trace_id: id,
                expected: expected_length,
                found: points.len(),
            });
        }
        points.sort_by_key(|&(t, _)| t);
        if points.iter().enumerate().any(|(i, &(t, _))| t != i) {
            return Err(Error::parse(
                source,
                format!("trace {id}: t indices must be exactly 0..{expected_length}"),
            ));
        }
        traces.push(TimeSeriesTrace::new(id, points.into_iter().map(|(_, v)| v).collect()));
    }
    TraceSet::new(traces)
}

pub fn write_traces<W: Write>(traces: &TraceSet, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::parse("trace csv", e);
    wtr.write_record(["trace_id", "t", "value"]).map_err(wrap)?;
    for trace in traces {
        for (t, v) in trace.values.iter().enumerate() {
            wtr.write_record([trace.trace_id.as_str(), &t.to_string(), &v.to_string()])
                .map_err(wrap)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("trace csv", e))?;
    Ok(())
}

pub fn save_traces(traces: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_traces(traces, std::io::BufWriter::new(file))
}

/// Ground-truth generator: a first-order Markov chain over motif templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedStructure {
    pub templates: Vec<Vec<f64>>,
    pub transition_matrix: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PlantedStructure {
    /// Random smooth templates on the unit scale, each with `successors`
    /// distinct non-self successors chosen uniformly and visited with equal
    /// probability.
    pub fn random(
        num_templates: usize,
        tau: usize,
        successors: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_templates < 2 {
            return Err(Error::InvalidConfig("need at least 2 templates".into()));
        }
        if successors == 0 || successors >= num_templates {
            return Err(Error::InvalidConfig(format!(
                "successors must be in 1..{num_templates}, got {successors}"
            )));
        }
        if tau < 2 {
            return Err(Error::InvalidConfig("template length must be at least 2".into()));
        }
        let mut rng = substream(seed, "templates");
        let mut templates: Vec<Vec<f64>> = Vec::with_capacity(num_templates);
        while templates.len() < num_templates {
            let t = smooth_template(&mut rng, tau);
            if templates.iter().all(|o| o != &t) {
                templates.push(t);
            }
        }
        let mut matrix = vec![vec![0.0; num_templates]; num_templates];
        for (i, row) in matrix.iter_mut().enumerate() {
            let mut others: Vec<usize> = (0..num_templates).filter(|&j| j != i).collect();
            others.shuffle(&mut rng);
            for &j in &others[..successors] {
                row[j] = 1.0 / successors as f64;
            }
        }
        let s = Self {
            templates,
            transition_matrix: matrix,
            noise_sigma,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn tau(&self) -> usize {
        self.templates.first().map_or(0, Vec::len)
    }

    /// Ordered (from, to) template pairs with non-zero transition probability.
    pub fn transitions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.transition_matrix.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.templates.len();
        if m == 0 {
            return Err(Error::InvalidConfig("no templates".into()));
        }
        let tau = self.tau();
        if tau < 2 || self.templates.iter().any(|t| t.len() != tau) {
            return Err(Error::InvalidConfig("templates must share a length >= 2".into()));
        }
        if self.templates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("template values".into()));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if self.templates[i] == self.templates[j] {
                    return Err(Error::InvalidConfig(format!("templates {i} and {j} are identical")));
                }
            }
        }
        if self.transition_matrix.len() != m {
            return Err(Error::InvalidConfig("transition matrix must be square over templates".into()));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            if row.len() != m || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidConfig(format!("transition row {i} is malformed")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("transition row {i} sums to {sum}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn smooth_template(rng: &mut crate::rng::Rng, tau: usize) -> Vec<f64> {
    let base = rng.random_range(0.3..0.7);
    let slope = rng.random_range(-0.2..0.2);
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| {
            let center = rng.random_range(0.0..1.0);
            let width = rng.random_range(0.08..0.3);
            let amp = rng.random_range(0.1..0.35) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (center, width, amp)
        })
        .collect();
    (0..tau)
        .map(|k| {
            let x = k as f64 / (tau - 1) as f64;
            let bump: f64 = bumps
                .iter()
                .map(|&(c, w, a)| a * (-((x - c) / w).powi(2) / 2.0).exp())
                .sum();
            (base + slope * (x - 0.5) + bump).clamp(0.05, 0.95)
        })
        .collect()
}

/// Synthetic traces plus the template index of every block.
#[derive(Debug, Clone)]
pub struct LabeledTraces {
    pub traces: TraceSet,
    pub states: Vec<Vec<usize>>,
}

pub fn generate_synthetic(structure: &PlantedStructure, n: usize, trace_length: usize) -> Result<TraceSet> {
    generate_labeled(structure, n, trace_length).map(|l| l.traces)
}

pub fn generate_labeled(
    structure: &PlantedStructure,
    n: usize,
    trace_length: usize,
) -> Result<LabeledTraces> {
    structure.validate()?;
    let tau = structure.tau();
    if n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    if trace_length == 0 || trace_length % tau != 0 {
        return Err(Error::InvalidConfig(format!(
            "trace length {trace_length} is not a positive multiple of template length {tau}"
        )));
    }
    let blocks = trace_length / tau;
    let m = structure.templates.len();
    let mut rng = substream(structure.seed, "synthetic");
    let noise = Normal::new(0.0, structure.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise_sigma: {e}")))?;
    let mut traces = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for i in 0..n {
        let mut state = rng.random_range(0..m);
        let mut values = Vec::with_capacity(trace_length);
        let mut seq = Vec::with_capacity(blocks);
        for b in 0..blocks {
            if b > 0 {
                state = sample_row(&structure.transition_matrix[state], &mut rng);
            }
            seq.push(state);
            for &v in &structure.templates[state] {
                let eps = if structure.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                values.push(v + eps);
            }
        }
        traces.push(TimeSeriesTrace::new(format!("synthetic-{i:04}"), values));
        states.push(seq);
    }
    Ok(LabeledTraces {
        traces: TraceSet::new(traces)?,
        states,
    })
}

fn sample_row(row: &[f64], rng: &mut crate::rng::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// Min-max parameters fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

impl NormParams {
    pub fn fit(traces: &TraceSet) -> Result<Self> {
        let (min, max) = traces.min_max().ok_or(Error::NoTraces)?;
        if max <= min {
            return Err(Error::Degenerate(format!("constant trace set (all values {min})")));
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, traces: &TraceSet) -> TraceSet {
        let scale = self.max - self.min;
        let traces = traces
            .iter()
            .map(|t| {
                TimeSeriesTrace::new(
                    t.trace_id.clone(),
                    t.values.iter().map(|v| (v - self.min) / scale).collect(),
                )
            })
            .collect();
        TraceSet { traces }
    }

    pub fn inverse(&self, value: f64) -> f64 {
        self.min + value * (self.max - self.min)
    }
}

/// Fit min-max parameters on `traces` and scale them onto [0, 1].
pub fn normalize(traces: &TraceSet) -> Result<(TraceSet, NormParams)> {
    let params = NormParams::fit(traces)?;
    // Unit-range input maps onto itself; skip the arithmetic to keep it exact.
    if params.min == 0.0 && params.max == 1.0 {
        return Ok((traces.clone(), params));
    }
    Ok((params.apply(traces), params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded train/test partition. Train size is `round(train_fraction * n)`,
/// kept within `1..n` so both sides are non-empty. Each side keeps the
/// original relative order.
pub fn split(traces: &TraceSet, cfg: &SplitConfig) -> Result<(TraceSet, TraceSet)> {
    let n = traces.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("need at least 2 traces to split, got {n}")));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    let n_train = ((cfg.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(cfg.seed, "split"));
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |ids: &[usize]| TraceSet {
        traces: ids.iter().map(|&i| traces.traces[i].clone()).collect(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}
