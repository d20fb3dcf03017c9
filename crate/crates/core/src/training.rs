//! Link-prediction training of the motif graph, and the timing harness.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::entropy::EntropyConfig;
use crate::gnn::{ConditioningSample, DiscoModel, GraphInputs, McCache, ModelConfig};
use crate::graph::{
    available_negatives, build_initial_graph, negative_sample_with, sample_positive_with, update_edges, Edge,
    EdgeBatch, EditSummary, MotifGraph,
};
use crate::motifs::{motifs_from_traces, ExtractionConfig, MotifSet, MotifTrace};
use crate::nn::{Adam, Gradients, Mode, Tape, Tensor, Var};
use crate::rng::{substream, Rng};
use crate::trace_data::{generate_synthetic, PlantedStructure};
use crate::{Error, Result};

/// Scores are clamped this far inside (0, 1) before taking logs.
pub const LOSS_EPS: f64 = 1e-7;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub theta: f64,
    /// Upper bound on positives per epoch; the realized batch is
    /// `min(pos_batch, |edges|)`.
    pub pos_batch: usize,
    /// Negatives per epoch; defaults to the realized positive batch size.
    pub neg_batch: Option<usize>,
    pub learning_rate: f64,
    pub seed: u64,
    pub k_size: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            gamma: 0.7,
            lambda: 0.5,
            theta: 0.1,
            pos_batch: 512,
            neg_batch: None,
            learning_rate: 1e-3,
            seed: 0,
            k_size: 8,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.gamma >= 0.0 && self.lambda >= 0.0 && self.gamma.is_finite() && self.lambda.is_finite()) {
            return bad(format!("gamma and lambda must be non-negative, got {} and {}", self.gamma, self.lambda));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must be in [0, 1], got {}", self.theta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.pos_batch == 0 {
            return bad("pos_batch must be positive".into());
        }
        self.model.validate()
    }

    pub fn combined(&self, p: f64, c: f64) -> f64 {
        combined_score(p, c, self.gamma, self.lambda)
    }
}

/// `clamp(gamma * p + lambda * c, 0, 1)`.
pub fn combined_score(p: f64, c: f64, gamma: f64, lambda: f64) -> f64 {
    (gamma * p + lambda * c).clamp(0.0, 1.0)
}

/// Binary cross-entropy on combined scores: positives toward 1, negatives
/// toward 0, both clamped into `[LOSS_EPS, 1 - LOSS_EPS]`. Summed.
pub fn link_loss(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() && negative.is_empty() {
        return Err(Error::Degenerate("loss over two empty batches".into()));
    }
    let c = |v: f64| v.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    let l = -positive.iter().map(|&y| c(y).ln()).sum::<f64>() - negative.iter().map(|&s| c(1.0 - s).ln()).sum::<f64>();
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::NonFinite("loss".into()))
    }
}

/// Conditioning sample a run uses for graph `g` (drawn from its node set).
pub fn conditioning_for(g: &MotifGraph, cfg: &TrainConfig) -> ConditioningSample {
    ConditioningSample::draw(g, cfg.k_size, cfg.seed)
}

/// Preliminary graph over `set` with motif-causality weights under the same
/// conditioning sample that [`train`] will draw.
pub fn build_graph(
    set: &MotifSet,
    traces: &[MotifTrace],
    cfg: &TrainConfig,
    entropy: &EntropyConfig,
) -> Result<MotifGraph> {
    entropy.validate(Some(set.tau))?;
    let cond = conditioning_for(&MotifGraph::from_motifs(set), cfg);
    build_initial_graph(traces, set, |s, d| {
        let a = &set.get(s).ok_or(Error::UnknownNode(s))?.values;
        let b = &set.get(d).ok_or(Error::UnknownNode(d))?.values;
        cond.mc(a, b, entropy)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub edits: Vec<EditSummary>,
    pub initial_edges: usize,
    pub final_edges: usize,
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub model: DiscoModel,
    pub graph: MotifGraph,
    pub report: TrainReport,
    /// Combined score of every pair at its last evaluation.
    pub last_scores: BTreeMap<Edge, f64>,
}

impl TrainOutcome {
    /// Evaluated pairs whose presence in the final graph disagrees with
    /// their last score against `theta`.
    pub fn audit(&self, theta: f64) -> Vec<(Edge, f64)> {
        self.last_scores
            .iter()
            .filter(|(&(s, d), &score)| self.graph.has_edge(s, d) != (score >= theta))
            .map(|(&e, &s)| (e, s))
            .collect()
    }
}

struct EpochResult {
    loss: f64,
    grads: Gradients,
    pos_scores: Vec<f64>,
    neg_scores: Vec<f64>,
    neg_mc: Vec<f64>,
}

fn column(values: &[f64]) -> Result<Tensor> {
    Tensor::matrix(values.len(), 1, values.to_vec())
}

/// `clamp(gamma * p + lambda * c, 0, 1)` on the tape; `c` is a constant.
fn tape_scores(tape: &mut Tape<'_>, p: Var, c: &[f64], cfg: &TrainConfig) -> Result<Var> {
    let lc: Vec<f64> = c.iter().map(|v| cfg.lambda * v).collect();
    let scaled = tape.affine(p, cfg.gamma, 0.0);
    let lc = tape.constant(column(&lc)?)?;
    let s = tape.add(scaled, lc)?;
    Ok(tape.clamp(s, 0.0, 1.0))
}

fn log_likelihood(tape: &mut Tape<'_>, s: Var) -> Result<Var> {
    let s = tape.clamp(s, LOSS_EPS, 1.0 - LOSS_EPS);
    let l = tape.log(s)?;
    Ok(tape.sum(l))
}

#[allow(clippy::too_many_arguments)]
fn epoch_step(
    graph: &MotifGraph,
    model: &DiscoModel,
    cfg: &TrainConfig,
    cache: &McCache,
    pos: &EdgeBatch,
    neg: &EdgeBatch,
    dropout: &mut Rng,
) -> Result<EpochResult> {
    let inputs = GraphInputs::new(graph)?;
    let c_pos = cache.values(graph, model, &pos.pairs)?;
    let c_neg = cache.values(graph, model, &neg.pairs)?;
    let mut tape = Tape::new(&model.params);
    let mut mode = Mode::Train(dropout);
    let x = tape.constant(inputs.features.clone())?;
    let emb = model.encoder.forward(&mut tape, x, &inputs.adjacency, &mut mode)?;
    let mut total = None;
    let mut pos_scores = Vec::new();
    let mut neg_scores = Vec::new();
    if !pos.is_empty() {
        let (src, dst) = inputs.rows(&pos.pairs)?;
        let p = model.predictor.forward(&mut tape, emb, &src, &dst, &mut mode)?;
        let s = tape_scores(&mut tape, p, &c_pos, cfg)?;
        pos_scores = tape.value(s).data().to_vec();
        total = Some(log_likelihood(&mut tape, s)?);
    }
    if !neg.is_empty() {
        let (src, dst) = inputs.rows(&neg.pairs)?;
        let p = model.predictor.forward(&mut tape, emb, &src, &dst, &mut mode)?;
        let s = tape_scores(&mut tape, p, &c_neg, cfg)?;
        neg_scores = tape.value(s).data().to_vec();
        let inv = tape.affine(s, -1.0, 1.0);
        let term = log_likelihood(&mut tape, inv)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let total = total.ok_or_else(|| Error::Degenerate("loss over two empty batches".into()))?;
    let loss = tape.affine(total, -1.0, 0.0);
    let grads = tape.backward(loss)?;
    Ok(EpochResult {
        loss: tape.value(loss).data()[0],
        grads,
        pos_scores,
        neg_scores,
        neg_mc: c_neg,
    })
}

fn sample_batches(graph: &MotifGraph, cfg: &TrainConfig, rng: &mut Rng) -> Result<(EdgeBatch, EdgeBatch)> {
    let pos = if graph.num_edges() > 0 {
        sample_positive_with(graph, cfg.pos_batch, rng)?
    } else {
        EdgeBatch {
            pairs: vec![],
            is_positive: true,
        }
    };
    let want = match cfg.neg_batch {
        Some(n) => n,
        None if pos.is_empty() => cfg.pos_batch.min(available_negatives(graph)),
        None => pos.len().min(available_negatives(graph)),
    };
    let neg = negative_sample_with(graph, want, rng)?;
    Ok((pos, neg))
}

/// Alternating link-prediction training with threshold-driven graph edits,
/// once per epoch. Deterministic given `cfg.seed`.
pub fn train(mut graph: MotifGraph, cfg: &TrainConfig, entropy: &EntropyConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    if graph.num_edges() == 0 {
        return Err(Error::Degenerate("training needs a graph with at least one edge".into()));
    }
    let mut model = DiscoModel::new(graph.tau(), cfg.model, *entropy, conditioning_for(&graph, cfg), cfg.seed)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let cache = McCache::new();
    let mut sampling = substream(cfg.seed, "sampling");
    let mut dropout = substream(cfg.seed, "dropout");
    let initial_edges = graph.num_edges();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut edits = Vec::with_capacity(cfg.epochs);
    let mut last_scores = BTreeMap::new();
    for epoch in 1..=cfg.epochs {
        let mut step = || -> Result<()> {
            let (pos, neg) = sample_batches(&graph, cfg, &mut sampling)?;
            let r = epoch_step(&graph, &model, cfg, &cache, &pos, &neg, &mut dropout)?;
            adam.step(&mut model.params, &r.grads)?;
            let summary = update_edges(&mut graph, &pos, &r.pos_scores, &neg, &r.neg_scores, &r.neg_mc, cfg.theta)?;
            for (e, s) in pos.pairs.iter().zip(&r.pos_scores).chain(neg.pairs.iter().zip(&r.neg_scores)) {
                last_scores.insert(*e, *s);
            }
            losses.push(r.loss);
            edits.push(summary);
            Ok(())
        };
        step().map_err(|e| Error::Epoch {
            epoch,
            source: Box::new(e),
        })?;
    }
    let report = TrainReport {
        epoch_losses: losses,
        edits,
        initial_edges,
        final_edges: graph.num_edges(),
        wall_seconds: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
    };
    Ok(TrainOutcome {
        model,
        graph,
        report,
        last_scores,
    })
}

/// Everything needed to reproduce predictions after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub train: TrainConfig,
    pub model: DiscoModel,
}

impl Checkpoint {
    pub fn new(train: TrainConfig, model: DiscoModel) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            train,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoints always serialize")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("{source}:{}:{}", e.line(), e.column()), e))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::parse(source, format!("unsupported checkpoint version {}", ck.version)));
        }
        ck.model.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Sweep values for the timing harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchGrid {
    pub n: Vec<usize>,
    pub tau: Vec<usize>,
    /// Template counts; each cell is generated without noise so the motif
    /// set size follows the template count.
    pub templates: Vec<usize>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            n: vec![10, 50, 100],
            tau: vec![6, 48, 144],
            templates: vec![25, 100, 400],
        }
    }
}

/// Fixed settings shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchBase {
    pub n: usize,
    pub tau: usize,
    pub templates: usize,
    pub successors: usize,
    pub trace_length: usize,
    pub noise_sigma: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchBase {
    fn default() -> Self {
        Self {
            n: 50,
            tau: 48,
            templates: 10,
            successors: 2,
            trace_length: 576,
            noise_sigma: 0.02,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub parameter: String,
    pub value: usize,
    pub seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Seconds to build the preliminary graph and train it, median over repeats.
fn time_cell(
    structure: &PlantedStructure,
    n: usize,
    trace_length: usize,
    tau: usize,
    base: &BenchBase,
    cfg: &TrainConfig,
    entropy: &EntropyConfig,
) -> Result<(usize, f64)> {
    let traces = generate_synthetic(structure, n, trace_length)?;
    let ext = ExtractionConfig {
        tau,
        stride: tau,
        ..Default::default()
    };
    let (set, motif_traces) = motifs_from_traces(&traces, &ext)?;
    let mut times = Vec::with_capacity(base.repeats);
    for _ in 0..base.repeats {
        let t0 = Instant::now();
        let g = build_graph(&set, &motif_traces, cfg, entropy)?;
        train(g, cfg, entropy)?;
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok((set.len(), median(times)))
}

/// Training time over sweeps of trace count `n`, motif length `tau` (fixed
/// data) and motif set size. Cells run sequentially.
pub fn benchmark_scalability(
    grid: &BenchGrid,
    base: &BenchBase,
    cfg: &TrainConfig,
    entropy: &EntropyConfig,
) -> Result<Vec<BenchRow>> {
    if grid.n.is_empty() && grid.tau.is_empty() && grid.templates.is_empty() {
        return Err(Error::InvalidConfig("benchmark grid is empty".into()));
    }
    if base.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    let mut rows = Vec::new();
    let planted = |templates: usize, noise: f64| {
        PlantedStructure::random(templates, base.tau, base.successors.min(templates - 1), noise, base.seed)
    };
    if !grid.n.is_empty() {
        let s = planted(base.templates, base.noise_sigma)?;
        for &n in &grid.n {
            let (_, secs) = time_cell(&s, n, base.trace_length, base.tau, base, cfg, entropy)?;
            rows.push(BenchRow {
                parameter: "n".into(),
                value: n,
                seconds: secs,
            });
        }
    }
    if !grid.tau.is_empty() {
        let s = planted(base.templates, base.noise_sigma)?;
        for &tau in &grid.tau {
            let (_, secs) = time_cell(&s, base.n, base.trace_length, tau, base, cfg, entropy)?;
            rows.push(BenchRow {
                parameter: "tau".into(),
                value: tau,
                seconds: secs,
            });
        }
    }
    for &m in &grid.templates {
        if m < 2 {
            return Err(Error::InvalidConfig("template sweep needs at least 2 templates per cell".into()));
        }
        let s = planted(m, 0.0)?;
        let (size, secs) = time_cell(&s, base.n, base.trace_length, base.tau, base, cfg, entropy)?;
        rows.push(BenchRow {
            parameter: "motifs".into(),
            value: size,
            seconds: secs,
        });
    }
    Ok(rows)
}

pub const BENCH_HEADER: [&str; 3] = ["parameter", "value", "seconds"];

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io {
        path: "benchmark csv".into(),
        source: e.into(),
    };
    w.write_record(BENCH_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([r.parameter.clone(), r.value.to_string(), format!("{:.6}", r.seconds)])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "benchmark csv".into(),
        source: e,
    })
}
