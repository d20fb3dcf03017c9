//! Inductive graph encoder and link predictor.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{mc_with_pooled, pool_conditioning_set, EntropyConfig};
use crate::graph::{Edge, MotifGraph};
use crate::motifs::MotifId;
use crate::nn::{Activation, Adjacency, Linear, Mlp, Mode, ParamStore, Tape, Tensor, Var};
use crate::rng::substream;
use crate::{Error, Result};

/// Probabilities are kept this far from 0 and 1.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub sage_layers: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub trailing_linears: usize,
    pub predictor_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sage_layers: 2,
            hidden_dim: 64,
            embed_dim: 32,
            trailing_linears: 1,
            predictor_hidden: 32,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sage_layers == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.predictor_hidden == 0 {
            return Err(Error::InvalidConfig("model layer counts and widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// One sample-and-aggregate layer: `ReLU(W [h_v ; mean_u h_u])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub combine: Linear,
}

impl SageLayer {
    pub fn out_dim(&self) -> usize {
        self.combine.out_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub input_dim: usize,
    pub sage: Vec<SageLayer>,
    pub trailing: Vec<Linear>,
    pub dropout: f64,
}

impl Encoder {
    fn new(store: &mut ParamStore, tau: usize, cfg: &ModelConfig, rng: &mut crate::rng::Rng) -> Self {
        let mut dims = vec![tau];
        dims.extend(std::iter::repeat_n(cfg.hidden_dim, cfg.sage_layers - 1));
        dims.push(cfg.embed_dim);
        let sage = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| SageLayer {
                combine: Linear::new(store, &format!("encoder.sage{i}"), 2 * d[0], d[1], rng),
            })
            .collect();
        let trailing = (0..cfg.trailing_linears)
            .map(|i| Linear::new(store, &format!("encoder.linear{i}"), cfg.embed_dim, cfg.embed_dim, rng))
            .collect();
        Self {
            input_dim: tau,
            sage,
            trailing,
            dropout: cfg.dropout,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.trailing
            .last()
            .map(|l| l.out_dim)
            .or_else(|| self.sage.last().map(SageLayer::out_dim))
            .unwrap_or(0)
    }

    /// Embeddings for all rows of `x`, one row per node.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, adj: &Arc<Adjacency>, mode: &mut Mode<'_>) -> Result<Var> {
        if tape.value(x).cols() != self.input_dim {
            return Err(Error::TauMismatch {
                expected: self.input_dim,
                found: tape.value(x).cols(),
            });
        }
        let mut h = x;
        for layer in &self.sage {
            let agg = tape.aggregate(h, Arc::clone(adj))?;
            let cat = tape.concat(h, agg)?;
            h = layer.combine.forward(tape, cat)?;
            h = tape.relu(h);
            h = tape.dropout(h, self.dropout, mode.rng())?;
        }
        for layer in &self.trailing {
            h = layer.forward(tape, h)?;
            h = tape.dropout(h, self.dropout, mode.rng())?;
        }
        Ok(h)
    }

    fn validate(&self, store: &ParamStore) -> Result<()> {
        let mut dim = self.input_dim;
        for l in &self.sage {
            l.combine.validate(store)?;
            if l.combine.in_dim != 2 * dim {
                return Err(Error::Shape("encoder layers do not chain".into()));
            }
            dim = l.combine.out_dim;
        }
        for l in &self.trailing {
            l.validate(store)?;
            if l.in_dim != dim {
                return Err(Error::Shape("encoder layers do not chain".into()));
            }
            dim = l.out_dim;
        }
        Ok(())
    }
}

/// MLP on `z_i * z_j` ending in a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredictor {
    pub mlp: Mlp,
}

impl LinkPredictor {
    fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut crate::rng::Rng) -> Self {
        let mlp = Mlp::new(
            store,
            "predictor",
            &[cfg.embed_dim, cfg.predictor_hidden, 1],
            Activation::Relu,
            Activation::Identity,
            cfg.dropout,
            rng,
        );
        Self { mlp }
    }

    /// Edge probabilities `[m, 1]` for rows `src[k]`, `dst[k]` of `emb`.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        emb: Var,
        src: &[usize],
        dst: &[usize],
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let a = tape.gather_rows(emb, src)?;
        let b = tape.gather_rows(emb, dst)?;
        let prod = tape.mul(a, b)?;
        let logit = self.mlp.forward(tape, prod, mode)?;
        let p = tape.sigmoid(logit);
        Ok(tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS))
    }
}

/// Conditioning candidates for motif causality. For a pair, `K` is the first
/// `k_size` candidates whose values differ from both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningSample {
    pub k_size: usize,
    pub candidates: Vec<Vec<f64>>,
}

impl ConditioningSample {
    /// Seeded draw of `k_size + 2` distinct nodes of the graph.
    pub fn draw(graph: &MotifGraph, k_size: usize, seed: u64) -> Self {
        let mut ids = graph.node_ids();
        ids.shuffle(&mut substream(seed, "conditioning"));
        ids.truncate(k_size + 2);
        Self {
            k_size,
            candidates: ids
                .into_iter()
                .map(|id| graph.node_values(id).expect("id from graph").to_vec())
                .collect(),
        }
    }

    pub fn for_pair<'a>(&'a self, source: &[f64], target: &[f64]) -> Vec<&'a [f64]> {
        self.candidates
            .iter()
            .filter(|c| c.as_slice() != source && c.as_slice() != target)
            .take(self.k_size)
            .map(Vec::as_slice)
            .collect()
    }

    /// Motif causality of `source` on `target` conditioned on this sample.
    pub fn mc(&self, source: &[f64], target: &[f64], entropy: &EntropyConfig) -> Result<f64> {
        let tau = target.len();
        if source.len() != tau {
            return Err(Error::TauMismatch {
                expected: tau,
                found: source.len(),
            });
        }
        let k = self.for_pair(source, target);
        let pooled = pool_conditioning_set(&k, tau)?;
        mc_with_pooled(source, target, pooled.as_deref(), entropy)
    }
}

/// Trained encoder, predictor and everything needed to score new pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoModel {
    pub tau: usize,
    pub config: ModelConfig,
    pub entropy: EntropyConfig,
    pub conditioning: ConditioningSample,
    pub encoder: Encoder,
    pub predictor: LinkPredictor,
    pub params: ParamStore,
}

impl DiscoModel {
    pub fn new(
        tau: usize,
        config: ModelConfig,
        entropy: EntropyConfig,
        conditioning: ConditioningSample,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        entropy.validate(Some(tau))?;
        if let Some(c) = conditioning.candidates.iter().find(|c| c.len() != tau) {
            return Err(Error::TauMismatch {
                expected: tau,
                found: c.len(),
            });
        }
        let mut rng = substream(seed, "init");
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&mut params, tau, &config, &mut rng);
        let predictor = LinkPredictor::new(&mut params, &config, &mut rng);
        Ok(Self {
            tau,
            config,
            entropy,
            conditioning,
            encoder,
            predictor,
            params,
        })
    }

    /// Structural check after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.entropy.validate(Some(self.tau))?;
        if self.encoder.input_dim != self.tau {
            return Err(Error::TauMismatch {
                expected: self.tau,
                found: self.encoder.input_dim,
            });
        }
        self.encoder.validate(&self.params)?;
        for l in &self.predictor.mlp.layers {
            l.validate(&self.params)?;
        }
        if self.predictor.mlp.in_dim() != self.encoder.embed_dim() || self.predictor.mlp.out_dim() != 1 {
            return Err(Error::Shape("predictor does not match encoder".into()));
        }
        if !self.params.iter().all(|p| p.value.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Motif causality of `source` on `target` under this model's conditioning sample.
    pub fn mc(&self, source: &[f64], target: &[f64]) -> Result<f64> {
        for m in [source, target] {
            if m.len() != self.tau {
                return Err(Error::TauMismatch {
                    expected: self.tau,
                    found: m.len(),
                });
            }
        }
        self.conditioning.mc(source, target, &self.entropy)
    }
}

/// Node features and neighborhood of a graph in the encoder's row order.
pub struct GraphInputs {
    pub index: BTreeMap<MotifId, usize>,
    pub features: Tensor,
    pub adjacency: Arc<Adjacency>,
}

impl GraphInputs {
    pub fn new(graph: &MotifGraph) -> Result<Self> {
        if graph.num_nodes() == 0 {
            return Err(Error::Degenerate("graph has no nodes".into()));
        }
        let data: Vec<f64> = graph.nodes().flat_map(|(_, v)| v.iter().copied()).collect();
        Ok(Self {
            index: graph.node_index(),
            features: Tensor::matrix(graph.num_nodes(), graph.tau(), data)?,
            adjacency: Arc::new(Adjacency::mean(&graph.undirected_neighbors())),
        })
    }

    pub fn rows(&self, pairs: &[Edge]) -> Result<(Vec<usize>, Vec<usize>)> {
        let look = |id: MotifId| self.index.get(&id).copied().ok_or(Error::UnknownNode(id));
        pairs.iter().map(|&(s, d)| Ok((look(s)?, look(d)?))).collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip())
    }
}

/// Node-id keyed embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub index: BTreeMap<MotifId, usize>,
    pub values: Tensor,
}

impl Embeddings {
    pub fn get(&self, id: MotifId) -> Option<&[f64]> {
        self.index.get(&id).map(|&r| self.values.row_slice(r))
    }
}

pub fn encode(graph: &MotifGraph, model: &DiscoModel, mode: &mut Mode<'_>) -> Result<Embeddings> {
    if graph.tau() != model.tau {
        return Err(Error::TauMismatch {
            expected: model.tau,
            found: graph.tau(),
        });
    }
    let inputs = GraphInputs::new(graph)?;
    let mut tape = Tape::new(&model.params);
    let x = tape.constant(inputs.features.clone())?;
    let emb = model.encoder.forward(&mut tape, x, &inputs.adjacency, mode)?;
    Ok(Embeddings {
        index: inputs.index,
        values: tape.value(emb).clone(),
    })
}

/// Run-scoped memo of motif causality per ordered node pair.
#[derive(Debug, Default)]
pub struct McCache {
    map: Mutex<HashMap<Edge, f64>>,
}

impl McCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values for `pairs`, computing missing entries in parallel.
    pub fn values(&self, graph: &MotifGraph, model: &DiscoModel, pairs: &[Edge]) -> Result<Vec<f64>> {
        let missing: Vec<Edge> = {
            let map = self.map.lock().expect("cache lock");
            let mut m: Vec<Edge> = pairs.iter().copied().filter(|p| !map.contains_key(p)).collect();
            m.sort_unstable();
            m.dedup();
            m
        };
        let computed: Vec<(Edge, f64)> = missing
            .par_iter()
            .map(|&(s, d)| {
                let a = graph.node_values(s).ok_or(Error::UnknownNode(s))?;
                let b = graph.node_values(d).ok_or(Error::UnknownNode(d))?;
                Ok(((s, d), model.mc(a, b)?))
            })
            .collect::<Result<_>>()?;
        let mut map = self.map.lock().expect("cache lock");
        for (k, v) in computed {
            map.entry(k).or_insert(v);
        }
        Ok(pairs.iter().map(|p| map[p]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkScores {
    pub p: Vec<f64>,
    pub c: Vec<f64>,
}

/// Eval-mode `(p, c)` for node pairs of `graph`.
pub fn predict_links(
    graph: &MotifGraph,
    model: &DiscoModel,
    emb: &Embeddings,
    pairs: &[Edge],
    cache: &McCache,
) -> Result<LinkScores> {
    let c = cache.values(graph, model, pairs)?;
    let mut p = Vec::with_capacity(pairs.len());
    for &(s, d) in pairs {
        let a = emb.get(s).ok_or(Error::UnknownNode(s))?;
        let b = emb.get(d).ok_or(Error::UnknownNode(d))?;
        p.push(pair_probability(model, a, b)?);
    }
    Ok(LinkScores { p, c })
}

fn pair_probability(model: &DiscoModel, a: &[f64], b: &[f64]) -> Result<f64> {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let logit = model.predictor.mlp.apply(&model.params, &prod)?[0];
    let p = crate::nn::sigmoid(logit).clamp(PROB_EPS, 1.0 - PROB_EPS);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::NonFinite("edge probability".into()))
    }
}

/// A frozen model attached read-only to a graph, for scoring arbitrary motifs.
pub struct LinkSession<'a> {
    model: &'a DiscoModel,
    embeddings: Embeddings,
    lookup: HashMap<Vec<u64>, MotifId>,
}

fn key(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

impl<'a> LinkSession<'a> {
    pub fn new(model: &'a DiscoModel, graph: &MotifGraph) -> Result<Self> {
        let embeddings = encode(graph, model, &mut Mode::Eval)?;
        let lookup = graph.nodes().map(|(id, v)| (key(v), id)).collect();
        Ok(Self {
            model,
            embeddings,
            lookup,
        })
    }

    pub fn model(&self) -> &DiscoModel {
        self.model
    }

    /// Embedding of a motif: its graph embedding if the values match a node,
    /// otherwise the embedding of an isolated node with these features.
    pub fn embed(&self, motif: &[f64]) -> Result<Vec<f64>> {
        if motif.len() != self.model.tau {
            return Err(Error::TauMismatch {
                expected: self.model.tau,
                found: motif.len(),
            });
        }
        if let Some(&id) = self.lookup.get(&key(motif)) {
            return Ok(self.embeddings.get(id).expect("indexed node").to_vec());
        }
        let mut tape = Tape::new(&self.model.params);
        let x = tape.constant(Tensor::row(motif.to_vec()))?;
        let adj = Arc::new(Adjacency::mean(&[vec![]]));
        let z = self.model.encoder.forward(&mut tape, x, &adj, &mut Mode::Eval)?;
        Ok(tape.value(z).data().to_vec())
    }

    /// `(p, c)` for the directed pair `a -> b`.
    pub fn predict_new_edge(&self, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
        let (za, zb) = (self.embed(a)?, self.embed(b)?);
        Ok((pair_probability(self.model, &za, &zb)?, self.model.mc(a, b)?))
    }
}

pub fn predict_new_edge(model: &DiscoModel, graph: &MotifGraph, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    LinkSession::new(model, graph)?.predict_new_edge(a, b)
}
