//! The directed motif causal graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::motifs::{MotifId, MotifSet, MotifTrace};
use crate::rng::substream;
use crate::{Error, Result};

pub type Edge = (MotifId, MotifId);

/// Nodes carry motif values; edges carry motif-causality weights in [0, 1].
/// No self-loops.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotifGraph {
    tau: usize,
    nodes: BTreeMap<MotifId, Vec<f64>>,
    edges: BTreeMap<Edge, f64>,
}

impl MotifGraph {
    pub fn new(tau: usize) -> Self {
        Self {
            tau,
            ..Default::default()
        }
    }

    /// Every motif of the set as an isolated node.
    pub fn from_motifs(set: &MotifSet) -> Self {
        Self {
            tau: set.tau,
            nodes: set.motifs.iter().map(|m| (m.id, m.values.clone())).collect(),
            edges: BTreeMap::new(),
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn add_node(&mut self, id: MotifId, values: Vec<f64>) -> Result<()> {
        if values.len() != self.tau {
            return Err(Error::TauMismatch {
                expected: self.tau,
                found: values.len(),
            });
        }
        self.nodes.insert(id, values);
        Ok(())
    }

    /// Insert or overwrite an edge. Returns whether the edge is new.
    pub fn set_edge(&mut self, src: MotifId, dst: MotifId, weight: f64) -> Result<bool> {
        if src == dst {
            return Err(Error::Degenerate(format!("self-loop on node {src}")));
        }
        for id in [src, dst] {
            if !self.nodes.contains_key(&id) {
                return Err(Error::UnknownNode(id));
            }
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Degenerate(format!("edge weight {weight} outside [0, 1]")));
        }
        Ok(self.edges.insert((src, dst), weight).is_none())
    }

    pub fn remove_edge(&mut self, src: MotifId, dst: MotifId) -> bool {
        self.edges.remove(&(src, dst)).is_some()
    }

    pub fn has_edge(&self, src: MotifId, dst: MotifId) -> bool {
        self.edges.contains_key(&(src, dst))
    }

    pub fn weight(&self, src: MotifId, dst: MotifId) -> Option<f64> {
        self.edges.get(&(src, dst)).copied()
    }

    pub fn node_values(&self, id: MotifId) -> Option<&[f64]> {
        self.nodes.get(&id).map(Vec::as_slice)
    }

    pub fn contains_node(&self, id: MotifId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = (MotifId, &[f64])> {
        self.nodes.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    /// Edges in ascending (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.edges.iter().map(|(&e, &w)| (e, w))
    }

    pub fn node_ids(&self) -> Vec<MotifId> {
        self.nodes.keys().copied().collect()
    }

    /// Position of every node in ascending id order.
    pub fn node_index(&self) -> BTreeMap<MotifId, usize> {
        self.nodes.keys().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    /// Union of in- and out-neighbors for every node, as positions in
    /// ascending id order.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let index = self.node_index();
        let mut sets = vec![BTreeSet::new(); self.nodes.len()];
        for &(s, d) in self.edges.keys() {
            let (si, di) = (index[&s], index[&d]);
            sets[si].insert(di);
            sets[di].insert(si);
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    fn ordered_pairs(&self) -> usize {
        let n = self.nodes.len();
        n * n.saturating_sub(1)
    }
}

/// Preliminary graph: an edge for every consecutive motif pair of every
/// trace, weighted by `weight(src, dst)`. Repeated pairs keep one edge and
/// self-pairs are skipped. Weights are computed in parallel and merged in
/// first-appearance order.
pub fn build_initial_graph<F>(traces: &[MotifTrace], set: &MotifSet, weight: F) -> Result<MotifGraph>
where
    F: Fn(MotifId, MotifId) -> Result<f64> + Sync,
{
    if traces.is_empty() {
        return Err(Error::NoTraces);
    }
    let mut graph = MotifGraph::from_motifs(set);
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for t in traces {
        for w in t.motif_ids.windows(2) {
            let (s, d) = (w[0], w[1]);
            for id in [s, d] {
                if set.get(id).is_none() {
                    return Err(Error::UnknownNode(id));
                }
            }
            if s != d && seen.insert((s, d)) {
                pairs.push((s, d));
            }
        }
    }
    let weights: Vec<f64> = pairs
        .par_iter()
        .map(|&(s, d)| weight(s, d))
        .collect::<Result<_>>()?;
    for (&(s, d), w) in pairs.iter().zip(weights) {
        graph.set_edge(s, d, w)?;
    }
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeBatch {
    pub pairs: Vec<Edge>,
    pub is_positive: bool,
}

impl EdgeBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Uniform sample of existing edges without replacement.
pub fn sample_positive_edges(graph: &MotifGraph, batch_size: usize, seed: u64) -> Result<EdgeBatch> {
    sample_positive_with(graph, batch_size, &mut substream(seed, "positive"))
}

pub fn sample_positive_with(graph: &MotifGraph, batch_size: usize, rng: &mut crate::rng::Rng) -> Result<EdgeBatch> {
    if graph.num_edges() == 0 {
        return Err(Error::Degenerate("cannot sample edges from an edgeless graph".into()));
    }
    let all: Vec<Edge> = graph.edges.keys().copied().collect();
    let k = batch_size.min(all.len());
    let mut picks: Vec<usize> = sample(rng, all.len(), k).into_vec();
    picks.sort_unstable();
    Ok(EdgeBatch {
        pairs: picks.into_iter().map(|i| all[i]).collect(),
        is_positive: true,
    })
}

/// Distinct ordered non-self pairs that are not edges.
pub fn negative_sample_edges(graph: &MotifGraph, batch_size: usize, seed: u64) -> Result<EdgeBatch> {
    negative_sample_with(graph, batch_size, &mut substream(seed, "negative"))
}

/// Number of ordered non-self node pairs that are not edges.
pub fn available_negatives(graph: &MotifGraph) -> usize {
    graph.ordered_pairs() - graph.num_edges()
}

pub fn negative_sample_with(graph: &MotifGraph, batch_size: usize, rng: &mut crate::rng::Rng) -> Result<EdgeBatch> {
    let available = available_negatives(graph);
    if batch_size > available {
        return Err(Error::NegativeSamplingExhausted {
            wanted: batch_size,
            available,
        });
    }
    let ids = graph.node_ids();
    let n = ids.len();
    let mut chosen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(batch_size);
    // Rejection sampling while non-edges are plentiful; enumerate otherwise.
    if available >= 4 * batch_size {
        let budget = 100 * batch_size + 1000;
        let mut tries = 0;
        while pairs.len() < batch_size {
            tries += 1;
            if tries > budget {
                return Err(Error::NegativeSamplingExhausted {
                    wanted: batch_size,
                    available,
                });
            }
            let (s, d) = (ids[rng.random_range(0..n)], ids[rng.random_range(0..n)]);
            if s != d && !graph.has_edge(s, d) && chosen.insert((s, d)) {
                pairs.push((s, d));
            }
        }
    } else {
        let mut candidates = Vec::with_capacity(available);
        for &s in &ids {
            for &d in &ids {
                if s != d && !graph.has_edge(s, d) {
                    candidates.push((s, d));
                }
            }
        }
        pairs = sample(rng, candidates.len(), batch_size)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
    }
    Ok(EdgeBatch {
        pairs,
        is_positive: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditSummary {
    pub added: usize,
    pub removed: usize,
}

/// Apply the threshold rule: negative pairs whose combined score is at least
/// `theta` become edges weighted by their motif causality; positive pairs
/// scoring below `theta` are dropped.
pub fn update_edges(
    graph: &mut MotifGraph,
    positive: &EdgeBatch,
    positive_scores: &[f64],
    negative: &EdgeBatch,
    negative_scores: &[f64],
    negative_mc: &[f64],
    theta: f64,
) -> Result<EditSummary> {
    if positive.len() != positive_scores.len()
        || negative.len() != negative_scores.len()
        || negative.len() != negative_mc.len()
    {
        return Err(Error::Shape("edge batches and scores are misaligned".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!("theta must be in [0, 1], got {theta}")));
    }
    let in_unit = |v: &f64| (0.0..=1.0).contains(v);
    if !positive_scores.iter().chain(negative_scores).chain(negative_mc).all(in_unit) {
        return Err(Error::Degenerate("edge scores must lie in [0, 1]".into()));
    }
    let mut summary = EditSummary::default();
    for ((&(s, d), &score), &mc) in negative.pairs.iter().zip(negative_scores).zip(negative_mc) {
        if score >= theta && graph.set_edge(s, d, mc)? {
            summary.added += 1;
        }
    }
    for (&(s, d), &score) in positive.pairs.iter().zip(positive_scores) {
        if score < theta && graph.remove_edge(s, d) {
            summary.removed += 1;
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: MotifId,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub src: MotifId,
    pub dst: MotifId,
    pub mc: f64,
}

/// Graph JSON: `{tau, nodes:[{id, values}], edges:[{src, dst, mc}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub tau: usize,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
}

impl From<&MotifGraph> for GraphDocument {
    fn from(g: &MotifGraph) -> Self {
        Self {
            tau: g.tau,
            nodes: g.nodes().map(|(id, v)| NodeDoc { id, values: v.to_vec() }).collect(),
            edges: g.edges().map(|((src, dst), mc)| EdgeDoc { src, dst, mc }).collect(),
        }
    }
}

impl TryFrom<GraphDocument> for MotifGraph {
    type Error = Error;

    fn try_from(doc: GraphDocument) -> Result<Self> {
        let mut g = MotifGraph::new(doc.tau);
        for n in doc.nodes {
            if g.contains_node(n.id) {
                return Err(Error::parse("graph json", format!("duplicate node {}", n.id)));
            }
            g.add_node(n.id, n.values)?;
        }
        for e in doc.edges {
            if !g.set_edge(e.src, e.dst, e.mc)? {
                return Err(Error::parse("graph json", format!("duplicate edge {}->{}", e.src, e.dst)));
            }
        }
        Ok(g)
    }
}

pub fn graph_to_json(graph: &MotifGraph) -> String {
    serde_json::to_string_pretty(&GraphDocument::from(graph)).expect("graph documents always serialize")
}

pub fn graph_from_json(text: &str) -> Result<MotifGraph> {
    let doc: GraphDocument = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("graph json line {} column {}", e.line(), e.column()), e))?;
    MotifGraph::try_from(doc)
}

/// Graphviz `grayN` level for a weight: 0 (black) at weight 1, 100 (white)
/// at weight 0.
pub fn gray_level(weight: f64) -> u32 {
    (100.0 * (1.0 - weight.clamp(0.0, 1.0))).round() as u32
}

pub fn graph_to_dot(graph: &MotifGraph) -> String {
    let mut out = String::from("digraph motifs {\n");
    for (id, _) in graph.nodes() {
        let _ = writeln!(out, "  m{id} [label=\"{id}\"];");
    }
    for ((s, d), w) in graph.edges() {
        let _ = writeln!(out, "  m{s} -> m{d} [color=\"gray{}\", label=\"{w:.2}\"];", gray_level(w));
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(graph: &MotifGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Dot => graph_to_dot(graph),
        GraphFormat::Json => graph_to_json(graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motifs::Motif;

    fn set(n: u32) -> MotifSet {
        MotifSet {
            tau: 2,
            motifs: (0..n).map(|i| Motif { id: i, values: vec![i as f64, 0.5] }).collect(),
        }
    }

    fn trace(ids: &[u32]) -> MotifTrace {
        MotifTrace {
            trace_id: "t".into(),
            motif_ids: ids.to_vec(),
        }
    }

    fn const_weight(_: MotifId, _: MotifId) -> Result<f64> {
        Ok(0.5)
    }

    #[test]
    fn consecutive_motifs_become_edges() {
        let g = build_initial_graph(&[trace(&[1, 2, 5])], &set(6), const_weight).unwrap();
        assert_eq!(g.edges().map(|(e, _)| e).collect::<Vec<_>>(), vec![(1, 2), (2, 5)]);
        let g = build_initial_graph(&[trace(&[3])], &set(6), const_weight).unwrap();
        assert_eq!(g.num_edges(), 0);
        let g = build_initial_graph(&[trace(&[1, 1, 2])], &set(6), const_weight).unwrap();
        assert_eq!(g.edges().map(|(e, _)| e).collect::<Vec<_>>(), vec![(1, 2)]);
        assert!(build_initial_graph(&[], &set(6), const_weight).is_err());
    }

    #[test]
    fn repeated_pairs_keep_first_weight() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let g = build_initial_graph(&[trace(&[0, 1, 0, 1]), trace(&[0, 1])], &set(2), |s, _| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(if s == 0 { 0.25 } else { 0.75 })
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 2);
        assert_eq!(g.weight(0, 1), Some(0.25));
        assert_eq!(g.weight(1, 0), Some(0.75));
    }

    fn chain_graph(n: u32) -> MotifGraph {
        let ids: Vec<u32> = (0..n).collect();
        build_initial_graph(&[trace(&ids)], &set(n), const_weight).unwrap()
    }

    #[test]
    fn positive_sampling() {
        let g = chain_graph(6);
        assert_eq!(sample_positive_edges(&g, 100, 1).unwrap().len(), 5);
        assert!(sample_positive_edges(&g, 0, 1).unwrap().is_empty());
        assert_eq!(sample_positive_edges(&g, 3, 9).unwrap(), sample_positive_edges(&g, 3, 9).unwrap());
        assert!(sample_positive_edges(&MotifGraph::from_motifs(&set(3)), 2, 1).is_err());
    }

    #[test]
    fn negative_sampling_enumerates_small_graphs() {
        let g = MotifGraph::from_motifs(&set(3));
        let mut b = negative_sample_edges(&g, 6, 2).unwrap().pairs;
        b.sort_unstable();
        assert_eq!(b, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let mut g = MotifGraph::from_motifs(&set(3));
        for s in 0..3 {
            for d in 0..3 {
                if s != d {
                    g.set_edge(s, d, 0.1).unwrap();
                }
            }
        }
        assert!(matches!(
            negative_sample_edges(&g, 1, 0),
            Err(Error::NegativeSamplingExhausted { .. })
        ));
    }

    #[test]
    fn negatives_avoid_edges_and_self_pairs() {
        let g = chain_graph(40);
        for seed in 0..20 {
            let b = negative_sample_edges(&g, 50, seed).unwrap();
            let distinct: BTreeSet<_> = b.pairs.iter().collect();
            assert_eq!(distinct.len(), 50);
            assert!(b.pairs.iter().all(|&(s, d)| s != d && !g.has_edge(s, d)));
        }
    }

    #[test]
    fn update_thresholds() {
        let base = chain_graph(4);
        let pos = sample_positive_edges(&base, 10, 0).unwrap();
        let neg = negative_sample_edges(&base, 4, 0).unwrap();
        let mut g = base.clone();
        let s = update_edges(&mut g, &pos, &[0.0; 3], &neg, &[0.0; 4], &[0.3; 4], 0.0).unwrap();
        assert_eq!(s, EditSummary { added: 4, removed: 0 });
        assert_eq!(g.num_edges(), 7);

        let mut g = base.clone();
        let s = update_edges(&mut g, &pos, &[0.99, 1.0, 0.5], &neg, &[0.0; 4], &[0.3; 4], 1.0).unwrap();
        assert_eq!(s, EditSummary { added: 0, removed: 2 });

        let mut g = base.clone();
        let one = EdgeBatch { pairs: vec![(3, 0)], is_positive: false };
        let empty = EdgeBatch { pairs: vec![], is_positive: true };
        let s = update_edges(&mut g, &empty, &[], &one, &[0.15], &[0.4], 0.1).unwrap();
        assert_eq!(s.added, 1);
        assert_eq!(g.weight(3, 0), Some(0.4));
        assert!(update_edges(&mut g, &empty, &[0.1], &one, &[0.15], &[0.4], 0.1).is_err());
    }

    #[test]
    fn update_is_idempotent_and_counts_deltas() {
        let base = chain_graph(8);
        let pos = sample_positive_edges(&base, 4, 3).unwrap();
        let neg = negative_sample_edges(&base, 6, 3).unwrap();
        let ps = [0.05, 0.5, 0.01, 0.9];
        let ns = [0.2, 0.05, 0.3, 0.0, 0.11, 0.09];
        let mc = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut g = base.clone();
        let s1 = update_edges(&mut g, &pos, &ps, &neg, &ns, &mc, 0.1).unwrap();
        assert_eq!(g.num_edges() as isize - base.num_edges() as isize, s1.added as isize - s1.removed as isize);
        let once = g.clone();
        let s2 = update_edges(&mut g, &pos, &ps, &neg, &ns, &mc, 0.1).unwrap();
        assert_eq!(g, once);
        assert_eq!(s2, EditSummary::default());
        assert!(g.edges().all(|((s, d), w)| s != d && (0.0..=1.0).contains(&w)));
    }

    #[test]
    fn json_round_trip_and_empty_documents() {
        let mut g = chain_graph(5);
        g.set_edge(4, 0, 1.0 / 3.0).unwrap();
        assert_eq!(graph_from_json(&graph_to_json(&g)).unwrap(), g);
        let empty = MotifGraph::new(48);
        assert_eq!(graph_from_json(&graph_to_json(&empty)).unwrap(), empty);
        assert_eq!(graph_to_dot(&empty), "digraph motifs {\n}\n");
        let err = graph_from_json("{\"tau\": 2, \"nodes\": [").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn dot_darkness_tracks_weight() {
        let mut g = MotifGraph::from_motifs(&set(3));
        g.set_edge(0, 1, 1.0).unwrap();
        g.set_edge(1, 2, 0.25).unwrap();
        let dot = graph_to_dot(&g);
        assert!(dot.contains("m0 -> m1 [color=\"gray0\", label=\"1.00\"]"), "{dot}");
        assert!(dot.contains("m1 -> m2 [color=\"gray75\", label=\"0.25\"]"), "{dot}");
        assert!(gray_level(0.9) < gray_level(0.1));
    }

    #[test]
    fn edges_require_known_nodes_and_unit_weights() {
        let mut g = MotifGraph::from_motifs(&set(2));
        assert!(g.set_edge(0, 0, 0.5).is_err());
        assert!(matches!(g.set_edge(0, 7, 0.5), Err(Error::UnknownNode(7))));
        assert!(g.set_edge(0, 1, 1.5).is_err());
        assert!(g.add_node(9, vec![1.0]).is_err());
    }
}
