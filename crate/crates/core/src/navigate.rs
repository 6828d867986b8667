//! Metadata-driven navigation over hyperedge paths.
//!
//! A step along edge `e` goes from a vertex `u ∈ T_e` to a vertex
//! `v ∈ H_e` and costs `w(e, u, v)`. Labels are ordered by cost, then by
//! number of steps, then by the edge-id sequence, so results are unique.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::governance::{parse_predicate, Context, PolicyError, PredicateExpr};
use crate::hypergraph::{EdgeId, Hyperedge, Hypergraph, VertexId, VertexKind};
use crate::transform::{DiscreteDataset, Value};

#[derive(Debug, Error, PartialEq)]
pub enum NavError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("step weight {weight} on {edge} is negative or not finite")]
    BadWeight { edge: EdgeId, weight: f64 },
    #[error(transparent)]
    Predicate(#[from] PolicyError),
    #[error("graph exceeds 2^32 vertices or edges")]
    TooLarge,
}

/// Cost of one step `u → v` along `e`.
pub trait StepWeight {
    fn weight(&self, e: &Hyperedge, u: VertexId, v: VertexId) -> f64;
}

impl<F: Fn(&Hyperedge, VertexId, VertexId) -> f64> StepWeight for F {
    fn weight(&self, e: &Hyperedge, u: VertexId, v: VertexId) -> f64 {
        self(e, u, v)
    }
}

/// Every step costs 1: the cost is the hyperedge count.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitWeight;

impl StepWeight for UnitWeight {
    fn weight(&self, _: &Hyperedge, _: VertexId, _: VertexId) -> f64 {
        1.0
    }
}

/// Every step costs the weight stored on its edge.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeWeight;

impl StepWeight for EdgeWeight {
    fn weight(&self, e: &Hyperedge, _: VertexId, _: VertexId) -> f64 {
        e.weight
    }
}

/// `w(u, v) = 1 − sim(α_u, α_v)` with `sim` the Jaccard index of the
/// attribute-name sets; two empty sets count as identical.
#[derive(Debug, Clone, Default)]
pub struct SimilarityWeight {
    attrs: Vec<BTreeSet<String>>,
}

impl SimilarityWeight {
    /// `attrs[i]` holds the attribute names of vertex `i`.
    pub fn new(attrs: Vec<BTreeSet<String>>) -> Self {
        Self { attrs }
    }

    pub fn sim(&self, u: VertexId, v: VertexId) -> f64 {
        let empty = BTreeSet::new();
        let a = self.attrs.get(u.0).unwrap_or(&empty);
        let b = self.attrs.get(v.0).unwrap_or(&empty);
        let union = a.union(b).count();
        if union == 0 {
            return 1.0;
        }
        a.intersection(b).count() as f64 / union as f64
    }
}

impl StepWeight for SimilarityWeight {
    fn weight(&self, _: &Hyperedge, u: VertexId, v: VertexId) -> f64 {
        1.0 - self.sim(u, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPath {
    pub edges: Vec<EdgeId>,
    /// Visited vertices, starting at the source; one more than `edges`.
    pub vertices: Vec<VertexId>,
    pub cost: f64,
}

impl HyperPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Checks step membership and `H_{e_i} ∩ T_{e_{i+1}} ≠ ∅`, and that the
    /// cost is the sum of step weights.
    pub fn is_valid_in<W: StepWeight + ?Sized>(&self, g: &Hypergraph, w: &W) -> bool {
        if self.vertices.len() != self.edges.len() + 1 {
            return false;
        }
        let mut cost = 0.0;
        for (i, id) in self.edges.iter().enumerate() {
            let Some(e) = g.edge(*id) else { return false };
            let (u, v) = (self.vertices[i], self.vertices[i + 1]);
            if !e.tail.contains(&u) || !e.head.contains(&v) {
                return false;
            }
            if let Some(next) = self.edges.get(i + 1).and_then(|n| g.edge(*n)) {
                if !e.head.iter().any(|x| next.tail.contains(x)) {
                    return false;
                }
            }
            cost += w.weight(e, u, v);
        }
        cost == self.cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    cost: f64,
    len: u32,
    vertex: u32,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.len.cmp(&other.len))
            .then(self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-vertex search state, kept together so a relaxation touches one
/// record.
#[derive(Debug, Clone, Copy)]
struct Label {
    cost: f64,
    len: u32,
    settled: bool,
    pred: Option<(u32, u32)>,
}

const UNREACHED: Label = Label {
    cost: f64::INFINITY,
    len: 0,
    settled: false,
    pred: None,
};

/// Single-source shortest hyperpaths.
#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    source: VertexId,
    labels: Vec<Label>,
}

impl ShortestPathTree {
    pub fn source(&self) -> VertexId {
        self.source
    }

    /// `None` when `v` is unreachable or unknown.
    pub fn cost(&self, v: VertexId) -> Option<f64> {
        self.labels.get(v.0).map(|l| l.cost).filter(|c| c.is_finite())
    }

    pub fn reachable(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.labels.len()).filter(|&i| self.labels[i].cost.is_finite()).map(VertexId)
    }

    fn edge_sequence(&self, mut v: VertexId) -> Vec<EdgeId> {
        let mut seq = Vec::with_capacity(self.labels[v.0].len as usize);
        while let Some((e, u)) = self.labels[v.0].pred {
            seq.push(EdgeId(e as usize));
            v = VertexId(u as usize);
        }
        seq.reverse();
        seq
    }

    pub fn path_to(&self, target: VertexId) -> Option<HyperPath> {
        let cost = self.cost(target)?;
        let mut edges = Vec::with_capacity(self.labels[target.0].len as usize);
        let mut vertices = vec![target];
        let mut v = target;
        while let Some((e, u)) = self.labels[v.0].pred {
            edges.push(EdgeId(e as usize));
            v = VertexId(u as usize);
            vertices.push(v);
        }
        edges.reverse();
        vertices.reverse();
        Some(HyperPath {
            edges,
            vertices,
            cost,
        })
    }
}

fn check(g: &Hypergraph, v: VertexId) -> Result<(), NavError> {
    g.vertex(v).map(|_| ()).ok_or(NavError::UnknownVertex(v))
}

fn search<W: StepWeight + ?Sized>(
    g: &Hypergraph,
    source: VertexId,
    target: Option<VertexId>,
    w: &W,
) -> Result<ShortestPathTree, NavError> {
    check(g, source)?;
    if let Some(t) = target {
        check(g, t)?;
    }
    let n = g.num_vertices();
    if n > u32::MAX as usize || g.num_edges() > u32::MAX as usize {
        return Err(NavError::TooLarge);
    }
    let mut tree = ShortestPathTree {
        source,
        labels: vec![UNREACHED; n],
    };
    let mut heap = BinaryHeap::new();
    let mut steps: Vec<(EdgeId, VertexId, f64)> = Vec::new();
    tree.labels[source.0].cost = 0.0;
    heap.push(Reverse(Key {
        cost: 0.0,
        len: 0,
        vertex: source.0 as u32,
    }));
    while let Some(Reverse(Key { cost, len, vertex })) = heap.pop() {
        let vertex = vertex as usize;
        let here = &mut tree.labels[vertex];
        if here.settled || cost != here.cost || len != here.len {
            continue;
        }
        here.settled = true;
        if target == Some(VertexId(vertex)) {
            break;
        }
        let u = VertexId(vertex);
        // Gather steps before relaxing so the edge loads are independent.
        steps.clear();
        for e in g.out_edges(u) {
            for &v in &e.head {
                let step = w.weight(e, u, v);
                if !(step >= 0.0 && step.is_finite()) {
                    return Err(NavError::BadWeight {
                        edge: e.id,
                        weight: step,
                    });
                }
                steps.push((e.id, v, step));
            }
        }
        for &(e, v, step) in &steps {
            let there = tree.labels[v.0];
            if there.settled {
                continue;
            }
            let c = cost + step;
            let l = len + 1;
            let better = match c.total_cmp(&there.cost).then(l.cmp(&there.len)) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => {
                    let mut cand = tree.edge_sequence(u);
                    cand.push(e);
                    cand < tree.edge_sequence(v)
                }
            };
            if better {
                tree.labels[v.0] = Label {
                    cost: c,
                    len: l,
                    settled: false,
                    pred: Some((e.0 as u32, u.0 as u32)),
                };
                heap.push(Reverse(Key {
                    cost: c,
                    len: l,
                    vertex: v.0 as u32,
                }));
            }
        }
    }
    Ok(tree)
}

/// Shortest hyperpaths from `source` to every reachable vertex.
pub fn shortest_paths_from<W: StepWeight + ?Sized>(
    g: &Hypergraph,
    source: VertexId,
    w: &W,
) -> Result<ShortestPathTree, NavError> {
    search(g, source, None, w)
}

/// Minimum-cost hyperpath from `vs` to `vt`, or `None` if `vt` is
/// unreachable.
pub fn shortest_path<W: StepWeight + ?Sized>(
    g: &Hypergraph,
    vs: VertexId,
    vt: VertexId,
    w: &W,
) -> Result<Option<HyperPath>, NavError> {
    Ok(search(g, vs, Some(vt), w)?.path_to(vt))
}

/// Datasets held by dataset vertices.
pub trait RecordSource {
    fn dataset(&self, v: VertexId) -> Option<&DiscreteDataset>;
}

impl RecordSource for BTreeMap<VertexId, DiscreteDataset> {
    fn dataset(&self, v: VertexId) -> Option<&DiscreteDataset> {
        self.get(&v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub predicate: PredicateExpr,
    pub anchor: VertexId,
}

impl Query {
    pub fn parse(text: &str, anchor: VertexId) -> Result<Self, NavError> {
        Ok(Self {
            predicate: parse_predicate(text)?,
            anchor,
        })
    }
}

struct RecordContext<'a> {
    d: &'a DiscreteDataset,
    row: &'a [Option<Value>],
}

impl Context for RecordContext<'_> {
    fn data(&self, name: &str) -> Option<Value> {
        let i = self.d.schema().index_of(name)?;
        self.row[i].clone()
    }

    fn user(&self, _: &str) -> Option<Value> {
        None
    }
}

fn satisfies(q: &Query, d: &DiscreteDataset) -> Result<bool, NavError> {
    for row in d.records() {
        match q.predicate.eval(&RecordContext { d, row }) {
            Ok(true) => return Ok(true),
            Ok(false) | Err(PolicyError::UnknownField(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(false)
}

/// Dataset vertices reachable from the anchor with at least one stored
/// record satisfying the predicate, sorted by path cost then vertex id.
/// A record missing a referenced attribute does not satisfy it.
pub fn resolve_query<W: StepWeight + ?Sized, S: RecordSource + ?Sized>(
    g: &Hypergraph,
    q: &Query,
    store: &S,
    w: &W,
) -> Result<Vec<(VertexId, HyperPath)>, NavError> {
    let tree = shortest_paths_from(g, q.anchor, w)?;
    let mut out = Vec::new();
    for v in tree.reachable() {
        if g.vertex(v).map(|x| x.kind) != Some(VertexKind::Dataset) {
            continue;
        }
        let Some(d) = store.dataset(v) else { continue };
        if satisfies(q, d)? {
            out.extend(tree.path_to(v).map(|p| (v, p)));
        }
    }
    out.sort_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Largest finite hop distance in the directed expansion (`u → v` for
/// `u ∈ T_e`, `v ∈ H_e`).
pub fn hop_diameter(g: &Hypergraph) -> usize {
    let n = g.num_vertices();
    let mut best = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            best = best.max(dist[u]);
            for e in g.out_edges(VertexId(u)) {
                for v in &e.head {
                    if dist[v.0] == usize::MAX {
                        dist[v.0] = dist[u] + 1;
                        queue.push_back(v.0);
                    }
                }
            }
        }
    }
    best
}

/// Checks that every finite shortest-path cost is at most the hop
/// diameter times the largest step weight.
pub fn diameter_bound_check<W: StepWeight + ?Sized>(g: &Hypergraph, w: &W) -> Result<bool, NavError> {
    let mut max_w: f64 = 0.0;
    for e in g.edges() {
        for &u in &e.tail {
            for &v in &e.head {
                max_w = max_w.max(w.weight(e, u, v));
            }
        }
    }
    let bound = hop_diameter(g) as f64 * max_w;
    for s in 0..g.num_vertices() {
        let tree = shortest_paths_from(g, VertexId(s), w)?;
        if tree.reachable().any(|v| tree.labels[v.0].cost > bound * (1.0 + 1e-12)) {
            return Ok(false);
        }
    }
    Ok(true)
}
