//! Transformation histories, traces, causal order and cycle detection.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{EdgeId, EdgeLabel, Hypergraph, VertexId};
use crate::transform::Transformation;

#[derive(Debug, Error, PartialEq)]
pub enum ProvenanceError {
    #[error("transformation `{0}` is not registered")]
    Unregistered(String),
    #[error("timestamp {at} precedes the last recorded {last}")]
    Regression { at: f64, last: f64 },
    #[error("timestamp {0} is negative or not finite")]
    BadTimestamp(f64),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
}

/// Lookup of registered transformations by id.
pub trait Registry {
    fn lookup(&self, id: &str) -> Option<&Transformation>;
}

impl Registry for BTreeMap<String, Transformation> {
    fn lookup(&self, id: &str) -> Option<&Transformation> {
        self.get(id)
    }
}

impl Registry for [Transformation] {
    fn lookup(&self, id: &str) -> Option<&Transformation> {
        self.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub transform_id: String,
    pub applied_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub dataset_ref: VertexId,
    pub attrs: BTreeSet<String>,
    pub history: Vec<HistoryEntry>,
}

impl MetadataRecord {
    pub fn new(dataset_ref: VertexId, attrs: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            dataset_ref,
            attrs: attrs.into_iter().map(Into::into).collect(),
            history: Vec::new(),
        }
    }

    /// First history entry that breaks ordering or names an unknown
    /// transformation.
    pub fn check<R: Registry + ?Sized>(&self, registry: &R) -> Result<(), ProvenanceError> {
        let mut last = 0.0;
        for h in &self.history {
            if !(h.applied_at >= 0.0 && h.applied_at.is_finite()) {
                return Err(ProvenanceError::BadTimestamp(h.applied_at));
            }
            if h.applied_at < last {
                return Err(ProvenanceError::Regression {
                    at: h.applied_at,
                    last,
                });
            }
            if registry.lookup(&h.transform_id).is_none() {
                return Err(ProvenanceError::Unregistered(h.transform_id.clone()));
            }
            last = h.applied_at;
        }
        Ok(())
    }
}

/// Appends `(t, at)` to the history of `m`.
pub fn record<R: Registry + ?Sized>(
    m: &MetadataRecord,
    t: &Transformation,
    at: f64,
    registry: &R,
) -> Result<MetadataRecord, ProvenanceError> {
    if registry.lookup(&t.id).is_none() {
        return Err(ProvenanceError::Unregistered(t.id.clone()));
    }
    if !(at >= 0.0 && at.is_finite()) {
        return Err(ProvenanceError::BadTimestamp(at));
    }
    if let Some(last) = m.history.last() {
        if at < last.applied_at {
            return Err(ProvenanceError::Regression {
                at,
                last: last.applied_at,
            });
        }
    }
    let mut out = m.clone();
    out.history.push(HistoryEntry {
        transform_id: t.id.clone(),
        applied_at: at,
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Atomic transformation ids; composites are expanded.
    pub transforms: BTreeSet<String>,
    /// `d` and every vertex reached backwards along provenance edges.
    pub ancestors: BTreeSet<VertexId>,
    /// Provenance edges walked, in id order.
    pub edges: Vec<EdgeId>,
}

/// Transformations recorded for `d` and for everything it was derived
/// from along provenance edges.
pub fn trace<R: Registry + ?Sized>(
    d: VertexId,
    metadata: &[MetadataRecord],
    g: &Hypergraph,
    registry: &R,
) -> Result<Trace, ProvenanceError> {
    if g.vertex(d).is_none() {
        return Err(ProvenanceError::UnknownVertex(d));
    }
    let mut ancestors = BTreeSet::from([d]);
    let mut edges = BTreeSet::new();
    let mut queue = VecDeque::from([d]);
    while let Some(v) = queue.pop_front() {
        for e in g.in_edges(v).filter(|e| e.label == EdgeLabel::Provenance) {
            edges.insert(e.id);
            for &u in &e.tail {
                if ancestors.insert(u) {
                    queue.push_back(u);
                }
            }
        }
    }
    let mut transforms = BTreeSet::new();
    for m in metadata.iter().filter(|m| ancestors.contains(&m.dataset_ref)) {
        for h in &m.history {
            let t = registry
                .lookup(&h.transform_id)
                .ok_or_else(|| ProvenanceError::Unregistered(h.transform_id.clone()))?;
            transforms.extend(t.components().into_iter().map(str::to_owned));
        }
    }
    Ok(Trace {
        transforms,
        ancestors,
        edges: edges.into_iter().collect(),
    })
}

/// Transitive closure of the direct-influence relation: `u → v` whenever
/// some edge has `u` in its tail and `v` in its head, or a transformation
/// derived `v` from `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalOrder {
    successors: Vec<BTreeSet<VertexId>>,
    direct_in: Vec<BTreeSet<VertexId>>,
    cyclic: bool,
}

impl CausalOrder {
    pub fn precedes(&self, a: VertexId, b: VertexId) -> bool {
        self.successors.get(a.0).is_some_and(|s| s.contains(&b))
    }

    /// Set when some vertex precedes itself; the relation is then only a
    /// preorder.
    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn successors(&self, v: VertexId) -> Option<&BTreeSet<VertexId>> {
        self.successors.get(v.0)
    }

    pub fn pairs(&self) -> Vec<(VertexId, VertexId)> {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (VertexId(i), j)))
            .collect()
    }

    /// `{u | u ≺ v}` found by walking incoming influence backwards from `v`.
    pub fn check_causal(&self, v: VertexId) -> Result<BTreeSet<VertexId>, ProvenanceError> {
        if v.0 >= self.direct_in.len() {
            return Err(ProvenanceError::UnknownVertex(v));
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &u in &self.direct_in[x.0] {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        Ok(seen)
    }
}

/// Builds `≺` from the graph plus explicit `(from, to)` derivations.
pub fn causal_order(g: &Hypergraph, derivations: &[(VertexId, VertexId)]) -> Result<CausalOrder, ProvenanceError> {
    let n = g.num_vertices();
    let mut direct_out = vec![BTreeSet::new(); n];
    let mut direct_in = vec![BTreeSet::new(); n];
    for e in g.edges() {
        for &u in &e.tail {
            for &v in &e.head {
                direct_out[u.0].insert(v);
                direct_in[v.0].insert(u);
            }
        }
    }
    for &(u, v) in derivations {
        for x in [u, v] {
            if x.0 >= n {
                return Err(ProvenanceError::UnknownVertex(x));
            }
        }
        direct_out[u.0].insert(v);
        direct_in[v.0].insert(u);
    }
    let mut successors = Vec::with_capacity(n);
    for s in 0..n {
        let mut seen = BTreeSet::new();
        let mut stack = vec![VertexId(s)];
        while let Some(x) = stack.pop() {
            for &w in &direct_out[x.0] {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        successors.push(seen);
    }
    let cyclic = successors.iter().enumerate().any(|(i, s)| s.contains(&VertexId(i)));
    Ok(CausalOrder {
        successors,
        direct_in,
        cyclic,
    })
}

pub const DEFAULT_CYCLE_CAP: usize = 8;

/// A simple directed cycle `v₀ →e₀→ v₁ → … →e_{k−1}→ v₀`, rotated so the
/// smallest vertex comes first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cycle {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeId>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

struct CycleSearch<'a> {
    g: &'a Hypergraph,
    cap: usize,
    start: VertexId,
    on_path: Vec<bool>,
    used: BTreeSet<EdgeId>,
    vertices: Vec<VertexId>,
    edges: Vec<EdgeId>,
    found: Vec<Cycle>,
}

impl CycleSearch<'_> {
    fn extend(&mut self, u: VertexId) {
        if self.edges.len() == self.cap {
            return;
        }
        let g = self.g;
        for e in g.out_edges(u) {
            if self.used.contains(&e.id) {
                continue;
            }
            for &v in &e.head {
                if v == self.start {
                    let mut edges = self.edges.clone();
                    edges.push(e.id);
                    self.found.push(Cycle {
                        vertices: self.vertices.clone(),
                        edges,
                    });
                } else if v > self.start && !self.on_path[v.0] {
                    self.on_path[v.0] = true;
                    self.used.insert(e.id);
                    self.vertices.push(v);
                    self.edges.push(e.id);
                    self.extend(v);
                    self.edges.pop();
                    self.vertices.pop();
                    self.used.remove(&e.id);
                    self.on_path[v.0] = false;
                }
            }
        }
    }
}

/// Every simple cycle of at most `cap` hyperedges, listed at each vertex
/// it passes through. Each vertex's list is sorted by length, then
/// vertices, then edges.
pub fn detect_cycles(g: &Hypergraph, cap: usize) -> BTreeMap<VertexId, Vec<Cycle>> {
    let n = g.num_vertices();
    let mut search = CycleSearch {
        g,
        cap,
        start: VertexId(0),
        on_path: vec![false; n],
        used: BTreeSet::new(),
        vertices: Vec::new(),
        edges: Vec::new(),
        found: Vec::new(),
    };
    for s in 0..n {
        let start = VertexId(s);
        search.start = start;
        search.vertices = vec![start];
        search.on_path[s] = true;
        search.extend(start);
        search.on_path[s] = false;
    }
    let mut out: BTreeMap<VertexId, Vec<Cycle>> = BTreeMap::new();
    for c in search.found {
        for &v in &c.vertices {
            out.entry(v).or_default().push(c.clone());
        }
    }
    for list in out.values_mut() {
        list.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{Hyperedge, Vertex, VertexKind};
    use crate::schema::Schema;
    use crate::transform::{compose, CostClass, Step};

    fn v(i: usize) -> VertexId {
        VertexId(i)
    }

    fn graph(n: usize, edges: Vec<Hyperedge>) -> Hypergraph {
        let verts = (0..n)
            .map(|i| Vertex {
                id: v(i),
                kind: VertexKind::Dataset,
                name: format!("x{i}"),
            })
            .collect();
        Hypergraph::construct(verts, edges, false).unwrap()
    }

    fn scale(id: &str, f: f64) -> Transformation {
        let s = Schema::numeric(&["x"]).unwrap();
        let step = Step::AffineScale {
            attribute: "x".into(),
            factor: f,
            offset: 0.0,
        };
        Transformation::new(id, s, step, CostClass::Linear).unwrap()
    }

    #[test]
    fn record_appends_in_order() {
        let reg = vec![scale("t1", 2.0), scale("t2", 3.0)];
        let m = MetadataRecord::new(v(0), ["x"]);
        let m = record(&m, &reg[0], 1.0, reg.as_slice()).unwrap();
        assert_eq!(m.history.len(), 1);
        let m = record(&m, &reg[1], 2.0, reg.as_slice()).unwrap();
        let ids: Vec<_> = m.history.iter().map(|h| h.transform_id.as_str()).collect();
        assert_eq!(ids, ["t1", "t2"]);
        assert_eq!(
            record(&m, &reg[0], 0.5, reg.as_slice()),
            Err(ProvenanceError::Regression { at: 0.5, last: 2.0 })
        );
        assert_eq!(
            record(&m, &scale("t9", 1.0), 3.0, reg.as_slice()),
            Err(ProvenanceError::Unregistered("t9".into()))
        );
    }

    #[test]
    fn trace_expands_composites_and_follows_provenance() {
        let t1 = scale("t1", 2.0);
        let t2 = scale("t2", 3.0);
        let t3 = compose(&t1, &t2).unwrap();
        let reg = vec![t1.clone(), t2.clone(), t3.clone()];
        let g = graph(3, vec![Hyperedge::new(0, [v(0)], [v(1)], EdgeLabel::Provenance, 1.0)]);
        let m0 = record(&MetadataRecord::new(v(0), ["x"]), &t1, 1.0, reg.as_slice()).unwrap();
        let m1 = record(&MetadataRecord::new(v(1), ["x"]), &t3, 2.0, reg.as_slice()).unwrap();
        let tr = trace(v(1), &[m0.clone(), m1], &g, reg.as_slice()).unwrap();
        assert_eq!(tr.transforms, BTreeSet::from(["t1".to_string(), "t2".to_string()]));
        assert_eq!(tr.edges, vec![EdgeId(0)]);
        let raw = trace(v(2), &[m0], &g, reg.as_slice()).unwrap();
        assert!(raw.transforms.is_empty());
        assert!(trace(v(7), &[], &g, reg.as_slice()).is_err());
    }

    #[test]
    fn causal_chain_and_isolated() {
        let g = graph(
            4,
            vec![
                Hyperedge::new(1, [v(0)], [v(1)], EdgeLabel::Integration, 1.0),
                Hyperedge::new(2, [v(1)], [v(2)], EdgeLabel::Integration, 1.0),
            ],
        );
        let o = causal_order(&g, &[]).unwrap();
        assert!(o.precedes(v(0), v(2)));
        assert!(!o.precedes(v(2), v(0)));
        assert!(!o.is_cyclic());
        assert!(o.successors(v(3)).unwrap().is_empty());
        assert_eq!(o.check_causal(v(2)).unwrap(), BTreeSet::from([v(0), v(1)]));
        assert!(o.check_causal(v(0)).unwrap().is_empty());
        let d = causal_order(&g, &[(v(3), v(0))]).unwrap();
        assert!(d.precedes(v(3), v(2)));
    }

    #[test]
    fn two_cycle_reported_at_both_vertices() {
        let g = graph(
            2,
            vec![
                Hyperedge::new(1, [v(0)], [v(1)], EdgeLabel::Provenance, 1.0),
                Hyperedge::new(2, [v(1)], [v(0)], EdgeLabel::Provenance, 1.0),
            ],
        );
        let cycles = detect_cycles(&g, DEFAULT_CYCLE_CAP);
        let expected = Cycle {
            vertices: vec![v(0), v(1)],
            edges: vec![EdgeId(1), EdgeId(2)],
        };
        assert_eq!(cycles[&v(0)], vec![expected.clone()]);
        assert_eq!(cycles[&v(1)], vec![expected]);
        assert!(causal_order(&g, &[]).unwrap().is_cyclic());
    }

    #[test]
    fn acyclic_chain_has_no_cycles() {
        let g = graph(
            3,
            vec![
                Hyperedge::new(0, [v(0)], [v(1)], EdgeLabel::Provenance, 1.0),
                Hyperedge::new(1, [v(1)], [v(2)], EdgeLabel::Provenance, 1.0),
            ],
        );
        assert!(detect_cycles(&g, DEFAULT_CYCLE_CAP).is_empty());
    }
}
