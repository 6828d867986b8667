//! Directed hypergraph over datasets, metadata and model outputs.
//!
//! A hyperedge `e = (T_e, H_e)` connects a tail set to a head set. Edges are
//! stored in id order; per-vertex in/out lists hold positions into that
//! vector so traversals never touch a hash map.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("hyperedge {edge} references unknown vertex {vertex}")]
    DanglingVertex { edge: EdgeId, vertex: VertexId },
    #[error("hyperedge {0} has an empty tail")]
    EmptyTail(EdgeId),
    #[error("hyperedge {0} has an empty head")]
    EmptyHead(EdgeId),
    #[error("hyperedge {0} has a negative or non-finite weight")]
    BadWeight(EdgeId),
    #[error("duplicate hyperedge id {0}")]
    DuplicateEdge(EdgeId),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("duplicate vertex name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Dataset,
    Metadata,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Integration,
    Navigation,
    Provenance,
    Federated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    pub name: String,
}

/// Sorted, duplicate-free vertex set stored inline for small sizes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<VertexId>", into = "Vec<VertexId>")]
pub struct VertexSet(SmallVec<[VertexId; 2]>);

impl VertexSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: &VertexId) -> bool {
        self.0.binary_search(v).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VertexId> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[VertexId] {
        &self.0
    }

    pub fn insert(&mut self, v: VertexId) -> bool {
        match self.0.binary_search(&v) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, v);
                true
            }
        }
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        self.iter().chain(other.iter()).copied().collect()
    }

    pub fn difference(&self, removed: &BTreeSet<VertexId>) -> VertexSet {
        VertexSet(self.iter().filter(|v| !removed.contains(v)).copied().collect())
    }

    pub fn to_btree(&self) -> BTreeSet<VertexId> {
        self.iter().copied().collect()
    }
}

impl FromIterator<VertexId> for VertexSet {
    fn from_iter<I: IntoIterator<Item = VertexId>>(iter: I) -> Self {
        let mut v: SmallVec<[VertexId; 2]> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        VertexSet(v)
    }
}

impl<const N: usize> From<[VertexId; N]> for VertexSet {
    fn from(a: [VertexId; N]) -> Self {
        a.into_iter().collect()
    }
}

impl From<Vec<VertexId>> for VertexSet {
    fn from(v: Vec<VertexId>) -> Self {
        v.into_iter().collect()
    }
}

impl From<VertexSet> for Vec<VertexId> {
    fn from(s: VertexSet) -> Self {
        s.0.into_vec()
    }
}

impl<'a> IntoIterator for &'a VertexSet {
    type Item = &'a VertexId;
    type IntoIter = std::slice::Iter<'a, VertexId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub id: EdgeId,
    pub tail: VertexSet,
    pub head: VertexSet,
    pub label: EdgeLabel,
    pub weight: f64,
}

impl Hyperedge {
    pub fn new(
        id: usize,
        tail: impl IntoIterator<Item = VertexId>,
        head: impl IntoIterator<Item = VertexId>,
        label: EdgeLabel,
        weight: f64,
    ) -> Self {
        Self {
            id: EdgeId(id),
            tail: tail.into_iter().collect(),
            head: head.into_iter().collect(),
            label,
            weight,
        }
    }

    /// Integration rule: sources plus the recording metadata feed the target.
    pub fn integration(id: usize, sources: &[VertexId], meta: VertexId, target: VertexId) -> Self {
        let tail = sources.iter().copied().chain([meta]);
        Self::new(id, tail, [target], EdgeLabel::Integration, 1.0)
    }

    /// Navigation rule: two datasets sharing attributes point at the metadata
    /// vertex holding those attributes.
    pub fn navigation(id: usize, a: VertexId, b: VertexId, meta: VertexId) -> Self {
        Self::new(id, [a, b], [meta], EdgeLabel::Navigation, 1.0)
    }

    /// Provenance rule: sources plus the derived dataset's metadata produce it.
    pub fn provenance(id: usize, sources: &[VertexId], meta: VertexId, derived: VertexId) -> Self {
        let tail = sources.iter().copied().chain([meta]);
        Self::new(id, tail, [derived], EdgeLabel::Provenance, 1.0)
    }

    /// Federated rule: a node's local datasets plus its metadata yield a model.
    pub fn federated(id: usize, local: &[VertexId], meta: VertexId, model: VertexId) -> Self {
        let tail = local.iter().copied().chain([meta]);
        Self::new(id, tail, [model], EdgeLabel::Federated, 1.0)
    }

    pub fn touches(&self, v: VertexId) -> bool {
        self.tail.contains(&v) || self.head.contains(&v)
    }

    /// `T_e ∪ H_e`.
    pub fn vertices(&self) -> VertexSet {
        self.tail.union(&self.head)
    }
}

/// Default per-vertex edge cap `⌈log₂|V|⌉ + 1`.
pub fn default_edge_cap(num_vertices: usize) -> usize {
    if num_vertices <= 1 {
        1
    } else {
        (usize::BITS - (num_vertices - 1).leading_zeros()) as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    vertices: Vec<Vertex>,
    edges: Vec<Hyperedge>,
    in_edges: Vec<Vec<usize>>,
    /// Forward star: copies of the edges leaving vertex `v` occupy
    /// `forward[forward_start[v]..forward_start[v + 1]]`, in id order.
    forward: Vec<Hyperedge>,
    forward_start: Vec<usize>,
    per_vertex_edge_cap: usize,
}

impl Hypergraph {
    /// Builds a hypergraph, optionally enforcing the per-vertex edge cap.
    ///
    /// With sparsity enforcement, candidates are admitted by descending
    /// weight (ties by ascending id) and an edge is skipped if any vertex it
    /// touches already has `cap` incident edges. Vertex ids must be the
    /// positions `0..n` of `vertices`.
    pub fn construct(
        vertices: Vec<Vertex>,
        edges: Vec<Hyperedge>,
        enforce_sparsity: bool,
    ) -> Result<Self, GraphError> {
        let cap = default_edge_cap(vertices.len());
        Self::construct_with_cap(vertices, edges, enforce_sparsity, cap)
    }

    pub fn construct_with_cap(
        mut vertices: Vec<Vertex>,
        edges: Vec<Hyperedge>,
        enforce_sparsity: bool,
        cap: usize,
    ) -> Result<Self, GraphError> {
        for (i, v) in vertices.iter_mut().enumerate() {
            v.id = VertexId(i);
        }
        let n = vertices.len();
        let mut ids: Vec<EdgeId> = edges.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0]));
        }
        for e in &edges {
            if e.tail.is_empty() {
                return Err(GraphError::EmptyTail(e.id));
            }
            if e.head.is_empty() {
                return Err(GraphError::EmptyHead(e.id));
            }
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return Err(GraphError::BadWeight(e.id));
            }
            if let Some(&bad) = e.tail.iter().chain(&e.head).find(|v| v.0 >= n) {
                return Err(GraphError::DanglingVertex {
                    edge: e.id,
                    vertex: bad,
                });
            }
        }

        let admitted = if enforce_sparsity {
            let mut order: Vec<Hyperedge> = edges;
            order.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.id.cmp(&b.id)));
            let mut degree = vec![0usize; n];
            let mut kept = Vec::new();
            for e in order {
                let touched = e.vertices();
                if touched.iter().all(|v| degree[v.0] < cap) {
                    touched.iter().for_each(|v| degree[v.0] += 1);
                    kept.push(e);
                }
            }
            kept
        } else {
            edges
        };

        let mut graph = Self {
            vertices,
            edges: admitted,
            in_edges: vec![Vec::new(); n],
            forward: Vec::new(),
            forward_start: vec![0; n + 1],
            per_vertex_edge_cap: cap,
        };
        graph.edges.sort_by_key(|e| e.id);
        for (pos, e) in graph.edges.iter().enumerate() {
            for v in &e.tail {
                graph.forward_start[v.0 + 1] += 1;
            }
            for v in &e.head {
                graph.in_edges[v.0].push(pos);
            }
        }
        for v in 0..n {
            graph.forward_start[v + 1] += graph.forward_start[v];
        }
        let mut slots: Vec<Option<Hyperedge>> = vec![None; graph.forward_start[n]];
        let mut next = graph.forward_start.clone();
        for e in &graph.edges {
            for v in &e.tail {
                slots[next[v.0]] = Some(e.clone());
                next[v.0] += 1;
            }
        }
        graph.forward = slots.into_iter().map(|e| e.expect("every slot filled")).collect();
        Ok(graph)
    }

    /// Vertices named `names[i]` with the given kinds and no edges yet.
    pub fn vertices_from(spec: &[(&str, VertexKind)]) -> Vec<Vertex> {
        spec.iter()
            .enumerate()
            .map(|(i, (name, kind))| Vertex {
                id: VertexId(i),
                kind: *kind,
                name: (*name).to_owned(),
            })
            .collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> Option<&Vertex> {
        self.vertices.get(v.0)
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.vertices.iter().find(|v| v.name == name).map(|v| v.id)
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Hyperedge> {
        self.edges
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|p| &self.edges[p])
    }

    pub fn per_vertex_edge_cap(&self) -> usize {
        self.per_vertex_edge_cap
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), GraphError> {
        if v.0 < self.vertices.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownVertex(v))
        }
    }

    /// Edges whose head contains `v`, in id order.
    pub fn in_edges(&self, v: VertexId) -> impl Iterator<Item = &Hyperedge> {
        self.in_edges
            .get(v.0)
            .into_iter()
            .flatten()
            .map(|&p| &self.edges[p])
    }

    /// Edges whose tail contains `v`, in id order.
    pub fn out_edges(&self, v: VertexId) -> impl Iterator<Item = &Hyperedge> {
        let range = match (self.forward_start.get(v.0), self.forward_start.get(v.0 + 1)) {
            (Some(&a), Some(&b)) => a..b,
            _ => 0..0,
        };
        self.forward[range].iter()
    }

    /// `(In(v), Out(v))` as id sets; their union is `Adj(v)`.
    pub fn adjacency(
        &self,
        v: VertexId,
    ) -> Result<(BTreeSet<EdgeId>, BTreeSet<EdgeId>), GraphError> {
        self.check_vertex(v)?;
        let ins = self.in_edges(v).map(|e| e.id).collect();
        let outs = self.out_edges(v).map(|e| e.id).collect();
        Ok((ins, outs))
    }

    /// `|Adj(v)|`: the number of distinct edges touching `v`.
    pub fn degree(&self, v: VertexId) -> usize {
        let (i, o) = self.adjacency(v).unwrap_or_default();
        i.union(&o).count()
    }

    pub fn incidence(&self) -> IncidencePair {
        let n = self.vertices.len();
        let m = self.edges.len();
        let mut tail_rows = vec![Vec::new(); n];
        let mut head_rows = vec![Vec::new(); n];
        for (col, e) in self.edges.iter().enumerate() {
            for v in &e.tail {
                tail_rows[v.0].push(col);
            }
            for v in &e.head {
                head_rows[v.0].push(col);
            }
        }
        IncidencePair {
            tail: SparseBinary::from_rows(m, tail_rows),
            head: SparseBinary::from_rows(m, head_rows),
        }
    }

    /// `L = I_T·I_Tᵀ − I_H·I_Hᵀ`. Entry `(u, v)` counts edges with both `u`
    /// and `v` in the tail minus edges with both in the head.
    pub fn laplacian(&self) -> Vec<Vec<i64>> {
        let n = self.vertices.len();
        let mut l = vec![vec![0i64; n]; n];
        for e in &self.edges {
            for u in &e.tail {
                for v in &e.tail {
                    l[u.0][v.0] += 1;
                }
            }
            for u in &e.head {
                for v in &e.head {
                    l[u.0][v.0] -= 1;
                }
            }
        }
        l
    }

    /// True iff the vertex–edge incidence graph, ignoring direction, has a
    /// single component covering every vertex.
    pub fn weakly_connected(&self) -> bool {
        let n = self.vertices.len();
        if n <= 1 {
            return true;
        }
        let mut uf = UnionFind::new(n + self.edges.len());
        for (pos, e) in self.edges.iter().enumerate() {
            for v in e.tail.iter().chain(&e.head) {
                uf.union(v.0, n + pos);
            }
        }
        let root = uf.find(0);
        (1..n).all(|v| uf.find(v) == root)
    }

    /// Vertices reachable from `start` in the undirected expansion.
    pub fn undirected_reach(&self, start: VertexId) -> BTreeSet<VertexId> {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for e in self.in_edges(u).chain(self.out_edges(u)) {
                for &w in e.tail.iter().chain(&e.head) {
                    if seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
        }
        seen
    }

    /// Vertices reachable from `start` following edges tail → head.
    pub fn directed_reach(&self, start: VertexId) -> BTreeSet<VertexId> {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for e in self.out_edges(u) {
                for &w in &e.head {
                    if seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
        }
        seen
    }

    /// Exact rank of `I_T + I_H` over the rationals.
    pub fn incidence_sum_rank(&self) -> usize {
        let n = self.vertices.len();
        let mut rows = vec![vec![0i64; self.edges.len()]; n];
        for (col, e) in self.edges.iter().enumerate() {
            for v in &e.tail {
                rows[v.0][col] += 1;
            }
            for v in &e.head {
                rows[v.0][col] += 1;
            }
        }
        linalg::exact_rank(&rows)
    }

    /// Redundancy condition `rank(I_T + I_H) ≥ |V| − k`.
    pub fn redundancy_rank(&self, k: usize) -> bool {
        self.incidence_sum_rank() + k >= self.vertices.len()
    }

    /// Copy of this graph with every vertex in `removed` dropped from all
    /// edges; edges left with an empty tail or head disappear. Vertex ids are
    /// preserved.
    pub fn without_vertices(&self, removed: &BTreeSet<VertexId>) -> Hypergraph {
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                let tail = e.tail.difference(removed);
                let head = e.head.difference(removed);
                (!tail.is_empty() && !head.is_empty()).then(|| Hyperedge {
                    tail,
                    head,
                    ..e.clone()
                })
            })
            .collect();
        Hypergraph::construct_with_cap(
            self.vertices.clone(),
            edges,
            false,
            self.per_vertex_edge_cap,
        )
        .expect("subgraph of a valid graph is valid")
    }
}

/// A 0/1 matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinary {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparseBinary {
    fn from_rows(cols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        Self {
            cols,
            row_ptr,
            col_idx,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&c).is_ok()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        self.col_idx.iter().for_each(|&c| counts[c] += 1);
        counts
    }

    /// Row indices with a one in column `c`, ascending.
    pub fn column(&self, c: usize) -> Vec<usize> {
        (0..self.rows()).filter(|&r| self.get(r, c)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.rows())
            .map(|r| {
                let mut row = vec![0u8; self.cols];
                self.row(r).iter().for_each(|&c| row[c] = 1);
                row
            })
            .collect()
    }
}

/// Tail and head incidence matrices, `|V| × |E|`, columns in edge-id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidencePair {
    pub tail: SparseBinary,
    pub head: SparseBinary,
}

impl IncidencePair {
    /// Recovers `(tail, head)` vertex sets for each column.
    pub fn edge_sets(&self) -> Vec<(BTreeSet<VertexId>, BTreeSet<VertexId>)> {
        let mut out = vec![(BTreeSet::new(), BTreeSet::new()); self.tail.cols()];
        for r in 0..self.tail.rows() {
            for &c in self.tail.row(r) {
                out[c].0.insert(VertexId(r));
            }
            for &c in self.head.row(r) {
                out[c].1.insert(VertexId(r));
            }
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Edge count per label, handy for summaries.
pub fn label_histogram(g: &Hypergraph) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for e in g.edges() {
        *h.entry(format!("{:?}", e.label).to_lowercase()).or_insert(0) += 1;
    }
    h
}
