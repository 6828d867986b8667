//! Assigning datasets to nodes.
//!
//! The objective is `Σ compute(d) + Σ comm(d, d')·link(a(d), a(d'))` over
//! dataset pairs placed on different nodes. Balancing is handled
//! separately by [`rebalance`].

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, VertexId};
use crate::linalg::{top_eigenpairs_by_magnitude, Matrix};

pub type NodeId = usize;

/// Largest `|N|^|D|` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

const EIGEN_TOL: f64 = 1e-9;
const EIGEN_MAX_ITER: usize = 10_000;
const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("dataset {0} has no node")]
    Unassigned(VertexId),
    #[error("node {node} out of range for {nodes} nodes")]
    BadNode { node: NodeId, nodes: usize },
    #[error("cost for {0} is negative or not finite")]
    BadCost(String),
    #[error("link matrix must be square, symmetric and nonnegative")]
    BadLink,
    #[error("{nodes}^{datasets} assignments exceed the exhaustive limit")]
    TooLarge { nodes: usize, datasets: usize },
    #[error("k = {k} must lie in 1..={max}")]
    BadK { k: usize, max: usize },
    #[error("need at least one node")]
    NoNodes,
    #[error("cap {cap} is below the mean load {mean}")]
    InfeasibleCap { cap: f64, mean: f64 },
    #[error("partial results of different kinds")]
    KindMismatch,
    #[error("no partial results")]
    Empty,
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment(pub BTreeMap<VertexId, NodeId>);

impl Assignment {
    pub fn node_of(&self, d: VertexId) -> Option<NodeId> {
        self.0.get(&d).copied()
    }

    /// `D_n` for every node `0..nodes`.
    pub fn hosted(&self, nodes: usize) -> Vec<BTreeSet<VertexId>> {
        let mut out = vec![BTreeSet::new(); nodes];
        for (&d, &n) in &self.0 {
            if n < nodes {
                out[n].insert(d);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    compute: BTreeMap<VertexId, f64>,
    /// Keyed by `(min, max)`.
    comm: BTreeMap<(VertexId, VertexId), f64>,
    link: Option<Vec<Vec<f64>>>,
    analytics: BTreeMap<NodeId, f64>,
}

fn check_cost(what: impl FnOnce() -> String, x: f64) -> Result<(), PartitionError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(PartitionError::BadCost(what()))
    }
}

impl CostModel {
    pub fn new(
        compute: BTreeMap<VertexId, f64>,
        comm: impl IntoIterator<Item = ((VertexId, VertexId), f64)>,
    ) -> Result<Self, PartitionError> {
        for (d, &c) in &compute {
            check_cost(|| d.to_string(), c)?;
        }
        let mut pairs = BTreeMap::new();
        for ((a, b), c) in comm {
            check_cost(|| format!("({a}, {b})"), c)?;
            for x in [a, b] {
                if !compute.contains_key(&x) {
                    return Err(PartitionError::UnknownVertex(x));
                }
            }
            if a != b {
                *pairs.entry((a.min(b), a.max(b))).or_insert(0.0) += c;
            }
        }
        Ok(Self {
            compute,
            comm: pairs,
            link: None,
            analytics: BTreeMap::new(),
        })
    }

    /// Compute costs as given; `comm(d, d')` is the total weight of
    /// hyperedges touching both datasets.
    pub fn from_hypergraph(g: &Hypergraph, compute: BTreeMap<VertexId, f64>) -> Result<Self, PartitionError> {
        let mut comm = Vec::new();
        for e in g.edges() {
            let touched: Vec<VertexId> = e
                .vertices()
                .iter()
                .copied()
                .filter(|v| compute.contains_key(v))
                .collect();
            for (i, &a) in touched.iter().enumerate() {
                for &b in &touched[i + 1..] {
                    comm.push(((a, b), e.weight));
                }
            }
        }
        Self::new(compute, comm)
    }

    /// Per node-pair multipliers on communication cost; defaults to 1.
    pub fn with_link(mut self, link: Vec<Vec<f64>>) -> Result<Self, PartitionError> {
        let n = link.len();
        for (i, row) in link.iter().enumerate() {
            if row.len() != n {
                return Err(PartitionError::BadLink);
            }
            for (j, &x) in row.iter().enumerate() {
                if !(x >= 0.0 && x.is_finite()) || x != link[j][i] {
                    return Err(PartitionError::BadLink);
                }
            }
        }
        self.link = Some(link);
        Ok(self)
    }

    /// Fixed analytics load charged to a node.
    pub fn with_analytics(mut self, node: NodeId, cost: f64) -> Result<Self, PartitionError> {
        check_cost(|| format!("analytics on node {node}"), cost)?;
        self.analytics.insert(node, cost);
        Ok(self)
    }

    pub fn datasets(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.compute.keys().copied()
    }

    pub fn compute(&self, d: VertexId) -> Option<f64> {
        self.compute.get(&d).copied()
    }

    pub fn comm(&self, a: VertexId, b: VertexId) -> f64 {
        self.comm.get(&(a.min(b), a.max(b))).copied().unwrap_or(0.0)
    }

    pub fn comm_pairs(&self) -> impl Iterator<Item = ((VertexId, VertexId), f64)> + '_ {
        self.comm.iter().map(|(&k, &v)| (k, v))
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> f64 {
        self.link
            .as_ref()
            .and_then(|l| l.get(a).and_then(|r| r.get(b)))
            .copied()
            .unwrap_or(1.0)
    }

    fn check_total(&self, a: &Assignment) -> Result<(), PartitionError> {
        match self.datasets().find(|d| !a.0.contains_key(d)) {
            Some(d) => Err(PartitionError::Unassigned(d)),
            None => Ok(()),
        }
    }
}

pub fn objective(a: &Assignment, m: &CostModel) -> Result<f64, PartitionError> {
    m.check_total(a)?;
    let compute: f64 = m.compute.values().sum();
    let comm: f64 = m
        .comm
        .iter()
        .filter_map(|(&(x, y), &c)| {
            let (nx, ny) = (a.0[&x], a.0[&y]);
            (nx != ny).then(|| c * m.link(nx, ny))
        })
        .sum();
    Ok(compute + comm)
}

/// Exhaustive optimum over all `nodes^|D|` assignments. Assignments are
/// visited in lexicographic order of the node sequence (datasets in id
/// order) and only a strictly smaller objective replaces the incumbent.
pub fn brute_force_partition(nodes: usize, m: &CostModel) -> Result<(Assignment, f64), PartitionError> {
    if nodes == 0 {
        return Err(PartitionError::NoNodes);
    }
    let datasets: Vec<VertexId> = m.datasets().collect();
    let count = (nodes as u128).checked_pow(datasets.len() as u32);
    if count.is_none_or(|c| c > BRUTE_FORCE_LIMIT) {
        return Err(PartitionError::TooLarge {
            nodes,
            datasets: datasets.len(),
        });
    }
    let mut digits = vec![0usize; datasets.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let a = Assignment(datasets.iter().copied().zip(digits.iter().copied()).collect());
        let obj = objective(&a, m)?;
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((digits.clone(), obj));
        }
        let mut i = digits.len();
        loop {
            if i == 0 {
                let (d, obj) = best.expect("at least one assignment");
                return Ok((Assignment(datasets.into_iter().zip(d).collect()), obj));
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < nodes {
                break;
            }
            digits[i] = 0;
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for (c, center) in centers.iter().enumerate().skip(1) {
        if sq_dist(p, center) < sq_dist(p, &centers[best]) {
            best = c;
        }
    }
    best
}

/// Lloyd's k-means with `restarts` random initializations; the run with
/// the smallest inertia wins, earliest on ties.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k <= 1 {
        return vec![0; n];
    }
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers: Vec<Vec<f64>> = sample(&mut rng, n, k).into_iter().map(|i| points[i].clone()).collect();
        let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        for _ in 0..KMEANS_MAX_ITER {
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                for (j, x) in center.iter_mut().enumerate() {
                    *x = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                }
            }
            let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
            if next == labels {
                break;
            }
            labels = next;
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.expect("at least one restart").1
}

/// Spectral assignment of the model's datasets to `k` nodes.
///
/// Rows of the top-`k` Laplacian eigenvectors (by `|λ|`) embed each
/// dataset; k-means groups them; clusters go to nodes round-robin by
/// descending size, ties by smallest member id.
pub fn spectral_partition(g: &Hypergraph, k: usize, m: &CostModel, seed: u64) -> Result<Assignment, PartitionError> {
    let datasets: Vec<VertexId> = m.datasets().collect();
    if k == 0 || k > datasets.len() {
        return Err(PartitionError::BadK {
            k,
            max: datasets.len(),
        });
    }
    if let Some(&bad) = datasets.iter().find(|d| g.vertex(**d).is_none()) {
        return Err(PartitionError::UnknownVertex(bad));
    }
    if k == 1 {
        return Ok(Assignment(datasets.into_iter().map(|d| (d, 0)).collect()));
    }
    let lap = g.laplacian();
    let rows: Vec<Vec<f64>> = lap.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let l = Matrix::from_rows(&rows).expect("square laplacian");
    let pairs = top_eigenpairs_by_magnitude(&l, k, EIGEN_TOL, EIGEN_MAX_ITER, seed);
    let points: Vec<Vec<f64>> = datasets
        .iter()
        .map(|d| pairs.iter().map(|p| p.vector[d.0]).collect())
        .collect();
    let labels = kmeans(&points, k, KMEANS_RESTARTS, seed);
    let mut clusters: Vec<Vec<VertexId>> = vec![Vec::new(); k];
    for (d, &c) in datasets.iter().zip(&labels) {
        clusters[c].push(*d);
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut out = BTreeMap::new();
    for (rank, cluster) in clusters.iter().enumerate() {
        for &d in cluster {
            out.insert(d, rank % k);
        }
    }
    Ok(Assignment(out))
}

/// Per-node load: compute cost of hosted datasets plus analytics terms.
pub fn load(a: &Assignment, m: &CostModel, nodes: usize) -> Result<Vec<f64>, PartitionError> {
    m.check_total(a)?;
    let mut l = vec![0.0; nodes];
    for (&d, &c) in &m.compute {
        let n = a.0[&d];
        if n >= nodes {
            return Err(PartitionError::BadNode { node: n, nodes });
        }
        l[n] += c;
    }
    for (&n, &c) in &m.analytics {
        if n >= nodes {
            return Err(PartitionError::BadNode { node: n, nodes });
        }
        l[n] += c;
    }
    Ok(l)
}

fn argmax(l: &[f64]) -> usize {
    (0..l.len()).fold(0, |b, i| if l[i] > l[b] { i } else { b })
}

fn argmin(l: &[f64]) -> usize {
    (0..l.len()).fold(0, |b, i| if l[i] < l[b] { i } else { b })
}

/// Greedy moves from the most to the least loaded node until the maximum
/// load is at most `cap` or no move lowers the pair's maximum. Each move
/// strictly lowers the sum of squared loads, so the loop terminates.
pub fn rebalance(a: &Assignment, m: &CostModel, nodes: usize, cap: f64) -> Result<Assignment, PartitionError> {
    if nodes == 0 {
        return Err(PartitionError::NoNodes);
    }
    let mut l = load(a, m, nodes)?;
    let mean = l.iter().sum::<f64>() / nodes as f64;
    if !(cap >= mean) {
        return Err(PartitionError::InfeasibleCap { cap, mean });
    }
    let mut out = a.clone();
    loop {
        let hi = argmax(&l);
        if l[hi] <= cap {
            break;
        }
        let lo = argmin(&l);
        let mut best: Option<(f64, VertexId)> = None;
        for (&d, &n) in &out.0 {
            if n != hi {
                continue;
            }
            let c = m.compute.get(&d).copied().unwrap_or(0.0);
            if !(c > 0.0 && l[lo] + c < l[hi]) {
                continue;
            }
            let peak = (l[hi] - c).max(l[lo] + c);
            if best.is_none_or(|(p, _)| peak < p) {
                best = Some((peak, d));
            }
        }
        let Some((_, d)) = best else { break };
        let c = m.compute[&d];
        l[hi] -= c;
        l[lo] += c;
        out.0.insert(d, lo);
    }
    Ok(out)
}

/// Exact floating-point sum kept as non-overlapping partials, rounded once
/// on read. Merging partial sums in any grouping gives the same value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn of(values: &[f64]) -> Self {
        let mut s = Self::default();
        values.iter().for_each(|&x| s.add(x));
        s
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        other.partials.iter().for_each(|&x| self.add(x));
    }

    /// The exact sum rounded to nearest, ties to even.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// A node's local result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Partial {
    Sum(ExactSum),
    Mean(ExactSum, usize),
    Union(BTreeSet<String>),
}

impl Partial {
    pub fn sum_of(values: &[f64]) -> Self {
        Partial::Sum(ExactSum::of(values))
    }

    pub fn mean_of(values: &[f64]) -> Self {
        Partial::Mean(ExactSum::of(values), values.len())
    }

    pub fn union_of<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        Partial::Union(items.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggOp {
    Sum,
    Union,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Aggregated {
    Num(f64),
    Set(BTreeSet<String>),
}

/// Global result `⊕ a(D_n)` from per-node partials, independent of their
/// order and of how the data was split.
pub fn aggregate(parts: &[Partial], op: AggOp) -> Result<Aggregated, PartitionError> {
    if parts.is_empty() {
        return Err(PartitionError::Empty);
    }
    match op {
        AggOp::Sum | AggOp::Mean => {
            let mut total = ExactSum::default();
            let mut count = 0usize;
            for p in parts {
                match (op, p) {
                    (AggOp::Sum, Partial::Sum(s)) => total.merge(s),
                    (AggOp::Mean, Partial::Mean(s, c)) => {
                        total.merge(s);
                        count += c;
                    }
                    _ => return Err(PartitionError::KindMismatch),
                }
            }
            Ok(Aggregated::Num(match op {
                AggOp::Mean if count == 0 => return Err(PartitionError::Empty),
                AggOp::Mean => total.value() / count as f64,
                _ => total.value(),
            }))
        }
        AggOp::Union => {
            let mut out = BTreeSet::new();
            for p in parts {
                match p {
                    Partial::Union(s) => out.extend(s.iter().cloned()),
                    _ => return Err(PartitionError::KindMismatch),
                }
            }
            Ok(Aggregated::Set(out))
        }
    }
}
