//! Deterministic discrete-event simulation of a replicated fabric.
//!
//! Time is an integer tick counter. A message between two nodes takes the
//! shortest-path latency between them, rounded up to whole ticks, over
//! links whose endpoints are both up and in the same partition group.
//! Replicas merge by last-writer-wins on [`Stamp`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, VertexId, VertexKind};
use crate::partition::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("link matrix must be square with zero diagonal and nonnegative entries")]
    BadLinks,
    #[error("negative link weight between {0} and {1}")]
    NegativeWeight(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is down")]
    NodeDown(NodeId),
    #[error("partition groups overlap on node {0}")]
    Overlap(NodeId),
    #[error("partition groups miss up node {0}")]
    Uncovered(NodeId),
    #[error("replica of `{key}` on node {node} is unreachable")]
    Unreachable { key: String, node: NodeId },
    #[error("no convergence within {0} rounds")]
    NoConvergence(usize),
    #[error("script line {line}: {msg}")]
    Script { line: usize, msg: String },
    #[error("gossip period must be at least one tick")]
    BadPeriod,
}

/// Link weights with `f64::INFINITY` for absent links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMatrix {
    w: Vec<Vec<f64>>,
}

impl LinkMatrix {
    pub fn new(w: Vec<Vec<f64>>) -> Result<Self, SimError> {
        let n = w.len();
        for (i, row) in w.iter().enumerate() {
            if row.len() != n || row[i] != 0.0 {
                return Err(SimError::BadLinks);
            }
            for (j, &x) in row.iter().enumerate() {
                if x.is_nan() {
                    return Err(SimError::BadLinks);
                }
                if x < 0.0 {
                    return Err(SimError::NegativeWeight(i, j));
                }
            }
        }
        Ok(Self { w })
    }

    /// Symmetric matrix from undirected `(a, b, weight)` links.
    pub fn from_links(n: usize, links: &[(NodeId, NodeId, f64)]) -> Result<Self, SimError> {
        let mut w = vec![vec![f64::INFINITY; n]; n];
        (0..n).for_each(|i| w[i][i] = 0.0);
        for &(a, b, x) in links {
            if a >= n || b >= n {
                return Err(SimError::UnknownNode(a.max(b)));
            }
            if x < 0.0 {
                return Err(SimError::NegativeWeight(a, b));
            }
            if a != b {
                w[a][b] = w[a][b].min(x);
                w[b][a] = w[b][a].min(x);
            }
        }
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.w[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.w
    }

    /// Largest finite off-diagonal weight.
    pub fn max_weight(&self) -> f64 {
        self.w
            .iter()
            .flatten()
            .copied()
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }
}

/// Floyd–Warshall closure; unreachable pairs stay infinite.
pub fn all_pairs_shortest(links: &LinkMatrix) -> Vec<Vec<f64>> {
    let mut d = links.w.clone();
    let n = d.len();
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Largest finite hop distance between two nodes.
pub fn hop_diameter(links: &LinkMatrix) -> usize {
    let hops: Vec<Vec<f64>> = links
        .w
        .iter()
        .map(|r| r.iter().map(|&x| if x == 0.0 { 0.0 } else if x.is_finite() { 1.0 } else { x }).collect())
        .collect();
    let closure = all_pairs_shortest(&LinkMatrix { w: hops });
    closure
        .iter()
        .flatten()
        .filter(|x| x.is_finite())
        .fold(0.0f64, |a, &b| a.max(b)) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub hosted: BTreeSet<VertexId>,
    pub up: bool,
}

/// Version stamp ordered by time, then node, then the node's write count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub time: u64,
    pub node: NodeId,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versioned {
    pub value: String,
    pub stamp: Stamp,
}

/// Last-writer-wins merge; commutative, associative and idempotent.
pub fn lww(a: Option<&Versioned>, b: Option<&Versioned>) -> Option<Versioned> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.stamp > x.stamp { y.clone() } else { x.clone() }),
        (x, y) => x.or(y).cloned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SyncAll,
    AsyncGossip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteReceipt {
    pub stamp: Stamp,
    pub issued: u64,
    /// Tick at which the write is acknowledged to the client.
    pub completes: u64,
    /// Replicas the write was sent to, origin included.
    pub targets: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadResult {
    pub at: u64,
    pub node: NodeId,
    pub key: String,
    /// `None` when no replica of the key is reachable.
    pub served_by: Option<NodeId>,
    pub value: Option<String>,
    pub delay: u64,
    pub stale_for: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Pending {
    Flush { origin: NodeId, key: String, v: Versioned },
    Deliver { from: NodeId, to: NodeId, key: String, v: Versioned },
    Commit { origin: NodeId, key: String, v: Versioned, targets: BTreeSet<NodeId> },
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Heap entries are ordered by (time, sequence) first; this only breaks
    // impossible ties.
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

/// `C`, `A` and the configured bound `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalMeasurement {
    pub c: f64,
    pub a: f64,
    pub l: f64,
    /// `max(C, A) ≤ L`.
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    nodes: Vec<NodeSpec>,
    links: LinkMatrix,
    dist: Vec<Vec<f64>>,
    groups: Option<Vec<usize>>,
    placement: BTreeMap<String, BTreeSet<NodeId>>,
    replicas: Vec<BTreeMap<String, Versioned>>,
    gossip_period: u64,
    now: u64,
    next_seq: u64,
    write_counts: Vec<u64>,
    queue: BinaryHeap<Reverse<(u64, u64, Pending)>>,
    commits: BTreeMap<String, Vec<(u64, Stamp)>>,
    max_c: u64,
    max_a: u64,
    unavailable: usize,
    log: String,
    rng: ChaCha8Rng,
}

fn ticks(d: f64) -> u64 {
    d.ceil() as u64
}

impl Simulator {
    pub fn new(nodes: Vec<NodeSpec>, links: LinkMatrix, gossip_period: u64, seed: u64) -> Result<Self, SimError> {
        if gossip_period == 0 {
            return Err(SimError::BadPeriod);
        }
        if nodes.len() != links.len() {
            return Err(SimError::BadLinks);
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(SimError::UnknownNode(n.id));
            }
        }
        let count = nodes.len();
        let mut sim = Self {
            nodes,
            links,
            dist: Vec::new(),
            groups: None,
            placement: BTreeMap::new(),
            replicas: vec![BTreeMap::new(); count],
            gossip_period,
            now: 0,
            next_seq: 0,
            write_counts: vec![0; count],
            queue: BinaryHeap::new(),
            commits: BTreeMap::new(),
            max_c: 0,
            max_a: 0,
            unavailable: 0,
            log: String::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        sim.refresh_routes();
        Ok(sim)
    }

    /// Nodes `0..n`, all up and hosting nothing.
    pub fn with_links(links: LinkMatrix, gossip_period: u64, seed: u64) -> Result<Self, SimError> {
        let nodes = (0..links.len())
            .map(|id| NodeSpec {
                id,
                hosted: BTreeSet::new(),
                up: true,
            })
            .collect();
        Self::new(nodes, links, gossip_period, seed)
    }

    fn refresh_routes(&mut self) {
        let n = self.nodes.len();
        let mut w = self.links.w.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j && !self.linked(i, j) {
                    w[i][j] = f64::INFINITY;
                }
            }
        }
        self.dist = all_pairs_shortest(&LinkMatrix { w });
    }

    fn linked(&self, i: NodeId, j: NodeId) -> bool {
        let same_group = self.groups.as_ref().is_none_or(|g| g[i] == g[j]);
        self.nodes[i].up && self.nodes[j].up && same_group
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &LinkMatrix {
        &self.links
    }

    pub fn event_log(&self) -> &str {
        &self.log
    }

    pub fn gossip_period(&self) -> u64 {
        self.gossip_period
    }

    /// Current routing distance; infinite across partitions or via down
    /// nodes.
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        if a == b {
            return if self.nodes[a].up { 0.0 } else { f64::INFINITY };
        }
        self.dist[a][b]
    }

    pub fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        self.distance(a, b).is_finite()
    }

    pub fn partitioned(&self) -> bool {
        self.groups.is_some()
    }

    fn emit(&mut self, line: std::fmt::Arguments<'_>) {
        let _ = writeln!(self.log, "{:>6} {}", self.now, line);
    }

    fn check_node(&self, n: NodeId) -> Result<(), SimError> {
        if n < self.nodes.len() {
            Ok(())
        } else {
            Err(SimError::UnknownNode(n))
        }
    }

    /// Restricts replicas of `key` to `holders`; keys default to every
    /// node.
    pub fn place(&mut self, key: &str, holders: BTreeSet<NodeId>) -> Result<(), SimError> {
        if let Some(&bad) = holders.iter().find(|&&h| h >= self.nodes.len()) {
            return Err(SimError::UnknownNode(bad));
        }
        self.placement.insert(key.to_owned(), holders);
        Ok(())
    }

    pub fn holders(&self, key: &str) -> BTreeSet<NodeId> {
        self.placement
            .get(key)
            .cloned()
            .unwrap_or_else(|| (0..self.nodes.len()).collect())
    }

    pub fn replica(&self, node: NodeId, key: &str) -> Option<&Versioned> {
        self.replicas.get(node)?.get(key)
    }

    fn keys(&self) -> BTreeSet<String> {
        let mut keys: BTreeSet<String> = self.placement.keys().cloned().collect();
        for r in &self.replicas {
            keys.extend(r.keys().cloned());
        }
        keys
    }

    fn schedule(&mut self, at: u64, p: Pending) {
        self.next_seq += 1;
        self.queue.push(Reverse((at, self.next_seq, p)));
    }

    fn apply(&mut self, node: NodeId, key: &str, v: &Versioned) -> bool {
        let merged = lww(self.replicas[node].get(key), Some(v)).expect("some");
        let changed = self.replicas[node].get(key) != Some(&merged);
        self.replicas[node].insert(key.to_owned(), merged);
        changed
    }

    fn commit(&mut self, key: &str, at: u64, stamp: Stamp) {
        self.commits.entry(key.to_owned()).or_default().push((at, stamp));
    }

    fn fire(&mut self, p: Pending) {
        match p {
            Pending::Flush { origin, key, v } => {
                if !self.nodes[origin].up {
                    self.emit(format_args!("flush {key} from n{origin} lost: origin down"));
                    return;
                }
                for h in self.holders(&key) {
                    if h == origin {
                        continue;
                    }
                    if self.reachable(origin, h) {
                        let at = self.now + ticks(self.distance(origin, h));
                        self.schedule(at, Pending::Deliver {
                            from: origin,
                            to: h,
                            key: key.clone(),
                            v: v.clone(),
                        });
                    } else {
                        self.emit(format_args!("push {key} n{origin}->n{h} dropped"));
                    }
                }
            }
            Pending::Deliver { from, to, key, v } => {
                if self.reachable(from, to) {
                    let changed = self.apply(to, &key, &v);
                    self.emit(format_args!(
                        "deliver {key}={} n{from}->n{to}{}",
                        v.value,
                        if changed { "" } else { " (no-op)" }
                    ));
                } else {
                    self.emit(format_args!("deliver {key} n{from}->n{to} dropped"));
                }
            }
            Pending::Commit { origin, key, v, targets } => {
                let mut applied = Vec::new();
                for &h in &targets {
                    if self.reachable(origin, h) {
                        self.apply(h, &key, &v);
                        applied.push(format!("n{h}"));
                    }
                }
                self.commit(&key, self.now, v.stamp);
                self.emit(format_args!("commit {key}={} at [{}]", v.value, applied.join(",")));
            }
        }
    }

    /// Processes pending events due at or before `until`, then sets the
    /// clock to `until`.
    pub fn run_until(&mut self, until: u64) {
        while let Some(Reverse((at, _, _))) = self.queue.peek() {
            if *at > until {
                break;
            }
            let Reverse((at, _, p)) = self.queue.pop().expect("peeked");
            self.now = self.now.max(at);
            self.fire(p);
        }
        self.now = self.now.max(until);
    }

    pub fn advance(&mut self, ticks: u64) {
        self.run_until(self.now + ticks);
    }

    /// Runs until no events remain.
    pub fn quiesce(&mut self) {
        while let Some(Reverse((at, _, _))) = self.queue.peek() {
            let at = *at;
            self.run_until(at);
        }
    }

    pub fn replicate_write(&mut self, key: &str, value: &str, origin: NodeId, mode: Mode) -> Result<WriteReceipt, SimError> {
        self.check_node(origin)?;
        if !self.nodes[origin].up {
            return Err(SimError::NodeDown(origin));
        }
        self.run_until(self.now);
        self.write_counts[origin] += 1;
        let stamp = Stamp {
            time: self.now,
            node: origin,
            seq: self.write_counts[origin],
        };
        let v = Versioned {
            value: value.to_owned(),
            stamp,
        };
        let holders = self.holders(key);
        let targets: BTreeSet<NodeId> = holders
            .iter()
            .copied()
            .filter(|&h| h == origin || self.reachable(origin, h))
            .collect();
        let issued = self.now;
        let completes = match mode {
            Mode::SyncAll => {
                let ecc = targets.iter().map(|&h| ticks(self.distance(origin, h))).max().unwrap_or(0);
                let done = issued + ecc;
                self.emit(format_args!(
                    "write {key}={value} at n{origin} sync -> {} replicas, completes {done}",
                    targets.len()
                ));
                if ecc == 0 {
                    self.fire(Pending::Commit {
                        origin,
                        key: key.to_owned(),
                        v,
                        targets: targets.clone(),
                    });
                } else {
                    self.schedule(done, Pending::Commit {
                        origin,
                        key: key.to_owned(),
                        v,
                        targets: targets.clone(),
                    });
                }
                done
            }
            Mode::AsyncGossip => {
                if holders.contains(&origin) {
                    self.apply(origin, key, &v);
                }
                self.commit(key, issued, stamp);
                let flush = issued.div_ceil(self.gossip_period) * self.gossip_period;
                self.emit(format_args!("write {key}={value} at n{origin} async, flush {flush}"));
                self.schedule(flush, Pending::Flush {
                    origin,
                    key: key.to_owned(),
                    v,
                });
                issued
            }
        };
        self.max_a = self.max_a.max(completes - issued);
        Ok(WriteReceipt {
            stamp,
            issued,
            completes,
            targets,
        })
    }

    /// Reads locally when `node` holds a replica, otherwise from the nearest
    /// reachable holder at round-trip cost.
    pub fn read(&mut self, node: NodeId, key: &str) -> Result<ReadResult, SimError> {
        self.check_node(node)?;
        self.run_until(self.now);
        let holders = self.holders(key);
        let server = if !self.nodes[node].up {
            None
        } else if holders.contains(&node) {
            Some(node)
        } else {
            holders
                .iter()
                .copied()
                .filter(|&h| self.reachable(node, h))
                .min_by(|&a, &b| self.distance(node, a).total_cmp(&self.distance(node, b)).then(a.cmp(&b)))
        };
        let Some(h) = server else {
            self.unavailable += 1;
            self.emit(format_args!("read {key} at n{node} unavailable"));
            return Ok(ReadResult {
                at: self.now,
                node,
                key: key.to_owned(),
                served_by: None,
                value: None,
                delay: 0,
                stale_for: 0,
            });
        };
        let delay = 2 * ticks(self.distance(node, h));
        let got = self.replicas[h].get(key).cloned();
        let latest = self
            .commits
            .get(key)
            .and_then(|c| c.iter().filter(|(t, _)| *t <= self.now).max_by_key(|(_, s)| *s))
            .copied();
        let stale_for = match latest {
            Some((t, s)) if got.as_ref().is_none_or(|g| g.stamp < s) => self.now - t,
            _ => 0,
        };
        self.max_c = self.max_c.max(stale_for);
        self.max_a = self.max_a.max(delay);
        let shown = got.as_ref().map_or("-", |v| v.value.as_str()).to_owned();
        self.emit(format_args!("read {key} at n{node} from n{h} -> {shown} delay {delay} stale {stale_for}"));
        Ok(ReadResult {
            at: self.now,
            node,
            key: key.to_owned(),
            served_by: Some(h),
            value: got.map(|v| v.value),
            delay,
            stale_for,
        })
    }

    /// Splits up nodes into groups that cannot exchange messages.
    pub fn partition_event(&mut self, groups: &[BTreeSet<NodeId>]) -> Result<(), SimError> {
        let mut of = vec![usize::MAX; self.nodes.len()];
        for (g, members) in groups.iter().enumerate() {
            for &n in members {
                self.check_node(n)?;
                if of[n] != usize::MAX {
                    return Err(SimError::Overlap(n));
                }
                of[n] = g;
            }
        }
        if let Some(n) = (0..self.nodes.len()).find(|&n| self.nodes[n].up && of[n] == usize::MAX) {
            return Err(SimError::Uncovered(n));
        }
        self.run_until(self.now);
        let shown: Vec<String> = groups
            .iter()
            .map(|g| g.iter().map(|n| format!("n{n}")).collect::<Vec<_>>().join(","))
            .collect();
        self.emit(format_args!("partition {}", shown.join(" | ")));
        self.groups = (groups.len() > 1).then_some(of);
        self.refresh_routes();
        Ok(())
    }

    pub fn heal(&mut self) {
        self.run_until(self.now);
        self.emit(format_args!("heal"));
        self.groups = None;
        self.refresh_routes();
    }

    /// Takes a node down and drops its replicas.
    pub fn fail_node(&mut self, n: NodeId) -> Result<(), SimError> {
        self.check_node(n)?;
        self.run_until(self.now);
        self.nodes[n].up = false;
        self.replicas[n].clear();
        self.emit(format_args!("fail n{n}"));
        self.refresh_routes();
        Ok(())
    }

    /// Writes `rounds` random values straight into single replicas, without
    /// propagation, to create divergence.
    pub fn seed_divergence(&mut self, keys: &[&str], writes: usize) {
        let n = self.nodes.len();
        if n == 0 || keys.is_empty() {
            return;
        }
        for _ in 0..writes {
            let node = self.rng.random_range(0..n);
            let key = keys[self.rng.random_range(0..keys.len())];
            let value = self.rng.random_range(0..1000u32).to_string();
            if !self.nodes[node].up || !self.holders(key).contains(&node) {
                continue;
            }
            self.write_counts[node] += 1;
            let v = Versioned {
                value,
                stamp: Stamp {
                    time: self.now,
                    node,
                    seq: self.write_counts[node],
                },
            };
            self.apply(node, key, &v);
        }
    }

    fn converged(&self) -> bool {
        self.keys().iter().all(|k| {
            let mut vals = self.holders(k).into_iter().filter(|&h| self.nodes[h].up).map(|h| self.replicas[h].get(k));
            match vals.next() {
                None => true,
                Some(first) => vals.all(|v| v == first),
            }
        })
    }

    /// Anti-entropy until every up replica of every key agrees. In round
    /// `r`, holder `i` of a key pulls from holder `i + 2^(r mod ⌈log₂h⌉)`
    /// (indices mod `h`, the number of up holders) and keeps the
    /// last-writer-wins value. Each round advances the clock one gossip
    /// period.
    pub fn converge_eventual(&mut self) -> Result<usize, SimError> {
        self.quiesce();
        for k in self.keys() {
            let up: Vec<NodeId> = self.holders(&k).into_iter().filter(|&h| self.nodes[h].up).collect();
            for &h in &up {
                if !self.reachable(up[0], h) {
                    return Err(SimError::Unreachable { key: k, node: h });
                }
            }
        }
        let limit = 64 * (self.nodes.len().max(2));
        for round in 0..=limit {
            if self.converged() {
                self.emit(format_args!("converged after {round} rounds"));
                return Ok(round);
            }
            for k in self.keys() {
                let up: Vec<NodeId> = self.holders(&k).into_iter().filter(|&h| self.nodes[h].up).collect();
                let h = up.len();
                if h < 2 {
                    continue;
                }
                let span = (usize::BITS - (h - 1).leading_zeros()) as usize;
                let offset = (1usize << (round % span)) % h;
                let snapshot: Vec<Option<Versioned>> = up.iter().map(|&n| self.replicas[n].get(&k).cloned()).collect();
                for i in 0..h {
                    let merged = lww(snapshot[i].as_ref(), snapshot[(i + offset) % h].as_ref());
                    if let Some(v) = merged {
                        self.replicas[up[i]].insert(k.clone(), v);
                    }
                }
            }
            self.advance(self.gossip_period);
            self.emit(format_args!("anti-entropy round {round}"));
        }
        Err(SimError::NoConvergence(limit))
    }

    /// `C` and `A` observed so far against the bound `l`.
    pub fn measurement(&self, l: f64) -> CalMeasurement {
        let c = self.max_c as f64;
        let a = if self.unavailable > 0 {
            f64::INFINITY
        } else {
            self.max_a as f64
        };
        CalMeasurement {
            c,
            a,
            l,
            pass: c.max(a) <= l,
        }
    }

    /// `hop diameter × largest link weight + gossip period`.
    pub fn async_latency_bound(&self) -> f64 {
        hop_diameter(&self.links) as f64 * self.links.max_weight() + self.gossip_period as f64
    }
}

/// One workload command.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Mode(Mode),
    Write { node: NodeId, key: String, value: String },
    Read { node: NodeId, key: String },
    Advance(u64),
    Partition(Vec<BTreeSet<NodeId>>),
    Heal,
    Converge,
    Fail(NodeId),
    Place { key: String, holders: BTreeSet<NodeId> },
}

fn parse_node(s: &str) -> Option<NodeId> {
    s.strip_prefix('n').unwrap_or(s).parse().ok()
}

fn parse_set(s: &str) -> Option<BTreeSet<NodeId>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_node(t.trim())).collect()
}

/// Parses a line-oriented workload:
///
/// ```text
/// mode sync|async
/// place KEY N,N,...
/// write N KEY VALUE
/// read N KEY
/// advance TICKS
/// partition N,N | N,N ...
/// heal
/// converge
/// fail N
/// ```
///
/// Blank lines and `#` comments are ignored.
pub fn parse_script(text: &str) -> Result<Vec<Command>, SimError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| SimError::Script {
            line: i + 1,
            msg: msg.to_owned(),
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        let node = |s: &str| parse_node(s).ok_or_else(|| err(&format!("bad node `{s}`")));
        let cmd = match parts.as_slice() {
            ["mode", "sync"] | ["mode", "sync-all"] => Command::Mode(Mode::SyncAll),
            ["mode", "async"] | ["mode", "async-gossip"] => Command::Mode(Mode::AsyncGossip),
            ["write", n, key, value] => Command::Write {
                node: node(n)?,
                key: (*key).to_owned(),
                value: (*value).to_owned(),
            },
            ["read", n, key] => Command::Read {
                node: node(n)?,
                key: (*key).to_owned(),
            },
            ["advance", t] => Command::Advance(t.parse().map_err(|_| err("bad tick count"))?),
            ["partition", ..] => {
                let rest = line["partition".len()..].trim();
                let groups = rest
                    .split('|')
                    .map(|g| parse_set(&g.replace(' ', "")).ok_or_else(|| err("bad group")))
                    .collect::<Result<Vec<_>, _>>()?;
                Command::Partition(groups)
            }
            ["heal"] => Command::Heal,
            ["converge"] => Command::Converge,
            ["fail", n] => Command::Fail(node(n)?),
            ["place", key, set] => Command::Place {
                key: (*key).to_owned(),
                holders: parse_set(set).ok_or_else(|| err("bad holder set"))?,
            },
            _ => return Err(err(&format!("unrecognized command `{line}`"))),
        };
        out.push(cmd);
    }
    Ok(out)
}

/// Runs a workload starting in `mode`, then returns the measurement
/// against `l`. Pending events are drained before measuring.
pub fn measure_cal(sim: &mut Simulator, script: &[Command], mode: Mode, l: f64) -> Result<CalMeasurement, SimError> {
    let mut mode = mode;
    for cmd in script {
        match cmd {
            Command::Mode(m) => mode = *m,
            Command::Write { node, key, value } => {
                sim.replicate_write(key, value, *node, mode)?;
            }
            Command::Read { node, key } => {
                sim.read(*node, key)?;
            }
            Command::Advance(t) => sim.advance(*t),
            Command::Partition(groups) => sim.partition_event(groups)?,
            Command::Heal => sim.heal(),
            Command::Converge => {
                sim.converge_eventual()?;
            }
            Command::Fail(n) => sim.fail_node(*n)?,
            Command::Place { key, holders } => sim.place(key, holders.clone())?,
        }
    }
    sim.quiesce();
    let m = sim.measurement(l);
    sim.emit(format_args!(
        "cal C={} A={} L={} {}",
        m.c,
        m.a,
        m.l,
        if m.pass { "pass" } else { "fail" }
    ));
    Ok(m)
}

/// Vertices held by at least one up node.
fn available(sim: &Simulator) -> BTreeSet<VertexId> {
    sim.nodes
        .iter()
        .filter(|n| n.up)
        .flat_map(|n| n.hosted.iter().copied())
        .collect()
}

/// Metadata → dataset pairs connected by a directed hyperpath through
/// available vertices only.
pub fn resolvable_queries(g: &Hypergraph, avail: &BTreeSet<VertexId>) -> BTreeSet<(VertexId, VertexId)> {
    let gone: BTreeSet<VertexId> = g.vertices().iter().map(|v| v.id).filter(|v| !avail.contains(v)).collect();
    let sub = g.without_vertices(&gone);
    let mut out = BTreeSet::new();
    for m in g.vertices().iter().filter(|v| v.kind == VertexKind::Metadata && avail.contains(&v.id)) {
        for d in sub.directed_reach(m.id) {
            if d != m.id && g.vertex(d).is_some_and(|v| v.kind == VertexKind::Dataset) {
                out.insert((m.id, d));
            }
        }
    }
    out
}

/// Whether every metadata → dataset query that resolves now still resolves
/// after the nodes in `fail` go down.
pub fn fault_check(sim: &Simulator, g: &Hypergraph, fail: &BTreeSet<NodeId>) -> Result<bool, SimError> {
    let before = resolvable_queries(g, &available(sim));
    let mut after_sim = sim.clone();
    for &n in fail {
        after_sim.fail_node(n)?;
    }
    let after = resolvable_queries(g, &available(&after_sim));
    Ok(before.is_subset(&after))
}
