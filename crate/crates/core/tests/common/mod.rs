//! Independent reference implementations shared by the integration tests.
//!
//! Each oracle is written the slow, obvious way and shares no code with the
//! library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use datafabric::hypergraph::{EdgeLabel, Hyperedge, Hypergraph, Vertex, VertexId, VertexKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rank over the rationals by textbook Gaussian elimination.
pub fn rational_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(x.into())).collect())
        .collect();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let f = &m[r][c] / &m[rank][c];
                for k in c..cols {
                    let sub = &f * &m[rank][k];
                    m[r][k] -= sub;
                }
            }
        }
        rank += 1;
    }
    debug_assert!(m.iter().skip(rank).all(|r| r.iter().all(|x| x.abs().is_zero())));
    rank
}

/// Random hypergraph with `n` vertices and `edges` edges; tails and heads
/// hold 1..=max_side distinct vertices and weights are integers in 1..=5.
pub fn random_hypergraph(r: &mut impl Rng, n: usize, edges: usize, max_side: usize) -> Hypergraph {
    let vertices: Vec<Vertex> = (0..n)
        .map(|i| Vertex {
            id: VertexId(i),
            kind: if i % 3 == 0 { VertexKind::Metadata } else { VertexKind::Dataset },
            name: format!("v{i}"),
        })
        .collect();
    let pick = |r: &mut dyn rand::RngCore| -> BTreeSet<VertexId> {
        let k = r.random_range(1..=max_side.min(n));
        let mut s = BTreeSet::new();
        while s.len() < k {
            s.insert(VertexId(r.random_range(0..n)));
        }
        s
    };
    let es = (0..edges)
        .map(|id| {
            let tail = pick(r);
            let head = pick(r);
            let w = r.random_range(1..=5) as f64;
            Hyperedge::new(id, tail, head, EdgeLabel::Navigation, w)
        })
        .collect();
    Hypergraph::construct(vertices, es, false).unwrap()
}

/// Best `(cost, steps, edge ids)` over all simple hyperpaths from `s` to
/// `t`, found by depth-first enumeration. A step leaves a vertex through an
/// edge containing it in the tail and lands on any head vertex.
pub fn brute_force_path(
    g: &Hypergraph,
    s: VertexId,
    t: VertexId,
    weight: impl Fn(&Hyperedge, VertexId, VertexId) -> f64,
) -> Option<(f64, usize, Vec<usize>)> {
    fn dfs(
        g: &Hypergraph,
        u: VertexId,
        t: VertexId,
        w: &dyn Fn(&Hyperedge, VertexId, VertexId) -> f64,
        on_path: &mut Vec<bool>,
        edges: &mut Vec<usize>,
        cost: f64,
        best: &mut Option<(f64, usize, Vec<usize>)>,
    ) {
        if u == t {
            let cand = (cost, edges.len(), edges.clone());
            let better = match best {
                None => true,
                Some(b) => cand
                    .0
                    .total_cmp(&b.0)
                    .then(cand.1.cmp(&b.1))
                    .then(cand.2.cmp(&b.2))
                    .is_lt(),
            };
            if better {
                *best = Some(cand);
            }
            return;
        }
        for e in g.edges() {
            if !e.tail.contains(&u) {
                continue;
            }
            for &v in e.head.iter() {
                if on_path[v.0] {
                    continue;
                }
                on_path[v.0] = true;
                edges.push(e.id.0);
                dfs(g, v, t, w, on_path, edges, cost + w(e, u, v), best);
                edges.pop();
                on_path[v.0] = false;
            }
        }
    }
    let mut on_path = vec![false; g.num_vertices()];
    on_path[s.0] = true;
    let mut best = None;
    dfs(g, s, t, &weight, &mut on_path, &mut Vec::new(), 0.0, &mut best);
    best
}

/// Reflexive-free transitive closure by Warshall's algorithm.
pub fn warshall(n: usize, direct: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in direct {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Single-source distances by binary-heap Dijkstra over a dense matrix
/// with `∞` for absent links.
pub fn dijkstra_matrix(w: &[Vec<f64>], s: usize) -> Vec<f64> {
    let n = w.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Reverse((0u64, s)));
    // Keys are f64 bit patterns, order-preserving for nonnegative values.
    while let Some(Reverse((bits, u))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[u] {
            continue;
        }
        for v in 0..n {
            if v != u && w[u][v].is_finite() {
                let nd = d + w[u][v];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((nd.to_bits(), v)));
                }
            }
        }
    }
    dist
}

/// Exact optimal transport cost `min ⟨Π, C⟩` by successive shortest paths
/// on the bipartite flow network, with Bellman-Ford on the residual graph.
pub fn exact_transport(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (p.len(), q.len());
    let mut flow = vec![vec![0.0f64; m]; n];
    let mut supply = p.to_vec();
    let mut demand = q.to_vec();
    let eps = 1e-15;
    loop {
        let remaining: f64 = supply.iter().sum();
        if remaining <= 1e-13 {
            break;
        }
        // Nodes: sources 0..n, sinks n..n+m. Forward arcs i→j always open;
        // backward arcs j→i open when flow[i][j] > 0.
        let mut dist = vec![f64::INFINITY; n + m];
        let mut pred: Vec<Option<usize>> = vec![None; n + m];
        for i in 0..n {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        for _ in 0..(n + m) {
            let mut changed = false;
            for i in 0..n {
                for j in 0..m {
                    if dist[i] + cost[i][j] < dist[n + j] - 1e-15 {
                        dist[n + j] = dist[i] + cost[i][j];
                        pred[n + j] = Some(i);
                        changed = true;
                    }
                    if flow[i][j] > eps && dist[n + j] - cost[i][j] < dist[i] - 1e-15 {
                        dist[i] = dist[n + j] - cost[i][j];
                        pred[i] = Some(n + j);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let sink = (0..m)
            .filter(|&j| demand[j] > eps && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .expect("feasible transport");
        let mut path = vec![n + sink];
        while let Some(p) = pred[*path.last().unwrap()] {
            path.push(p);
        }
        path.reverse();
        let src = path[0];
        let mut amount = supply[src].min(demand[sink]);
        for w in path.windows(2) {
            if w[0] >= n {
                amount = amount.min(flow[w[1]][w[0] - n]);
            }
        }
        for w in path.windows(2) {
            if w[0] < n {
                flow[w[0]][w[1] - n] += amount;
            } else {
                flow[w[1]][w[0] - n] -= amount;
            }
        }
        supply[src] -= amount;
        demand[sink] -= amount;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            total += flow[i][j] * cost[i][j];
        }
    }
    total
}

/// Two-sample KS statistic by evaluating both empirical CDFs at every
/// sample point with linear scans.
pub fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |xs: &[f64], x: f64| xs.iter().filter(|&&y| y <= x).count() as f64 / xs.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
        .fold(0.0, f64::max)
}

/// Central finite-difference gradient.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// Best injective-map score by enumerating every injection of `0..n` into
/// `0..m`.
pub fn best_injection(sim: &[Vec<f64>]) -> f64 {
    fn go(sim: &[Vec<f64>], i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if i == sim.len() {
            *best = best.max(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(sim, i + 1, used, acc + sim[i][j], best);
                used[j] = false;
            }
        }
    }
    let m = sim.first().map_or(0, Vec::len);
    let mut best = f64::NEG_INFINITY;
    go(sim, 0, &mut vec![false; m], 0.0, &mut best);
    if sim.is_empty() {
        0.0
    } else {
        best
    }
}

/// Shannon entropy in bits of a multiset given as counts.
pub fn entropy_of_counts<K: Ord>(items: impl IntoIterator<Item = K>) -> f64 {
    let mut h: BTreeMap<K, usize> = BTreeMap::new();
    let mut n = 0usize;
    for k in items {
        *h.entry(k).or_insert(0) += 1;
        n += 1;
    }
    h.values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Ordinary least squares fit `y = a + b·x`; returns `(a, b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (a, b, 1.0 - ss_res / ss_tot)
}
