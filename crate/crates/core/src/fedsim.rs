//! Federated averaging of linear least-squares models and KS drift checks.
//!
//! Each shard's loss is the mean squared error `(1/n)·Σ (θ·x̃ − y)²` with
//! `x̃ = (x, 1)`. The federated objective is the unweighted mean of shard
//! losses, matching uniform parameter averaging.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve, top_eigenpairs_by_magnitude, Matrix};
use crate::partition::ExactSum;

#[derive(Debug, Error, PartialEq)]
pub enum FedError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("shard has {features} feature rows but {targets} targets")]
    RowMismatch { features: usize, targets: usize },
    #[error("empty input")]
    Empty,
    #[error("non-finite value")]
    NonFinite,
    #[error("learning rate must be positive")]
    BadRate,
    #[error("learning rate {eta} exceeds 1/L = {limit}")]
    StepTooLarge { eta: f64, limit: f64 },
    #[error("loss diverged at round {round}: {loss} against initial {initial}")]
    Diverged { round: usize, loss: f64, initial: f64 },
    #[error("alpha must lie in (0, 1)")]
    BadAlpha,
    #[error("normal equations are singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Feature weights followed by the bias.
    pub theta: Vec<f64>,
}

impl LinearModel {
    pub fn new(theta: Vec<f64>) -> Result<Self, FedError> {
        if theta.is_empty() {
            return Err(FedError::Empty);
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(FedError::NonFinite);
        }
        Ok(Self { theta })
    }

    pub fn zeros(features: usize) -> Self {
        Self {
            theta: vec![0.0; features + 1],
        }
    }

    pub fn features(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let d = self.features();
        let mut s = self.theta[d];
        for j in 0..d {
            s += self.theta[j] * x[j];
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalShard {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl LocalShard {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, FedError> {
        if features.len() != targets.len() {
            return Err(FedError::RowMismatch {
                features: features.len(),
                targets: targets.len(),
            });
        }
        let Some(first) = features.first() else {
            return Err(FedError::Empty);
        };
        let d = first.len();
        for row in &features {
            if row.len() != d {
                return Err(FedError::Dimension {
                    expected: d,
                    found: row.len(),
                });
            }
        }
        if features.iter().flatten().chain(&targets).any(|x| !x.is_finite()) {
            return Err(FedError::NonFinite);
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn check(&self, m: &LinearModel) -> Result<(), FedError> {
        if m.features() != self.dim() {
            return Err(FedError::Dimension {
                expected: self.dim() + 1,
                found: m.theta.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, m: &LinearModel) -> Result<f64, FedError> {
        self.check(m)?;
        let s: f64 = self
            .features
            .iter()
            .zip(&self.targets)
            .map(|(x, y)| {
                let r = m.predict(x) - y;
                r * r
            })
            .sum();
        Ok(s / self.len() as f64)
    }

    /// `∇L(θ) = (2/n)·Σ (θ·x̃ − y)·x̃`, summed in row order.
    pub fn gradient(&self, m: &LinearModel) -> Result<Vec<f64>, FedError> {
        self.check(m)?;
        let d = self.dim();
        let mut g = vec![0.0; d + 1];
        for (x, y) in self.features.iter().zip(&self.targets) {
            let r = m.predict(x) - y;
            for j in 0..d {
                g[j] += r * x[j];
            }
            g[d] += r;
        }
        let scale = 2.0 / self.len() as f64;
        g.iter_mut().for_each(|v| *v *= scale);
        Ok(g)
    }

    /// Largest eigenvalue of the loss Hessian `(2/n)·X̃ᵀX̃`.
    pub fn smoothness(&self) -> f64 {
        let d = self.dim() + 1;
        let mut h = Matrix::zeros(d, d);
        for x in &self.features {
            let xt: Vec<f64> = x.iter().copied().chain([1.0]).collect();
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] += xt[i] * xt[j];
                }
            }
        }
        let scale = 2.0 / self.len() as f64;
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] *= scale;
            }
        }
        top_eigenpairs_by_magnitude(&h, 1, 1e-13, 100_000, 0)[0].value
    }
}

/// One full-batch gradient step `θ − η∇L(θ)`.
pub fn local_step(m: &LinearModel, shard: &LocalShard, eta: f64) -> Result<LinearModel, FedError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(FedError::BadRate);
    }
    let g = shard.gradient(m)?;
    Ok(LinearModel {
        theta: m.theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect(),
    })
}

/// Componentwise mean. Each component is the smallest value plus the
/// exactly summed offsets from it divided by the count, so the result does
/// not depend on model order and equal models average to themselves.
pub fn fed_avg(models: &[LinearModel]) -> Result<LinearModel, FedError> {
    let first = models.first().ok_or(FedError::Empty)?;
    let d = first.theta.len();
    if let Some(bad) = models.iter().find(|m| m.theta.len() != d) {
        return Err(FedError::Dimension {
            expected: d,
            found: bad.theta.len(),
        });
    }
    let n = models.len() as f64;
    let theta = (0..d)
        .map(|j| {
            let base = models.iter().map(|m| m.theta[j]).fold(f64::INFINITY, f64::min);
            let mut s = ExactSum::default();
            models.iter().for_each(|m| s.add(m.theta[j] - base));
            base + s.value() / n
        })
        .collect();
    Ok(LinearModel { theta })
}

/// `(1/|N|)·Σ_n L_n(θ)`.
pub fn federated_loss(shards: &[LocalShard], m: &LinearModel) -> Result<f64, FedError> {
    if shards.is_empty() {
        return Err(FedError::Empty);
    }
    let mut s = 0.0;
    for shard in shards {
        s += shard.loss(m)?;
    }
    Ok(s / shards.len() as f64)
}

/// Closed-form minimizer of the federated objective.
pub fn least_squares(shards: &[LocalShard]) -> Result<LinearModel, FedError> {
    let first = shards.first().ok_or(FedError::Empty)?;
    let d = first.dim() + 1;
    let mut a = Matrix::zeros(d, d);
    let mut b = vec![0.0; d];
    for shard in shards {
        if shard.dim() + 1 != d {
            return Err(FedError::Dimension {
                expected: d,
                found: shard.dim() + 1,
            });
        }
        let w = 1.0 / shard.len() as f64;
        for (x, y) in shard.features.iter().zip(&shard.targets) {
            let xt: Vec<f64> = x.iter().copied().chain([1.0]).collect();
            for i in 0..d {
                b[i] += w * xt[i] * y;
                for j in 0..d {
                    a[(i, j)] += w * xt[i] * xt[j];
                }
            }
        }
    }
    let theta = solve(&a, &b).ok_or(FedError::Singular)?;
    LinearModel::new(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub model: LinearModel,
    pub initial_loss: f64,
    /// Federated loss after each round.
    pub loss_trace: Vec<f64>,
    /// Floats exchanged: `|N|·|θ|` uploads plus as many downloads per round.
    pub floats_exchanged: usize,
}

/// Largest admissible learning rate `1/L`, with `L` the largest shard
/// smoothness constant.
pub fn max_learning_rate(shards: &[LocalShard]) -> Result<f64, FedError> {
    let l = shards.iter().map(LocalShard::smoothness).fold(0.0f64, f64::max);
    if shards.is_empty() {
        return Err(FedError::Empty);
    }
    Ok(if l > 0.0 { 1.0 / l } else { f64::INFINITY })
}

/// FedAvg from a given starting model.
pub fn train_from(
    initial: LinearModel,
    shards: &[LocalShard],
    rounds: usize,
    local_steps: usize,
    eta: f64,
) -> Result<TrainResult, FedError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(FedError::BadRate);
    }
    let limit = max_learning_rate(shards)?;
    if eta > limit {
        return Err(FedError::StepTooLarge { eta, limit });
    }
    let initial_loss = federated_loss(shards, &initial)?;
    let mut global = initial;
    let mut loss_trace = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let mut locals = Vec::with_capacity(shards.len());
        for shard in shards {
            let mut m = global.clone();
            for _ in 0..local_steps {
                m = local_step(&m, shard, eta)?;
            }
            locals.push(m);
        }
        global = fed_avg(&locals)?;
        let loss = federated_loss(shards, &global)?;
        if !loss.is_finite() || loss > 10.0 * initial_loss.max(f64::MIN_POSITIVE) {
            return Err(FedError::Diverged {
                round,
                loss,
                initial: initial_loss,
            });
        }
        loss_trace.push(loss);
    }
    let floats_exchanged = 2 * shards.len() * global.theta.len() * rounds;
    Ok(TrainResult {
        model: global,
        initial_loss,
        loss_trace,
        floats_exchanged,
    })
}

/// FedAvg from a starting model drawn uniformly from `[-1, 1)` per
/// component with the given seed.
pub fn train(
    shards: &[LocalShard],
    rounds: usize,
    local_steps: usize,
    eta: f64,
    seed: u64,
) -> Result<TrainResult, FedError> {
    let d = shards.first().ok_or(FedError::Empty)?.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
    train_from(LinearModel { theta }, shards, rounds, local_steps, eta)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>, FedError> {
    if xs.is_empty() {
        return Err(FedError::Empty);
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(FedError::NonFinite);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, FedError> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub statistic: f64,
    pub threshold: f64,
    pub drifted: bool,
}

/// `c(α)·√((n+m)/(n·m))` with `c(α) = √(−ln(α/2)/2)`.
pub fn ks_threshold(n: usize, m: usize, alpha: f64) -> Result<f64, FedError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FedError::BadAlpha);
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    Ok(c * ((n + m) / (n * m)).sqrt())
}

pub const DEFAULT_ALPHA: f64 = 0.05;

pub fn drift_detect(a: &[f64], b: &[f64], alpha: f64) -> Result<DriftReport, FedError> {
    let threshold = ks_threshold(a.len(), b.len(), alpha)?;
    let statistic = ks_statistic(a, b)?;
    Ok(DriftReport {
        statistic,
        threshold,
        drifted: statistic > threshold,
    })
}
