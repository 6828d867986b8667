//! Fixed-dimension embeddings of datasets and metadata.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};

/// Upper bound on embedding dimension.
pub const MAX_DIM: usize = 15;

/// Default number of hash buckets for metadata attribute names.
pub const DEFAULT_BUCKETS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("no input points")]
    Empty,
    #[error("point {index} has dimension {found}, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("invalid frequencies: {0}")]
    InvalidFrequencies(String),
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("encoder needs {0} vectors, got {1}")]
    EncoderShape(usize, usize),
}

/// Layout tag for an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Generic,
    Mixed,
    R11,
    Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    profile: Profile,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, profile: Profile) -> Result<Self, VectorError> {
        if values.is_empty() || values.len() > MAX_DIM {
            return Err(VectorError::BadDimension(values.len()));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self { values, profile })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize, VectorError> {
    let first = points.first().ok_or(VectorError::Empty)?;
    let dim = first.len();
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(VectorError::Ragged {
                index,
                expected: dim,
                found: p.len(),
            });
        }
    }
    Ok(dim)
}

pub fn centroid(points: &[Vec<f64>]) -> Result<Vec<f64>, VectorError> {
    let dim = check_points(points)?;
    let n = points.len() as f64;
    Ok((0..dim)
        .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n)
        .collect())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The input point minimizing the sum of Euclidean distances to all others.
/// Ties go to the lowest index. `O(n²k)`.
pub fn medoid(points: &[Vec<f64>]) -> Result<Vec<f64>, VectorError> {
    check_points(points)?;
    let mut best = (f64::INFINITY, 0);
    for (j, xj) in points.iter().enumerate() {
        let total: f64 = points.iter().map(|xl| euclidean(xj, xl)).sum();
        if total < best.0 {
            best = (total, j);
        }
    }
    Ok(points[best.1].clone())
}

/// Category → unit vector table `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEncoder {
    categories: Vec<String>,
    embed_dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl CategoricalEncoder {
    pub fn one_hot<S: AsRef<str>>(categories: &[S]) -> Self {
        let m = categories.len();
        let vectors = (0..m)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            categories: categories.iter().map(|c| c.as_ref().to_owned()).collect(),
            embed_dim: m,
            vectors,
        }
    }

    /// Encoder from arbitrary vectors, each rescaled to unit length.
    pub fn from_vectors<S: AsRef<str>>(
        categories: &[S],
        vectors: Vec<Vec<f64>>,
    ) -> Result<Self, VectorError> {
        if vectors.len() != categories.len() {
            return Err(VectorError::EncoderShape(categories.len(), vectors.len()));
        }
        let embed_dim = check_points(&vectors)?;
        let vectors = vectors
            .into_iter()
            .map(|v| {
                let n = linalg::norm(&v);
                if n == 0.0 || !n.is_finite() {
                    Err(VectorError::InvalidFrequencies(
                        "category vector has zero norm".into(),
                    ))
                } else {
                    Ok(v.into_iter().map(|x| x / n).collect())
                }
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        Ok(Self {
            categories: categories.iter().map(|c| c.as_ref().to_owned()).collect(),
            embed_dim,
            vectors,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn vector(&self, category: &str) -> Option<&[f64]> {
        self.categories
            .iter()
            .position(|c| c == category)
            .map(|i| self.vectors[i].as_slice())
    }
}

/// Frequency-weighted sum `Σ f_j φ(c_j)`.
pub fn categorical_embed(
    freqs: &[(&str, f64)],
    enc: &CategoricalEncoder,
) -> Result<Vec<f64>, VectorError> {
    let mut total = 0.0;
    let mut out = vec![0.0; enc.embed_dim];
    for (cat, f) in freqs {
        if !(*f >= 0.0) {
            return Err(VectorError::InvalidFrequencies(format!(
                "frequency of `{cat}` is {f}"
            )));
        }
        total += f;
        let phi = enc
            .vector(cat)
            .ok_or_else(|| VectorError::UnknownCategory((*cat).to_owned()))?;
        for (o, p) in out.iter_mut().zip(phi) {
            *o += f * p;
        }
    }
    if total > 1.0 + 1e-9 {
        return Err(VectorError::InvalidFrequencies(format!(
            "frequencies sum to {total}"
        )));
    }
    Ok(out)
}

/// Concatenates a numeric block with categorical/derived blocks in order.
pub fn mixed_embed(numeric: &[f64], blocks: &[Vec<f64>]) -> Result<EmbeddingVector, VectorError> {
    let total = numeric.len() + blocks.iter().map(Vec::len).sum::<usize>();
    if total > MAX_DIM || total == 0 {
        return Err(VectorError::BadDimension(total));
    }
    let mut values = Vec::with_capacity(total);
    values.extend_from_slice(numeric);
    blocks.iter().for_each(|b| values.extend_from_slice(b));
    let profile = if blocks.is_empty() {
        Profile::Generic
    } else {
        Profile::Mixed
    };
    EmbeddingVector::new(values, profile)
}

/// `(1 − α)v + αx`. `α = 0` returns `v` and `α = 1` returns `x` exactly.
pub fn streaming_update(
    v: &EmbeddingVector,
    x_new: &[f64],
    alpha: f64,
) -> Result<EmbeddingVector, VectorError> {
    if v.dim() != x_new.len() {
        return Err(VectorError::DimensionMismatch(v.dim(), x_new.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(VectorError::InvalidAlpha(alpha));
    }
    let values = v
        .values
        .iter()
        .zip(x_new)
        .map(|(a, b)| {
            if alpha == 0.0 {
                *a
            } else if alpha == 1.0 {
                *b
            } else {
                (1.0 - alpha) * a + alpha * b
            }
        })
        .collect();
    EmbeddingVector::new(values, v.profile)
}

/// Cosine of the angle between `a` and `b`, clamped to [−1, 1].
/// A pair involving a zero vector scores 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (linalg::norm(a), linalg::norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((linalg::dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Edge admission weight: cosine similarity between the tail centroid and
/// the head centroid, floored at zero.
pub fn gate_weight(tail: &[Vec<f64>], head: &[Vec<f64>]) -> Result<f64, VectorError> {
    let t = centroid(tail)?;
    let h = centroid(head)?;
    Ok(cosine_similarity(&t, &h)?.max(0.0))
}

/// `[sin(2πt/T₀), cos(2πt/T₀), t/T₀]`.
pub fn temporal_block(t: f64, base_period: f64) -> [f64; 3] {
    let phase = t / base_period;
    [(2.0 * PI * phase).sin(), (2.0 * PI * phase).cos(), phase]
}

/// One transformation event in a metadata history, as seen by the embedder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    pub timestamp: f64,
    pub param_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetadataEmbedConfig {
    pub buckets: usize,
    /// History length mapped to 1.0 in the count feature.
    pub history_cap: usize,
    /// Timestamp mapped to 1.0 in the mean-time feature.
    pub time_scale: f64,
}

impl Default for MetadataEmbedConfig {
    fn default() -> Self {
        Self {
            buckets: DEFAULT_BUCKETS,
            history_cap: 16,
            time_scale: 1.0,
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Metadata vector: hash-bucketed one-hot of attribute names followed by
/// `(count / cap, mean timestamp / scale, mean param norm)`.
pub fn metadata_embed<S: AsRef<str>>(
    attrs: &[S],
    history: &[HistoryPoint],
    cfg: &MetadataEmbedConfig,
) -> Result<EmbeddingVector, VectorError> {
    let mut values = vec![0.0; cfg.buckets + 3];
    for a in attrs {
        let bucket = (fnv1a(a.as_ref()) % cfg.buckets as u64) as usize;
        values[bucket] = 1.0;
    }
    if !history.is_empty() {
        let n = history.len() as f64;
        values[cfg.buckets] = n / cfg.history_cap as f64;
        values[cfg.buckets + 1] =
            history.iter().map(|h| h.timestamp).sum::<f64>() / n / cfg.time_scale;
        values[cfg.buckets + 2] = history.iter().map(|h| h.param_norm).sum::<f64>() / n;
    }
    EmbeddingVector::new(values, Profile::Metadata)
}

/// Projection onto the top two principal directions of a metadata corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataProjector {
    mean: Vec<f64>,
    axes: [Vec<f64>; 2],
}

/// Power-iteration count for the metadata projection.
pub const PROJECTION_ITERS: usize = 100;

impl MetadataProjector {
    pub fn fit(corpus: &[Vec<f64>], seed: u64) -> Result<Self, VectorError> {
        let mean = centroid(corpus)?;
        let dim = mean.len();
        let mut cov = Matrix::zeros(dim, dim);
        for p in corpus {
            for i in 0..dim {
                for j in 0..dim {
                    cov[(i, j)] += (p[i] - mean[i]) * (p[j] - mean[j]);
                }
            }
        }
        let pairs = linalg::top_eigenpairs_by_magnitude(&cov, 2, 0.0, PROJECTION_ITERS, seed);
        let mut axes = [vec![0.0; dim], vec![0.0; dim]];
        for (slot, pair) in axes.iter_mut().zip(pairs) {
            *slot = pair.vector;
        }
        Ok(Self { mean, axes })
    }

    pub fn project(&self, v: &[f64]) -> Result<[f64; 2], VectorError> {
        if v.len() != self.mean.len() {
            return Err(VectorError::DimensionMismatch(self.mean.len(), v.len()));
        }
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok([
            linalg::dot(&centered, &self.axes[0]),
            linalg::dot(&centered, &self.axes[1]),
        ])
    }
}

/// 2 numeric + 4 categorical + 3 temporal + 2 metadata features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R11Profile {
    pub numeric: [f64; 2],
    pub categorical: [f64; 4],
    pub temporal: [f64; 3],
    pub meta: [f64; 2],
}

impl R11Profile {
    pub const DIM: usize = 11;

    pub fn new(
        numeric: [f64; 2],
        categorical: [f64; 4],
        temporal: [f64; 3],
        meta: [f64; 2],
    ) -> Result<Self, VectorError> {
        if categorical.iter().any(|c| !(0.0..=1.0).contains(c))
            || categorical.iter().sum::<f64>() > 1.0 + 1e-9
        {
            return Err(VectorError::InvalidFrequencies(
                "categorical block must lie in [0,1] and sum to at most 1".into(),
            ));
        }
        Ok(Self {
            numeric,
            categorical,
            temporal,
            meta,
        })
    }

    pub fn embed(&self) -> Result<EmbeddingVector, VectorError> {
        let mixed = mixed_embed(
            &self.numeric,
            &[
                self.categorical.to_vec(),
                self.temporal.to_vec(),
                self.meta.to_vec(),
            ],
        )?;
        EmbeddingVector::new(mixed.values, Profile::R11)
    }

    pub fn from_embedding(v: &EmbeddingVector) -> Result<Self, VectorError> {
        if v.dim() != Self::DIM {
            return Err(VectorError::DimensionMismatch(Self::DIM, v.dim()));
        }
        let x = v.values();
        Self::new(
            [x[0], x[1]],
            [x[2], x[3], x[4], x[5]],
            [x[6], x[7], x[8]],
            [x[9], x[10]],
        )
    }
}
