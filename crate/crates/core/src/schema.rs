//! Schemas, attribute similarity, schema distance and schema matching.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

/// Largest source schema `match_schemas_exact` accepts.
pub const EXACT_MATCH_LIMIT: usize = 10;

/// Similarity threshold above which a mapped pair counts as compatible.
pub const COMPAT_SIM_CUTOFF: f64 = 0.5;

const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("attribute name must not be empty")]
    EmptyAttributeName,
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("similarity for ({0}, {1}) is {2}, outside [0, 1]")]
    SimilarityOutOfRange(String, String, f64),
    #[error("weight for ({0}, {1}) is {2}, must be >= 0")]
    NegativeWeight(String, String, f64),
    #[error("matrix shapes differ: weights {0:?}, similarities {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("exact matching supports at most {EXACT_MATCH_LIMIT} source attributes, got {0}")]
    TooLarge(usize),
    #[error("source schema has {0} attributes but target only {1}")]
    SourceLargerThanTarget(usize, usize),
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
    Temporal,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Result<Self, SchemaError> {
        let name = name.into();
        if name.is_empty() {
            return Err(SchemaError::EmptyAttributeName);
        }
        Ok(Self { name, kind })
    }
}

/// An ordered set of attributes with pairwise distinct names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct Schema {
    attributes: Vec<Attribute>,
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if a.name.is_empty() {
                return Err(SchemaError::EmptyAttributeName);
            }
            if !seen.insert(a.name.as_str()) {
                return Err(SchemaError::DuplicateAttribute(a.name.clone()));
            }
        }
        Ok(Self { attributes })
    }

    /// Convenience constructor for schemas whose attribute kinds don't matter.
    pub fn numeric(names: &[&str]) -> Result<Self, SchemaError> {
        names
            .iter()
            .map(|n| Attribute::new(*n, AttributeKind::Numeric))
            .collect::<Result<Vec<_>, _>>()
            .and_then(Self::new)
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.attributes.iter().any(|a| a.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }
}

impl TryFrom<Vec<Attribute>> for Schema {
    type Error = SchemaError;

    fn try_from(attributes: Vec<Attribute>) -> Result<Self, SchemaError> {
        Self::new(attributes)
    }
}

impl From<Schema> for Vec<Attribute> {
    fn from(s: Schema) -> Self {
        s.attributes
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Symmetric attribute similarity and weight tables.
///
/// Pairs are stored under an order-normalized key, so symmetry holds by
/// construction. Missing entries fall back to the defaults (similarity 0,
/// weight 1 unless configured otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    sim: BTreeMap<(String, String), f64>,
    weight: BTreeMap<(String, String), f64>,
    default_sim: f64,
    default_weight: f64,
}

impl Default for SimilarityTable {
    fn default() -> Self {
        Self {
            sim: BTreeMap::new(),
            weight: BTreeMap::new(),
            default_sim: 0.0,
            default_weight: 1.0,
        }
    }
}

impl SimilarityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_defaults(default_sim: f64, default_weight: f64) -> Result<Self, SchemaError> {
        if !(0.0..=1.0).contains(&default_sim) {
            return Err(SchemaError::SimilarityOutOfRange(
                "*".into(),
                "*".into(),
                default_sim,
            ));
        }
        if !(default_weight >= 0.0) {
            return Err(SchemaError::NegativeWeight("*".into(), "*".into(), default_weight));
        }
        Ok(Self {
            default_sim,
            default_weight,
            ..Self::default()
        })
    }

    pub fn set_sim(&mut self, a: &str, b: &str, value: f64) -> Result<(), SchemaError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(SchemaError::SimilarityOutOfRange(a.into(), b.into(), value));
        }
        self.sim.insert(pair_key(a, b), value);
        Ok(())
    }

    pub fn set_weight(&mut self, a: &str, b: &str, value: f64) -> Result<(), SchemaError> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(SchemaError::NegativeWeight(a.into(), b.into(), value));
        }
        self.weight.insert(pair_key(a, b), value);
        Ok(())
    }

    /// Builder-style variant of [`set_sim`](Self::set_sim).
    pub fn with_sim(mut self, a: &str, b: &str, value: f64) -> Result<Self, SchemaError> {
        self.set_sim(a, b, value)?;
        Ok(self)
    }

    /// Similarity of `a` and `b`. An attribute is fully similar to itself
    /// unless the table says otherwise.
    pub fn sim(&self, a: &str, b: &str) -> f64 {
        match self.sim.get(&pair_key(a, b)) {
            Some(v) => *v,
            None if a == b => 1.0,
            None => self.default_sim,
        }
    }

    pub fn weight(&self, a: &str, b: &str) -> f64 {
        self.weight
            .get(&pair_key(a, b))
            .copied()
            .unwrap_or(self.default_weight)
    }

    pub fn default_sim(&self) -> f64 {
        self.default_sim
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn sim_entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.sim.iter().map(|((a, b), v)| (a.as_str(), b.as_str(), *v))
    }

    pub fn weight_entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.weight
            .iter()
            .map(|((a, b), v)| (a.as_str(), b.as_str(), *v))
    }

    /// Similarity and weight matrices with rows indexed by `si`, columns by `sj`.
    pub fn matrices(&self, si: &Schema, sj: &Schema) -> (Matrix, Matrix) {
        let mut w = Matrix::zeros(si.len(), sj.len());
        let mut s = Matrix::zeros(si.len(), sj.len());
        for (i, a) in si.names().enumerate() {
            for (j, b) in sj.names().enumerate() {
                w[(i, j)] = self.weight(a, b);
                s[(i, j)] = self.sim(a, b);
            }
        }
        (w, s)
    }
}

/// One `source → target` pair of an attribute mapping, with its similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedPair {
    pub source: String,
    pub target: String,
    pub sim: f64,
}

/// An injective mapping from source attributes to target attributes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeMapping {
    pub pairs: Vec<MappedPair>,
    pub score: f64,
}

impl AttributeMapping {
    fn from_pairs(pairs: Vec<MappedPair>) -> Self {
        let score = pairs.iter().map(|p| p.sim).sum();
        Self { pairs, score }
    }

    pub fn target_of(&self, source: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|p| p.source == source)
            .map(|p| p.target.as_str())
    }

    pub fn source_of(&self, target: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|p| p.target == target)
            .map(|p| p.source.as_str())
    }

    /// Checks that the mapping is injective, references only attributes of
    /// the given schemas, and that its score is the sum of its pair sims.
    pub fn validate(&self, si: &Schema, sj: &Schema) -> Result<(), SchemaError> {
        let mut sources = HashSet::new();
        let mut targets = HashSet::new();
        for p in &self.pairs {
            if !si.contains(&p.source) {
                return Err(SchemaError::InvalidMapping(format!(
                    "unknown source attribute `{}`",
                    p.source
                )));
            }
            if !sj.contains(&p.target) {
                return Err(SchemaError::InvalidMapping(format!(
                    "unknown target attribute `{}`",
                    p.target
                )));
            }
            if !sources.insert(p.source.as_str()) {
                return Err(SchemaError::InvalidMapping(format!(
                    "source `{}` mapped twice",
                    p.source
                )));
            }
            if !targets.insert(p.target.as_str()) {
                return Err(SchemaError::InvalidMapping(format!(
                    "target `{}` used twice",
                    p.target
                )));
            }
            if !(0.0..=1.0).contains(&p.sim) {
                return Err(SchemaError::InvalidMapping(format!(
                    "pair ({}, {}) has similarity {}",
                    p.source, p.target, p.sim
                )));
            }
        }
        let recomputed: f64 = self.pairs.iter().map(|p| p.sim).sum();
        if (recomputed - self.score).abs() > 1e-9 {
            return Err(SchemaError::InvalidMapping(format!(
                "score {} does not match pair sum {}",
                self.score, recomputed
            )));
        }
        Ok(())
    }
}

/// Σ w(a,b)·(1 − sim(a,b)) over every cross pair `a ∈ si`, `b ∈ sj`.
pub fn schema_distance(si: &Schema, sj: &Schema, table: &SimilarityTable) -> f64 {
    let mut total = 0.0;
    for a in si.names() {
        for b in sj.names() {
            total += table.weight(a, b) * (1.0 - table.sim(a, b));
        }
    }
    total
}

/// Matrix form of [`schema_distance`]: the elementwise sum of `W ∘ (1 − S)`.
///
/// This is the trace of `W (𝟙 − S)ᵀ` without forming the product.
pub fn schema_distance_matrix(weights: &Matrix, sims: &Matrix) -> Result<f64, SchemaError> {
    if weights.shape() != sims.shape() {
        return Err(SchemaError::ShapeMismatch(weights.shape(), sims.shape()));
    }
    let mut total = 0.0;
    for i in 0..weights.rows() {
        for j in 0..weights.cols() {
            let s = sims[(i, j)];
            if !(0.0..=1.0).contains(&s) {
                return Err(SchemaError::SimilarityOutOfRange(i.to_string(), j.to_string(), s));
            }
            let w = weights[(i, j)];
            if !(w >= 0.0) {
                return Err(SchemaError::NegativeWeight(i.to_string(), j.to_string(), w));
            }
            total += w * (1.0 - s);
        }
    }
    Ok(total)
}

fn check_sizes(si: &Schema, sj: &Schema) -> Result<(), SchemaError> {
    if si.len() > sj.len() {
        return Err(SchemaError::SourceLargerThanTarget(si.len(), sj.len()));
    }
    Ok(())
}

/// Optimal injective mapping by branch and bound.
///
/// Targets are explored in lexicographic name order and an incumbent is only
/// replaced on a strictly better score, so among optimal mappings the one
/// whose target-name sequence is lexicographically smallest wins.
pub fn match_schemas_exact(
    si: &Schema,
    sj: &Schema,
    table: &SimilarityTable,
) -> Result<AttributeMapping, SchemaError> {
    check_sizes(si, sj)?;
    if si.len() > EXACT_MATCH_LIMIT {
        return Err(SchemaError::TooLarge(si.len()));
    }
    let mut targets: Vec<&str> = sj.names().collect();
    targets.sort_unstable();
    let sources: Vec<&str> = si.names().collect();
    let sims: Vec<Vec<f64>> = sources
        .iter()
        .map(|a| targets.iter().map(|b| table.sim(a, b)).collect())
        .collect();
    // Optimistic bound for rows i.. : each row takes its best target.
    let mut suffix_bound = vec![0.0; sources.len() + 1];
    for i in (0..sources.len()).rev() {
        let best = sims[i].iter().copied().fold(0.0, f64::max);
        suffix_bound[i] = suffix_bound[i + 1] + best;
    }

    struct Search<'a> {
        sims: &'a [Vec<f64>],
        bound: &'a [f64],
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn run(&mut self, row: usize, score: f64) {
            if row == self.sims.len() {
                let better = match &self.best {
                    None => true,
                    Some((b, _)) => score > b + SCORE_EPS,
                };
                if better {
                    self.best = Some((score, self.current.clone()));
                }
                return;
            }
            if let Some((b, _)) = &self.best {
                if score + self.bound[row] <= b + SCORE_EPS {
                    return;
                }
            }
            for t in 0..self.used.len() {
                if self.used[t] {
                    continue;
                }
                self.used[t] = true;
                self.current.push(t);
                self.run(row + 1, score + self.sims[row][t]);
                self.current.pop();
                self.used[t] = false;
            }
        }
    }

    let mut search = Search {
        sims: &sims,
        bound: &suffix_bound,
        used: vec![false; targets.len()],
        current: Vec::with_capacity(sources.len()),
        best: None,
    };
    search.run(0, 0.0);
    let (_, choice) = search.best.unwrap_or_default();
    let pairs = sources
        .iter()
        .zip(choice)
        .enumerate()
        .map(|(i, (a, t))| MappedPair {
            source: (*a).to_owned(),
            target: targets[t].to_owned(),
            sim: sims[i][t],
        })
        .collect();
    Ok(AttributeMapping::from_pairs(pairs))
}

/// Greedy matching: highest-similarity pair first, subject to injectivity.
///
/// Candidate pairs are sorted by similarity descending, then by
/// `(source, target)` name. The resulting pairs are reported in source
/// schema order.
pub fn match_schemas_greedy(
    si: &Schema,
    sj: &Schema,
    table: &SimilarityTable,
) -> Result<AttributeMapping, SchemaError> {
    check_sizes(si, sj)?;
    let mut candidates: Vec<(f64, &str, &str)> = si
        .names()
        .flat_map(|a| sj.names().map(move |b| (table.sim(a, b), a, b)))
        .collect();
    candidates.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then_with(|| x.1.cmp(y.1))
            .then_with(|| x.2.cmp(y.2))
    });
    let mut chosen: BTreeMap<&str, (&str, f64)> = BTreeMap::new();
    let mut used_targets = HashSet::new();
    for (s, a, b) in candidates {
        if chosen.contains_key(a) || used_targets.contains(b) {
            continue;
        }
        chosen.insert(a, (b, s));
        used_targets.insert(b);
        if chosen.len() == si.len() {
            break;
        }
    }
    let pairs = si
        .names()
        .filter_map(|a| {
            chosen.get(a).map(|(b, s)| MappedPair {
                source: a.to_owned(),
                target: (*b).to_owned(),
                sim: *s,
            })
        })
        .collect();
    Ok(AttributeMapping::from_pairs(pairs))
}

/// Fraction of `si` attributes mapped with similarity at least
/// [`COMPAT_SIM_CUTOFF`], and whether that fraction reaches `tau`.
pub fn compat(
    si: &Schema,
    sj: &Schema,
    mapping: &AttributeMapping,
    tau: f64,
) -> Result<(f64, bool), SchemaError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(SchemaError::InvalidThreshold(tau));
    }
    mapping.validate(si, sj)?;
    if si.is_empty() {
        return Ok((0.0, false));
    }
    let good = mapping
        .pairs
        .iter()
        .filter(|p| p.sim >= COMPAT_SIM_CUTOFF)
        .count();
    let fraction = good as f64 / si.len() as f64;
    Ok((fraction, fraction >= tau))
}
