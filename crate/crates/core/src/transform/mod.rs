//! Transformations between dataset domains.
//!
//! A [`Transformation`] is a pipeline of primitive [`Step`]s. The empty
//! pipeline is the identity, and composition concatenates pipelines, so the
//! set of transformations is closed under composition and forms a monoid.
//! Every step reports which output row each input row lands in; loss
//! estimation uses that row lineage to build the joint distribution of a
//! dataset and its image.

mod dataset;
mod hyperedge;
mod loss;
mod transport;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{bin_index, DiscreteDataset, Symbol, Value};
pub use hyperedge::{apply_hyperedge, HyperInput, HyperOutput, Reducer, ReducerSpec};
pub use loss::{check_subadditivity, entropy_bits, estimate_loss, LossReport};
pub use transport::{sinkhorn_plan, sinkhorn_w2, squared_distance_cost};

use crate::schema::{self, Attribute, AttributeKind, AttributeMapping, Schema, SimilarityTable};
use dataset::is_numeric;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("dataset schema does not match the source domain of `{0}`")]
    DomainMismatch(String),
    #[error("cannot compose: target of `{0}` differs from source of `{1}`")]
    ChainMismatch(String, String),
    #[error("invalid parameters for `{kind}`: {reason}")]
    BadParams { kind: &'static str, reason: String },
    #[error("record {row}: {reason}")]
    BadRecord { row: usize, reason: String },
    #[error("invalid binning: {0}")]
    BadBinning(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no applicable candidate transformation")]
    NoCandidate,
    #[error("no candidate reaches compatibility threshold {0}")]
    NoCompatibleCandidate(f64),
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("distribution {0} is not normalized (sum {1})")]
    NotNormalized(&'static str, f64),
    #[error("distribution {0} has a negative entry")]
    NegativeMass(&'static str),
    #[error("regularization must be positive, got {0}")]
    BadRegularization(f64),
    #[error("cost matrix is {0}x{1}, expected {2}x{3}")]
    CostShape(usize, usize, usize, usize),
    #[error("expected {expected} inputs, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("reducer {0:?} does not apply to these inputs")]
    UnsupportedReducer(Reducer),
    #[error("inputs disagree in shape or schema")]
    HeterogeneousInputs,
    #[error(transparent)]
    Schema(#[from] schema::SchemaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostClass {
    Linear,
    Quadratic,
}

impl CostClass {
    /// `n` for linear, `n²` for quadratic.
    pub fn numeric_cost(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            CostClass::Linear => n,
            CostClass::Quadratic => n * n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TransformKind {
    Identity,
    AffineScale,
    Project,
    AggregateSum,
    BinMerge,
    Constant,
    Composite,
}

/// A primitive transformation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Step {
    /// `x ↦ factor·x + offset` on one numeric attribute.
    AffineScale {
        attribute: String,
        factor: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Keeps the listed attributes in the given order, renaming `from → to`.
    Project { keep: Vec<(String, String)> },
    /// Groups by `group_by` and sums `value`; output is `group_by ++ [value]`.
    AggregateSum { group_by: Vec<String>, value: String },
    /// Merges every `factor` adjacent bins of a binned numeric attribute and
    /// replaces values by the midpoint of their merged bin.
    BinMerge { attribute: String, factor: usize },
    /// Every numeric cell becomes `value`, every other cell `"*"`.
    Constant { value: f64 },
}

impl Step {
    fn name(&self) -> &'static str {
        match self {
            Step::AffineScale { .. } => "affineScale",
            Step::Project { .. } => "project",
            Step::AggregateSum { .. } => "aggregateSum",
            Step::BinMerge { .. } => "binMerge",
            Step::Constant { .. } => "constant",
        }
    }

    fn kind(&self) -> TransformKind {
        match self {
            Step::AffineScale { .. } => TransformKind::AffineScale,
            Step::Project { .. } => TransformKind::Project,
            Step::AggregateSum { .. } => TransformKind::AggregateSum,
            Step::BinMerge { .. } => TransformKind::BinMerge,
            Step::Constant { .. } => TransformKind::Constant,
        }
    }

    fn bad(&self, reason: impl Into<String>) -> TransformError {
        TransformError::BadParams {
            kind: self.name(),
            reason: reason.into(),
        }
    }

    fn numeric_attr<'a>(&self, schema: &'a Schema, name: &str) -> Result<&'a Attribute, TransformError> {
        let attr = schema
            .get(name)
            .ok_or_else(|| self.bad(format!("unknown attribute `{name}`")))?;
        if !is_numeric(attr.kind) {
            return Err(self.bad(format!("`{name}` is not numeric")));
        }
        Ok(attr)
    }

    /// Output schema for `input`, validating parameters along the way.
    fn output_schema(&self, input: &Schema) -> Result<Schema, TransformError> {
        match self {
            Step::AffineScale {
                attribute,
                factor,
                offset,
            } => {
                self.numeric_attr(input, attribute)?;
                if !(factor.is_finite() && offset.is_finite()) || *factor == 0.0 {
                    return Err(self.bad("factor must be finite and nonzero, offset finite"));
                }
                Ok(input.clone())
            }
            Step::Project { keep } => {
                let attrs = keep
                    .iter()
                    .map(|(from, to)| {
                        let a = input
                            .get(from)
                            .ok_or_else(|| self.bad(format!("unknown attribute `{from}`")))?;
                        Ok(Attribute::new(to.clone(), a.kind)?)
                    })
                    .collect::<Result<Vec<_>, TransformError>>()?;
                Ok(Schema::new(attrs)?)
            }
            Step::AggregateSum { group_by, value } => {
                let v = self.numeric_attr(input, value)?.clone();
                let mut attrs = group_by
                    .iter()
                    .map(|g| {
                        input
                            .get(g)
                            .cloned()
                            .ok_or_else(|| self.bad(format!("unknown attribute `{g}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                attrs.push(Attribute::new(v.name, AttributeKind::Numeric)?);
                Ok(Schema::new(attrs)?)
            }
            Step::BinMerge { attribute, factor } => {
                self.numeric_attr(input, attribute)?;
                if *factor < 1 {
                    return Err(self.bad("factor must be at least 1"));
                }
                Ok(input.clone())
            }
            Step::Constant { value } => {
                if !value.is_finite() {
                    return Err(self.bad("constant must be finite"));
                }
                Ok(input.clone())
            }
        }
    }

    /// Applies the step and returns the row lineage (input row → output row).
    fn run(&self, d: DiscreteDataset) -> Result<(DiscreteDataset, Vec<usize>), TransformError> {
        let out_schema = self.output_schema(d.schema())?;
        let (schema, records, mut binning) = d.parts();
        let identity_rows: Vec<usize> = (0..records.len()).collect();
        match self {
            Step::AffineScale {
                attribute,
                factor,
                offset,
            } => {
                let i = schema.index_of(attribute).expect("validated");
                let map = |x: f64| factor * x + offset;
                let records = records
                    .into_iter()
                    .map(|mut r| {
                        if let Some(Value::Num(x)) = r[i] {
                            r[i] = Some(Value::Num(map(x)));
                        }
                        r
                    })
                    .collect();
                if let Some(edges) = binning.get_mut(attribute) {
                    edges.iter_mut().for_each(|e| *e = map(*e));
                    if *factor < 0.0 {
                        edges.reverse();
                    }
                }
                Ok((
                    DiscreteDataset::with_missing(out_schema, records, binning)?,
                    identity_rows,
                ))
            }
            Step::Project { keep } => {
                let idx: Vec<usize> = keep
                    .iter()
                    .map(|(from, _)| schema.index_of(from).expect("validated"))
                    .collect();
                let records = records
                    .into_iter()
                    .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                    .collect();
                let binning = keep
                    .iter()
                    .filter_map(|(from, to)| binning.get(from).map(|e| (to.clone(), e.clone())))
                    .collect();
                Ok((
                    DiscreteDataset::with_missing(out_schema, records, binning)?,
                    identity_rows,
                ))
            }
            Step::AggregateSum { group_by, value } => {
                let gidx: Vec<usize> = group_by
                    .iter()
                    .map(|g| schema.index_of(g).expect("validated"))
                    .collect();
                let vidx = schema.index_of(value).expect("validated");
                let keys = DiscreteDataset::with_missing(schema.clone(), records.clone(), BTreeMap::new())?
                    .symbols();
                let mut group_of: BTreeMap<Vec<Symbol>, usize> = BTreeMap::new();
                let mut rows: Vec<(Vec<Option<Value>>, f64)> = Vec::new();
                let mut lineage = Vec::with_capacity(records.len());
                for (r, sym) in records.iter().zip(keys) {
                    let key: Vec<Symbol> = gidx.iter().map(|&i| sym[i].clone()).collect();
                    let next = rows.len();
                    let g = *group_of.entry(key).or_insert(next);
                    if g == next {
                        rows.push((gidx.iter().map(|&i| r[i].clone()).collect(), 0.0));
                    }
                    if let Some(Value::Num(x)) = r[vidx] {
                        rows[g].1 += x;
                    }
                    lineage.push(g);
                }
                let records = rows
                    .into_iter()
                    .map(|(mut key, sum)| {
                        key.push(Some(Value::Num(sum)));
                        key
                    })
                    .collect();
                let binning = binning
                    .into_iter()
                    .filter(|(k, _)| group_by.contains(k) && k != value)
                    .collect();
                Ok((
                    DiscreteDataset::with_missing(out_schema, records, binning)?,
                    lineage,
                ))
            }
            Step::BinMerge { attribute, factor } => {
                let edges = binning
                    .get(attribute)
                    .cloned()
                    .ok_or_else(|| self.bad(format!("`{attribute}` has no bin edges")))?;
                let mut merged: Vec<f64> = edges.iter().step_by(*factor).copied().collect();
                if merged.last() != edges.last() {
                    merged.push(*edges.last().expect("at least two edges"));
                }
                let i = schema.index_of(attribute).expect("validated");
                let records = records
                    .into_iter()
                    .map(|mut r| {
                        if let Some(Value::Num(x)) = r[i] {
                            let b = bin_index(&merged, x);
                            r[i] = Some(Value::Num(0.5 * (merged[b] + merged[b + 1])));
                        }
                        r
                    })
                    .collect();
                binning.insert(attribute.clone(), merged);
                Ok((
                    DiscreteDataset::with_missing(out_schema, records, binning)?,
                    identity_rows,
                ))
            }
            Step::Constant { value } => {
                let kinds: Vec<AttributeKind> = schema.attributes().iter().map(|a| a.kind).collect();
                let records = records
                    .iter()
                    .map(|_| {
                        kinds
                            .iter()
                            .map(|k| {
                                Some(if is_numeric(*k) {
                                    Value::Num(*value)
                                } else {
                                    Value::Cat("*".into())
                                })
                            })
                            .collect()
                    })
                    .collect();
                Ok((
                    DiscreteDataset::with_missing(out_schema, records, binning)?,
                    identity_rows,
                ))
            }
        }
    }
}

/// A domain-to-domain mapping `t: Ω_source → Ω_target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformation {
    pub id: String,
    source: Schema,
    target: Schema,
    steps: Vec<Step>,
    cost_class: CostClass,
    /// Atomic transformation ids this one was composed from, first applied
    /// first; empty for an atomic transformation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    parts: Vec<String>,
}

impl Transformation {
    pub fn identity(id: impl Into<String>, domain: Schema) -> Self {
        Self {
            id: id.into(),
            target: domain.clone(),
            source: domain,
            steps: Vec::new(),
            cost_class: CostClass::Linear,
            parts: Vec::new(),
        }
    }

    pub fn new(
        id: impl Into<String>,
        source: Schema,
        step: Step,
        cost_class: CostClass,
    ) -> Result<Self, TransformError> {
        Self::pipeline(id, source, vec![step], cost_class)
    }

    pub fn pipeline(
        id: impl Into<String>,
        source: Schema,
        steps: Vec<Step>,
        cost_class: CostClass,
    ) -> Result<Self, TransformError> {
        let mut target = source.clone();
        for s in &steps {
            target = s.output_schema(&target)?;
        }
        Ok(Self {
            id: id.into(),
            source,
            target,
            steps,
            cost_class,
            parts: Vec::new(),
        })
    }

    pub fn source(&self) -> &Schema {
        &self.source
    }

    pub fn target(&self) -> &Schema {
        &self.target
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn cost_class(&self) -> CostClass {
        self.cost_class
    }

    /// Atomic ids in application order; `[id]` for an atomic transformation.
    pub fn components(&self) -> Vec<&str> {
        if self.parts.is_empty() {
            vec![self.id.as_str()]
        } else {
            self.parts.iter().map(String::as_str).collect()
        }
    }

    pub fn kind(&self) -> TransformKind {
        match self.steps.as_slice() {
            [] => TransformKind::Identity,
            [s] => s.kind(),
            _ => TransformKind::Composite,
        }
    }

    /// Euclidean norm of the numeric parameters, used by metadata embeddings.
    pub fn param_norm(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::AffineScale { factor, offset, .. } => factor * factor + offset * offset,
                Step::BinMerge { factor, .. } => (*factor as f64).powi(2),
                Step::Constant { value } => value * value,
                Step::Project { .. } | Step::AggregateSum { .. } => 0.0,
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn accepts(&self, d: &DiscreteDataset) -> bool {
        d.schema() == &self.source
    }

    pub fn apply(&self, d: &DiscreteDataset) -> Result<DiscreteDataset, TransformError> {
        self.apply_traced(d).map(|(out, _)| out)
    }

    /// Output dataset plus, for every input row, the output row it maps to.
    pub fn apply_traced(
        &self,
        d: &DiscreteDataset,
    ) -> Result<(DiscreteDataset, Vec<usize>), TransformError> {
        if !self.accepts(d) {
            return Err(TransformError::DomainMismatch(self.id.clone()));
        }
        let mut current = d.clone();
        let mut lineage: Vec<usize> = (0..d.len()).collect();
        for s in &self.steps {
            let (next, rows) = s.run(current)?;
            lineage.iter_mut().for_each(|r| *r = rows[*r]);
            current = next;
        }
        Ok((current, lineage))
    }
}

/// `second ∘ first`: apply `first`, then `second`.
///
/// Adjacent affine steps on the same attribute are fused, so `scale(2)`
/// followed by `scale(3)` is stored as a single `scale(6)`.
pub fn compose(first: &Transformation, second: &Transformation) -> Result<Transformation, TransformError> {
    if first.target != second.source {
        return Err(TransformError::ChainMismatch(
            first.id.clone(),
            second.id.clone(),
        ));
    }
    let mut steps = first.steps.clone();
    for s in &second.steps {
        if let (
            Some(Step::AffineScale {
                attribute: a1,
                factor: f1,
                offset: o1,
            }),
            Step::AffineScale {
                attribute: a2,
                factor: f2,
                offset: o2,
            },
        ) = (steps.last_mut(), s)
        {
            if a1 == a2 && (f2 * *f1) != 0.0 {
                *o1 = f2 * *o1 + o2;
                *f1 *= f2;
                continue;
            }
        }
        steps.push(s.clone());
    }
    let (id, parts) = match (first.steps.is_empty(), second.steps.is_empty()) {
        (true, _) => (second.id.clone(), second.parts.clone()),
        (false, true) => (first.id.clone(), first.parts.clone()),
        _ => (
            format!("{}∘{}", second.id, first.id),
            first
                .components()
                .into_iter()
                .chain(second.components())
                .map(str::to_owned)
                .collect(),
        ),
    };
    Ok(Transformation {
        id,
        source: first.source.clone(),
        target: second.target.clone(),
        steps,
        cost_class: first.cost_class.max(second.cost_class),
        parts,
    })
}

/// Candidate minimizing `numeric_cost(t, |d|) + λ·loss(t, d)`; ties keep the
/// earlier candidate. Candidates whose source domain doesn't match `d` are
/// skipped.
pub fn select_transformation<'a>(
    candidates: &'a [Transformation],
    d: &DiscreteDataset,
    lambda: f64,
) -> Result<&'a Transformation, TransformError> {
    if !(lambda > 0.0) {
        return Err(TransformError::BadLambda(lambda));
    }
    let mut best: Option<(f64, &Transformation)> = None;
    for t in candidates.iter().filter(|t| t.accepts(d)) {
        let objective = t.cost_class.numeric_cost(d.len()) + lambda * estimate_loss(t, d)?.loss;
        if best.is_none_or(|(b, _)| objective < b) {
            best = Some((objective, t));
        }
    }
    best.map(|(_, t)| t).ok_or(TransformError::NoCandidate)
}

/// Result of integrating one dataset into another.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub unified: DiscreteDataset,
    pub transformation: Transformation,
    pub mapping: AttributeMapping,
    pub objective: f64,
}

/// Pairs mapped at or above this similarity are merged into one attribute.
pub const UNIFY_SIM: f64 = 1.0;

/// Matching between `left` and `right`, mapping the smaller schema into the
/// larger. Returns the mapping and whether it runs right → left.
fn align(left: &Schema, right: &Schema, table: &SimilarityTable) -> Result<(AttributeMapping, bool), TransformError> {
    let (src, dst, reversed) = if right.len() <= left.len() {
        (right, left, true)
    } else {
        (left, right, false)
    };
    let m = if src.len() <= schema::EXACT_MATCH_LIMIT {
        schema::match_schemas_exact(src, dst, table)?
    } else {
        schema::match_schemas_greedy(src, dst, table)?
    };
    Ok((m, reversed))
}

/// Integrates `dj` into `di`.
///
/// Each candidate (whose source must be `dj`'s schema) is scored by
/// `schema_distance(S_i, t(S_j)) + λ·numeric_cost(t, |dj|)` among those whose
/// attribute matching reaches compatibility `theta`. The unified dataset has
/// schema `S_i` followed by the attributes of `t(S_j)` not merged into `S_i`
/// (merged pairs are those matched with similarity ≥ [`UNIFY_SIM`]); its
/// records are the outer union of `di` and `t(dj)`.
pub fn integrate(
    di: &DiscreteDataset,
    dj: &DiscreteDataset,
    candidates: &[Transformation],
    table: &SimilarityTable,
    lambda: f64,
    theta: f64,
) -> Result<Integration, TransformError> {
    if !(lambda > 0.0) {
        return Err(TransformError::BadLambda(lambda));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(schema::SchemaError::InvalidThreshold(theta).into());
    }
    let si = di.schema();
    let mut best: Option<(f64, &Transformation, AttributeMapping, bool)> = None;
    for t in candidates.iter().filter(|t| t.accepts(dj)) {
        let st = t.target();
        let (mapping, reversed) = align(si, st, table)?;
        let (src, dst) = if reversed { (st, si) } else { (si, st) };
        let (_, pass) = schema::compat(src, dst, &mapping, theta)?;
        if !pass {
            continue;
        }
        let objective =
            schema::schema_distance(si, st, table) + lambda * t.cost_class.numeric_cost(dj.len());
        if best.as_ref().is_none_or(|(b, ..)| objective < *b) {
            best = Some((objective, t, mapping, reversed));
        }
    }
    let (objective, t, mapping, reversed) =
        best.ok_or(TransformError::NoCompatibleCandidate(theta))?;

    let transformed = t.apply(dj)?;
    let st = transformed.schema();
    // st attribute → si attribute it merges into
    let merged: BTreeMap<&str, &str> = mapping
        .pairs
        .iter()
        .filter(|p| p.sim >= UNIFY_SIM)
        .map(|p| {
            if reversed {
                (p.source.as_str(), p.target.as_str())
            } else {
                (p.target.as_str(), p.source.as_str())
            }
        })
        .filter(|(from, into)| {
            st.get(from).map(|a| a.kind) == si.get(into).map(|a| a.kind)
        })
        .collect();
    let mut attrs = si.attributes().to_vec();
    for a in st.attributes() {
        if !merged.contains_key(a.name.as_str()) {
            attrs.push(a.clone());
        }
    }
    let unified_schema = Schema::new(attrs)?;
    let column_of = |name: &str| unified_schema.index_of(name).expect("unified attribute");

    let mut records: Vec<Vec<Option<Value>>> = Vec::with_capacity(di.len() + transformed.len());
    for r in di.records() {
        let mut row = vec![None; unified_schema.len()];
        row[..r.len()].clone_from_slice(r);
        records.push(row);
    }
    for r in transformed.records() {
        let mut row = vec![None; unified_schema.len()];
        for (a, cell) in st.attributes().iter().zip(r) {
            let name = merged.get(a.name.as_str()).copied().unwrap_or(&a.name);
            row[column_of(name)] = cell.clone();
        }
        records.push(row);
    }
    let mut binning = di.binning().clone();
    for (name, edges) in transformed.binning() {
        let target = merged.get(name.as_str()).copied().unwrap_or(name);
        binning.entry(target.to_owned()).or_insert_with(|| edges.clone());
    }
    let unified = DiscreteDataset::with_missing(unified_schema, records, binning)?;
    Ok(Integration {
        unified,
        transformation: t.clone(),
        mapping,
        objective,
    })
}
