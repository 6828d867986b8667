//! Aggregation along a hyperedge.
//!
//! A hyperedge tail is an unordered collection, so the morphism attached to
//! an edge must not care about input order. Only commutative reducers are
//! offered, and inputs are put into a canonical order before reducing so
//! floating-point sums come out bit-identical for every permutation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{DiscreteDataset, TransformError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    Sum,
    Mean,
    Max,
    Union,
}

/// The morphism attached to a hyperedge: a reducer and the tail arity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducerSpec {
    pub reducer: Reducer,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperInput {
    Vector(Vec<f64>),
    Dataset(DiscreteDataset),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperOutput {
    Vector(Vec<f64>),
    Dataset(DiscreteDataset),
}

fn cmp_vectors(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn cmp_cells(a: &Option<Value>, b: &Option<Value>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, _) => Ordering::Less,
        (_, None) => Ordering::Greater,
        (Some(Value::Num(x)), Some(Value::Num(y))) => x.total_cmp(y),
        (Some(Value::Num(_)), Some(Value::Cat(_))) => Ordering::Less,
        (Some(Value::Cat(_)), Some(Value::Num(_))) => Ordering::Greater,
        (Some(Value::Cat(x)), Some(Value::Cat(y))) => x.cmp(y),
    }
}

fn cmp_records(a: &[Option<Value>], b: &[Option<Value>]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| cmp_cells(x, y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Applies the edge morphism to its tail inputs.
///
/// Vectors support `sum`, `mean` and `max`; datasets with a common schema
/// support `union` (set union of records, returned in canonical order).
pub fn apply_hyperedge(spec: &ReducerSpec, inputs: &[HyperInput]) -> Result<HyperOutput, TransformError> {
    if inputs.len() != spec.arity {
        return Err(TransformError::Arity {
            expected: spec.arity,
            found: inputs.len(),
        });
    }
    let Some(first) = inputs.first() else {
        return Err(TransformError::Arity {
            expected: spec.arity.max(1),
            found: 0,
        });
    };
    match first {
        HyperInput::Vector(v0) => {
            let mut vs: Vec<&Vec<f64>> = inputs
                .iter()
                .map(|i| match i {
                    HyperInput::Vector(v) if v.len() == v0.len() => Ok(v),
                    _ => Err(TransformError::HeterogeneousInputs),
                })
                .collect::<Result<_, _>>()?;
            vs.sort_by(|a, b| cmp_vectors(a, b));
            let dim = v0.len();
            let out = match spec.reducer {
                Reducer::Sum | Reducer::Mean => {
                    let mut acc = vec![0.0; dim];
                    for v in &vs {
                        acc.iter_mut().zip(v.iter()).for_each(|(a, x)| *a += x);
                    }
                    if spec.reducer == Reducer::Mean {
                        let n = vs.len() as f64;
                        acc.iter_mut().for_each(|a| *a /= n);
                    }
                    acc
                }
                Reducer::Max => (0..dim)
                    .map(|k| vs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max))
                    .collect(),
                Reducer::Union => return Err(TransformError::UnsupportedReducer(Reducer::Union)),
            };
            Ok(HyperOutput::Vector(out))
        }
        HyperInput::Dataset(d0) => {
            if spec.reducer != Reducer::Union {
                return Err(TransformError::UnsupportedReducer(spec.reducer));
            }
            let mut records = Vec::new();
            for input in inputs {
                match input {
                    HyperInput::Dataset(d) if d.schema() == d0.schema() => {
                        records.extend(d.records().iter().cloned());
                    }
                    _ => return Err(TransformError::HeterogeneousInputs),
                }
            }
            records.sort_by(|a, b| cmp_records(a, b));
            records.dedup();
            // Bin edges of the union: keep an attribute's edges only if every
            // input agrees on them.
            let mut binning = d0.binning().clone();
            binning.retain(|name, edges| {
                inputs.iter().all(|i| match i {
                    HyperInput::Dataset(d) => d.binning().get(name) == Some(edges),
                    HyperInput::Vector(_) => false,
                })
            });
            Ok(HyperOutput::Dataset(DiscreteDataset::with_missing(
                d0.schema().clone(),
                records,
                binning,
            )?))
        }
    }
}
