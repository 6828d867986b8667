use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::schema::{AttributeKind, Schema};

/// A single cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

pub(crate) fn is_numeric(kind: AttributeKind) -> bool {
    matches!(kind, AttributeKind::Numeric | AttributeKind::Temporal)
}

/// Discretized symbol of one cell, used for entropy estimates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Bin(usize),
    Exact(u64),
    Cat(String),
    Missing,
}

/// A finite table of records over a schema, with optional bin edges for
/// numeric attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDataset {
    schema: Schema,
    records: Vec<Vec<Option<Value>>>,
    binning: BTreeMap<String, Vec<f64>>,
}

impl DiscreteDataset {
    pub fn new(
        schema: Schema,
        records: Vec<Vec<Value>>,
        binning: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, TransformError> {
        let records = records
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::with_missing(schema, records, binning)
    }

    /// Like [`new`](Self::new) but cells may be absent, as in outer unions.
    pub fn with_missing(
        schema: Schema,
        records: Vec<Vec<Option<Value>>>,
        binning: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, TransformError> {
        for (row, r) in records.iter().enumerate() {
            if r.len() != schema.len() {
                return Err(TransformError::BadRecord {
                    row,
                    reason: format!("{} values for {} attributes", r.len(), schema.len()),
                });
            }
            for (attr, cell) in schema.attributes().iter().zip(r) {
                let ok = match cell {
                    None => true,
                    Some(Value::Num(x)) => is_numeric(attr.kind) && x.is_finite(),
                    Some(Value::Cat(_)) => !is_numeric(attr.kind),
                };
                if !ok {
                    return Err(TransformError::BadRecord {
                        row,
                        reason: format!("value for `{}` does not fit {:?}", attr.name, attr.kind),
                    });
                }
            }
        }
        for (name, edges) in &binning {
            let attr = schema
                .get(name)
                .ok_or_else(|| TransformError::BadBinning(format!("unknown attribute `{name}`")))?;
            if !is_numeric(attr.kind) {
                return Err(TransformError::BadBinning(format!(
                    "`{name}` is not numeric"
                )));
            }
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(TransformError::BadBinning(format!(
                    "edges for `{name}` must be at least two strictly increasing values"
                )));
            }
        }
        Ok(Self {
            schema,
            records,
            binning,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Vec<Option<Value>>] {
        &self.records
    }

    pub fn binning(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.binning
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Column values of a numeric attribute, skipping missing cells.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.schema.index_of(name)?;
        Some(
            self.records
                .iter()
                .filter_map(|r| r[i].as_ref().and_then(Value::as_num))
                .collect(),
        )
    }

    /// Symbol tuple per record. Binned numeric cells map to their bin (values
    /// outside the edges clamp to the outer bins); unbinned numeric cells are
    /// kept exactly.
    pub fn symbols(&self) -> Vec<Vec<Symbol>> {
        let edges: Vec<Option<&Vec<f64>>> = self
            .schema
            .names()
            .map(|n| self.binning.get(n))
            .collect();
        self.records
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&edges)
                    .map(|(cell, e)| match (cell, e) {
                        (None, _) => Symbol::Missing,
                        (Some(Value::Cat(s)), _) => Symbol::Cat(s.clone()),
                        (Some(Value::Num(x)), Some(e)) => Symbol::Bin(bin_index(e, *x)),
                        (Some(Value::Num(x)), None) => Symbol::Exact((x + 0.0).to_bits()),
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn parts(self) -> (Schema, Vec<Vec<Option<Value>>>, BTreeMap<String, Vec<f64>>) {
        (self.schema, self.records, self.binning)
    }
}

/// Bin of `x` under strictly increasing `edges`, clamped to `0..edges.len()-1`.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    let pos = edges.partition_point(|e| *e <= x);
    pos.saturating_sub(1).min(bins - 1)
}
