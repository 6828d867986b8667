use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{compose, DiscreteDataset, TransformError, Transformation};

/// Information lost by a transformation on a dataset, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// `H(d) = I(d; d)`.
    pub entropy_before: f64,
    /// `I(t(d); d)`.
    pub mi_after: f64,
    /// `max(0, entropy_before − mi_after)`.
    pub loss: f64,
    /// Set when the raw difference was negative and had to be clamped.
    pub clamped: bool,
}

/// Plug-in entropy (bits) of a distribution given as counts.
///
/// Counts are sorted first so the result does not depend on the order the
/// caller collected them in.
pub fn entropy_bits(counts: impl IntoIterator<Item = usize>) -> f64 {
    let mut counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let weighted: f64 = counts
        .iter()
        .map(|&c| {
            let c = c as f64;
            c * c.log2()
        })
        .sum();
    n.log2() - weighted / n
}

fn histogram<K: Hash + Eq>(items: impl IntoIterator<Item = K>) -> Vec<usize> {
    let mut h: HashMap<K, usize> = HashMap::new();
    for k in items {
        *h.entry(k).or_insert(0) += 1;
    }
    h.into_values().collect()
}

/// Estimates `loss(t, d) = I(d; d) − I(t(d); d)` on the joint empirical
/// distribution of each record and the record it maps to.
pub fn estimate_loss(t: &Transformation, d: &DiscreteDataset) -> Result<LossReport, TransformError> {
    if d.is_empty() {
        return Err(TransformError::EmptyDataset);
    }
    let (out, lineage) = t.apply_traced(d)?;
    let xs = d.symbols();
    let ys = out.symbols();
    let h_x = entropy_bits(histogram(xs.iter()));
    let h_y = entropy_bits(histogram(lineage.iter().map(|&r| &ys[r])));
    let h_xy = entropy_bits(histogram(xs.iter().zip(lineage.iter().map(|&r| &ys[r]))));
    let mi = h_x + h_y - h_xy;
    let raw = h_x - mi;
    Ok(LossReport {
        entropy_before: h_x,
        mi_after: mi,
        loss: raw.max(0.0),
        clamped: raw < 0.0,
    })
}

/// Tolerance for comparing sums of entropies.
const SUBADDITIVITY_TOL: f64 = 1e-12;

/// Checks `loss(t2∘t1, d) ≤ loss(t1, d) + loss(t2, t1(d))`.
pub fn check_subadditivity(
    t1: &Transformation,
    t2: &Transformation,
    d: &DiscreteDataset,
) -> Result<bool, TransformError> {
    let composed = compose(t1, t2)?;
    let whole = estimate_loss(&composed, d)?.loss;
    let first = estimate_loss(t1, d)?.loss;
    let second = estimate_loss(t2, &t1.apply(d)?)?.loss;
    Ok(whole <= first + second + SUBADDITIVITY_TOL)
}
