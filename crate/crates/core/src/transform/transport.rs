//! Entropic optimal transport for integration loss.

use super::TransformError;
use crate::linalg::Matrix;

const MASS_TOL: f64 = 1e-9;

fn check_distribution(name: &'static str, p: &[f64]) -> Result<(), TransformError> {
    if p.iter().any(|x| !(*x >= 0.0)) {
        return Err(TransformError::NegativeMass(name));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(TransformError::NotNormalized(name, total));
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Squared Euclidean ground costs between two point sets.
pub fn squared_distance_cost(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Matrix {
    let mut c = Matrix::zeros(xs.len(), ys.len());
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            c[(i, j)] = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    c
}

/// Entropic transport plan after `iters` alternating Sinkhorn scalings.
///
/// Scalings run on dual potentials in the log domain so small
/// regularization does not underflow. Zero-mass points get zero rows or
/// columns.
pub fn sinkhorn_plan(
    p: &[f64],
    q: &[f64],
    cost: &Matrix,
    reg: f64,
    iters: usize,
) -> Result<Matrix, TransformError> {
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    if !(reg > 0.0) {
        return Err(TransformError::BadRegularization(reg));
    }
    if cost.shape() != (p.len(), q.len()) {
        return Err(TransformError::CostShape(
            cost.rows(),
            cost.cols(),
            p.len(),
            q.len(),
        ));
    }
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    let mut f = vec![0.0; p.len()];
    let mut g = vec![0.0; q.len()];
    for _ in 0..iters {
        for &i in &rows {
            let lse = log_sum_exp(cols.iter().map(|&j| (g[j] - cost[(i, j)]) / reg));
            f[i] = reg * (p[i].ln() - lse);
        }
        for &j in &cols {
            let lse = log_sum_exp(rows.iter().map(|&i| (f[i] - cost[(i, j)]) / reg));
            g[j] = reg * (q[j].ln() - lse);
        }
    }
    let mut plan = Matrix::zeros(p.len(), q.len());
    for &i in &rows {
        for &j in &cols {
            plan[(i, j)] = ((f[i] + g[j] - cost[(i, j)]) / reg).exp();
        }
    }
    Ok(plan)
}

/// `√⟨Π, C⟩` for the Sinkhorn plan `Π`: an entropic estimate of the
/// 2-Wasserstein distance when `C` holds squared ground distances.
pub fn sinkhorn_w2(
    p: &[f64],
    q: &[f64],
    cost: &Matrix,
    reg: f64,
    iters: usize,
) -> Result<f64, TransformError> {
    let plan = sinkhorn_plan(p, q, cost, reg, iters)?;
    let mut total = 0.0;
    for i in 0..p.len() {
        for j in 0..q.len() {
            total += plan[(i, j)] * cost[(i, j)];
        }
    }
    Ok(total.max(0.0).sqrt())
}
