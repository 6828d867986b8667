//! Small dense linear algebra used across the crate.
//!
//! Matrices here are tiny (tens to a few hundred rows), so a row-major
//! `Vec<f64>` is all we need. Exact integer rank lives here as well since
//! both the hypergraph and the fault checks rely on it.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row vectors. Returns `None` when rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Option<Matrix> {
        if self.cols != other.rows {
            return None;
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Some(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// An eigenpair of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Top-`k` eigenpairs of a symmetric matrix ordered by absolute eigenvalue.
///
/// Power iteration runs on `A²`, which is positive semidefinite and shares
/// the eigenvectors of `A`; this avoids the sign oscillation plain power
/// iteration suffers on indefinite matrices. Each found direction is deflated
/// out of `A²` before the next one is sought. The reported `value` is the
/// Rayleigh quotient `vᵀAv`.
pub fn top_eigenpairs_by_magnitude(
    a: &Matrix,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Vec<EigenPair> {
    assert_eq!(a.rows, a.cols, "eigenpairs need a square matrix");
    let n = a.rows;
    let k = k.min(n);
    let mut squared = a.matmul(a).expect("square");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<EigenPair> = Vec::with_capacity(k);

    for _ in 0..k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut v, &found);
        if !normalize(&mut v) {
            v = vec![0.0; n];
            v[found.len() % n] = 1.0;
        }
        for _ in 0..max_iter {
            let mut next = squared.mul_vec(&v);
            orthogonalize(&mut next, &found);
            if !normalize(&mut next) {
                // v lies in the null space of the deflated matrix: any
                // orthogonal direction is a valid eigenvector for 0.
                break;
            }
            let delta: f64 = next
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            v = next;
            if delta < tol {
                break;
            }
        }
        let sq_value = dot(&v, &squared.mul_vec(&v));
        for i in 0..n {
            for j in 0..n {
                squared[(i, j)] -= sq_value * v[i] * v[j];
            }
        }
        let value = dot(&v, &a.mul_vec(&v));
        found.push(EigenPair { value, vector: v });
    }
    found
}

fn orthogonalize(v: &mut [f64], basis: &[EigenPair]) {
    for b in basis {
        let proj = dot(v, &b.vector);
        for (x, y) in v.iter_mut().zip(&b.vector) {
            *x -= proj * y;
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n < 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when `A` is singular to working precision.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return None;
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))?;
        if m[(pivot, col)].abs() <= scale * 1e-14 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                let t = m[(col, c)];
                m[(col, c)] = m[(pivot, c)];
                m[(pivot, c)] = t;
            }
            x.swap(col, pivot);
        }
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[(r, c)] -= f * m[(col, c)];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| m[(r, c)] * x[c]).sum();
        x[r] = (x[r] - tail) / m[(r, r)];
    }
    Some(x)
}

/// Exact rank of an integer matrix via fraction-free (Bareiss) elimination.
pub fn exact_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev_pivot = BigInt::from(1);

    for col in 0..n_cols {
        if rank == n_rows {
            break;
        }
        let Some(pivot_row) = (rank..n_rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot_row);
        let pivot = m[rank][col].clone();
        for r in rank + 1..n_rows {
            let factor = m[r][col].clone();
            for c in col..n_cols {
                let updated = (&pivot * &m[r][c] - &factor * &m[rank][c]) / &prev_pivot;
                m[r][c] = updated;
            }
        }
        prev_pivot = pivot.abs();
        if prev_pivot.is_zero() {
            prev_pivot = BigInt::from(1);
        }
        rank += 1;
    }
    rank
}
