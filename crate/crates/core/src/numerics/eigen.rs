//! Jacobi-rotation eigen- and singular-value routines.

use super::matrix::Matrix;
use crate::error::{QepError, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `A = V·diag(values)·Vᵀ` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, sorted in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let scaled = Matrix::from_fn(n, n, |i, j| self.vectors.get(i, j) * self.values[j]);
        scaled.matmul_transposed(&self.vectors).expect("square factors")
    }
}

fn rotation(theta: f64) -> (f64, f64) {
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    (c, t * c)
}

/// Cyclic Jacobi eigen-decomposition. The input must be symmetric to within
/// `1e-10` relative to its largest entry.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(QepError::dim("symmetric_eigen", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let scale = a.max_abs();
    if a.asymmetry() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(QepError::InvalidConfig("symmetric_eigen requires a symmetric matrix".into()));
    }
    let n = a.rows();
    let mut m: Vec<f64> = a.as_slice().to_vec();
    let mut v = Matrix::identity(n).into_vec();
    let total = a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let (c, s) = rotation(theta);
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y * n + y].total_cmp(&m[x * n + x]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    Ok(SymmetricEigen { values, vectors })
}

/// Singular values (descending) by one-sided Jacobi orthogonalization.
///
/// Returns `min(rows, cols)` values.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let work = if a.cols() > a.rows() { a.transpose() } else { a.clone() };
    let (m, n) = work.shape();
    // column-major copy so that column rotations touch contiguous memory
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| work.column(j)).collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = (0..m).fold((0.0, 0.0, 0.0), |(a, b, g), k| {
                    let (x, y) = (cols[p][k], cols[q][k]);
                    (a + x * x, b + y * y, g + x * y)
                });
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let (c, s) = rotation(zeta);
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for k in 0..m {
                    let x = cp[k];
                    let y = cq[k];
                    cp[k] = c * x - s * y;
                    cq[k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}
