//! Cholesky and Gauss-Jordan factorizations.

use super::matrix::Matrix;
use crate::error::{QepError, Result};

/// Lower-triangular Cholesky factor `A = L·Lᵀ` of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // row-major lower triangle, full n*n storage
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `a`. A pivot at or below `n·ε·max(diag)` is reported as
    /// [`QepError::SingularHessian`].
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(QepError::dim("cholesky", "square matrix", format!("{}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        let max_diag = a.diagonal().into_iter().fold(0.0f64, f64::max);
        if max_diag <= 0.0 {
            return Err(QepError::singular("matrix has no positive diagonal entry"));
        }
        let floor = n as f64 * f64::EPSILON * max_diag;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return Err(QepError::singular(format!(
                    "non-positive pivot {d:.3e} at index {j} (threshold {floor:.3e})"
                )));
            }
            let ljj = d.sqrt();
            l[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> Matrix {
        Matrix::from_raw(self.n, self.n, self.l.clone())
    }

    /// `U = Lᵀ`, so that `A = Uᵀ·U`.
    pub fn upper(&self) -> Matrix {
        self.lower().transpose()
    }

    /// Solves `L·y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ·x = y` in place.
    pub fn backward_substitute(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        self.forward_substitute(b);
        self.backward_substitute(b);
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // A⁻¹ is symmetric; average the two triangles to remove round-off skew.
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = v;
                inv[j * n + i] = v;
            }
        }
        Matrix::from_raw(n, n, inv)
    }
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Kept separate from the Cholesky path so tests can use it as an
/// independent oracle.
pub fn gauss_jordan_inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(QepError::dim("gauss_jordan_inverse", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(QepError::singular("zero matrix"));
    }
    let tol = n as f64 * f64::EPSILON * scale;
    let w = 2 * n;
    let mut aug = vec![0.0; n * w];
    for i in 0..n {
        for j in 0..n {
            aug[i * w + j] = a.get(i, j);
        }
        aug[i * w + n + i] = 1.0;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| aug[x * w + col].abs().total_cmp(&aug[y * w + col].abs()))
            .unwrap();
        if aug[pivot_row * w + col].abs() <= tol {
            return Err(QepError::singular(format!("pivot below {tol:.3e} in column {col}")));
        }
        if pivot_row != col {
            for j in 0..w {
                aug.swap(col * w + j, pivot_row * w + j);
            }
        }
        let p = aug[col * w + col];
        for j in 0..w {
            aug[col * w + j] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[r * w + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                aug[r * w + j] -= f * aug[col * w + j];
            }
        }
    }
    let inv = (0..n)
        .flat_map(|i| aug[i * w + n..(i + 1) * w].to_vec())
        .collect();
    Ok(Matrix::from_raw(n, n, inv))
}
