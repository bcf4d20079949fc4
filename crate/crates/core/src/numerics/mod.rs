//! Dense real-matrix primitives shared by every other module.

mod eigen;
mod factor;
mod matrix;

pub use eigen::{singular_values, symmetric_eigen, SymmetricEigen};
pub use factor::{gauss_jordan_inverse, Cholesky};
pub use matrix::Matrix;

use crate::error::{QepError, Result};
use crate::par;

/// Default tolerance and iteration cap for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Diagonal shift applied to an empirical Hessian before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DampingMode {
    None,
    /// Shift by the mean of the Hessian's diagonal.
    #[default]
    MeanDiagonal,
    Fixed(f64),
}

impl DampingMode {
    pub fn validate(self) -> Result<Self> {
        match self {
            DampingMode::Fixed(v) if !(v.is_finite() && v >= 0.0) => Err(QepError::InvalidConfig(format!(
                "fixed damping must be finite and non-negative, got {v}"
            ))),
            other => Ok(other),
        }
    }
}

/// Symmetric PSD base matrix plus a non-negative diagonal shift.
#[derive(Debug, Clone)]
pub struct HessianMatrix {
    base: Matrix,
    damping: f64,
    mode: DampingMode,
}

impl HessianMatrix {
    /// Wraps an explicit symmetric base matrix, deriving the damping from
    /// `mode`.
    pub fn new(base: Matrix, mode: DampingMode) -> Result<Self> {
        let mode = mode.validate()?;
        if !base.is_square() {
            return Err(QepError::dim("HessianMatrix", "square base", format!("{}x{}", base.rows(), base.cols())));
        }
        let scale = base.max_abs();
        if base.asymmetry() > 1e-12 * scale {
            return Err(QepError::InvalidConfig("Hessian base must be symmetric".into()));
        }
        let damping = match mode {
            DampingMode::None => 0.0,
            DampingMode::Fixed(v) => v,
            DampingMode::MeanDiagonal => {
                let mean = base.trace() / base.rows() as f64;
                if !(mean > 0.0) {
                    return Err(QepError::singular(
                        "mean-diagonal damping is zero (all-zero activations)",
                    ));
                }
                mean
            }
        };
        Ok(Self { base, damping, mode })
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn mode(&self) -> DampingMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.base.rows()
    }

    /// `base + damping·I`.
    pub fn effective(&self) -> Matrix {
        if self.damping == 0.0 {
            self.base.clone()
        } else {
            self.base.add_diagonal(self.damping)
        }
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.effective())
    }
}

/// `P = X̂ᵀ·(X̂X̂ᵀ + ρI)⁻¹·X̂`. An orthogonal projection when `ρ = 0`;
/// with damping it is symmetric PSD with eigenvalues in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    p: Matrix,
    damped: bool,
}

impl ProjectionMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn is_damped(&self) -> bool {
        self.damped
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    /// `‖P − Pᵀ‖_F / ‖P‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        let norm = self.p.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        self.p.sub(&self.p.transpose()).unwrap().frobenius_norm() / norm
    }

    /// `‖P² − P‖_F / ‖P‖_F`.
    pub fn idempotence_defect(&self) -> f64 {
        let norm = self.p.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let sq = self.p.matmul(&self.p).unwrap();
        sq.sub(&self.p).unwrap().frobenius_norm() / norm
    }

    /// `Z·(I − α·P)`.
    pub fn apply_complement(&self, z: &Matrix, alpha: f64) -> Result<Matrix> {
        let zp = z.matmul(&self.p)?;
        z.add_scaled(&zp, -alpha)
    }
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.frobenius_norm()
}

/// Outcome of the power iteration in [`spectral_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    /// `false` when `max_iter` was exhausted; `value` is then the last iterate.
    pub converged: bool,
}

/// Largest singular value by power iteration on `MᵀM` from the all-ones
/// start vector.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> SpectralNorm {
    let max_iter = max_iter.max(1);
    let n = m.cols();
    if m.is_zero() {
        return SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let apply = |v: &[f64]| -> Vec<f64> { (0..m.rows()).map(|i| matrix::dot(m.row(i), v)).collect() };
    let apply_t = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &ui) in u.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(m.row(i)) {
                *o += ui * a;
            }
        }
        out
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut mv = apply(&v);
    if norm(&mv) == 0.0 {
        // all-ones lies in the null space; restart on the heaviest column
        let heaviest = (0..n)
            .max_by(|&a, &b| {
                let ca: f64 = m.column(a).iter().map(|x| x * x).sum();
                let cb: f64 = m.column(b).iter().map(|x| x * x).sum();
                ca.total_cmp(&cb)
            })
            .unwrap();
        v = vec![0.0; n];
        v[heaviest] = 1.0;
        mv = apply(&v);
    }
    let mut sigma = norm(&mv);
    for it in 1..=max_iter {
        let w = apply_t(&mv);
        let wn = norm(&w);
        if wn == 0.0 {
            return SpectralNorm {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
        v = w.into_iter().map(|x| x / wn).collect();
        mv = apply(&v);
        let next = norm(&mv);
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done {
            return SpectralNorm {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
    }
    SpectralNorm {
        value: sigma,
        iterations: max_iter,
        converged: false,
    }
}

/// [`spectral_norm`] with the default tolerance and iteration cap.
pub fn spectral_norm_default(m: &Matrix) -> f64 {
    spectral_norm(m, SPECTRAL_TOL, SPECTRAL_MAX_ITER).value
}

/// `Ĥ = X̂·X̂ᵀ` with the requested damping.
pub fn damped_hessian(x_hat: &Matrix, mode: DampingMode) -> Result<HessianMatrix> {
    HessianMatrix::new(x_hat.gram(), mode)
}

/// `B·H_eff⁻¹` through a Cholesky factorization of the effective Hessian.
pub fn solve_right(h: &HessianMatrix, b: &Matrix) -> Result<Matrix> {
    if b.cols() != h.dim() {
        return Err(QepError::dim("solve_right", format!("rhs cols = {}", h.dim()), b.cols()));
    }
    let chol = h.cholesky()?;
    let mut out = b.as_slice().to_vec();
    // X·H = B  <=>  H·Xᵀ = Bᵀ, one independent solve per row of B
    par::for_each_row_mut(&mut out, b.cols(), |_, row| chol.solve_in_place(row));
    Ok(Matrix::from_raw(b.rows(), b.cols(), out))
}

/// Orthogonal (or, when damped, shrunk) projection onto the row space of
/// `x_hat`, formed as `BᵀB` with `B = L⁻¹X̂` so it is exactly symmetric.
pub fn projection(x_hat: &Matrix, mode: DampingMode) -> Result<ProjectionMatrix> {
    let h = damped_hessian(x_hat, mode)?;
    let chol = h.cholesky()?;
    let (d, m) = x_hat.shape();
    let mut cols: Vec<Vec<f64>> = par::map_indices(m, |j| {
        let mut c = x_hat.column(j);
        chol.forward_substitute(&mut c);
        c
    });
    // B stored row-major (d x m) for the Gram product
    let mut b = vec![0.0; d * m];
    for (j, c) in cols.iter_mut().enumerate() {
        for i in 0..d {
            b[i * m + j] = c[i];
        }
    }
    let b = Matrix::from_raw(d, m, b);
    let p = b.transpose().gram();
    Ok(ProjectionMatrix {
        p,
        damped: h.damping() > 0.0,
    })
}

/// `argmin_W ‖B − W·A‖_F` through the normal equations, solved with
/// Gauss-Jordan elimination.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(QepError::dim("lstsq", format!("b cols = {}", a.cols()), b.cols()));
    }
    let gram = a.gram();
    let inv = gauss_jordan_inverse(&gram)?;
    let rhs = b.matmul_transposed(a)?;
    rhs.matmul(&inv)
}
