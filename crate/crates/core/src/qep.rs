//! Quantization error propagation.
//!
//! Layer `l` sees full-precision inputs `X` and quantized inputs `X̂`
//! produced by the already-quantized prefix. The continuous minimizer of
//! `‖W·X − Ŵ·X̂‖_F²` is `W + W·δ·X̂ᵀ·Ĥ⁻¹` with `δ = X − X̂` and
//! `Ĥ = X̂·X̂ᵀ`. Scaling the correction term by `α ∈ [0, 1]` interpolates
//! between independent layer-wise quantization (`α = 0`) and full
//! compensation (`α = 1`), and behaves like a ridge penalty
//! `λ·‖W − Ŵ‖_F²` whose strength decreases as `α` grows.

use crate::error::{QepError, Result};
use crate::numerics::{
    damped_hessian, solve_right, symmetric_eigen, DampingMode, HessianMatrix, Matrix, ProjectionMatrix,
};

/// Default propagation strength applied to every layer.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Accumulated activation error `δ = X − X̂` entering a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    delta: Matrix,
}

impl ErrorMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.delta
    }

    pub fn is_zero(&self) -> bool {
        self.delta.is_zero()
    }
}

/// Per-layer propagation strengths, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSchedule {
    alphas: Vec<f64>,
}

impl PropagationSchedule {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(QepError::InvalidConfig(format!("propagation strength {a} outside [0, 1]")));
        }
        Ok(Self { alphas })
    }

    pub fn uniform(layers: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; layers])
    }

    pub fn default_for(layers: usize) -> Self {
        Self::uniform(layers, DEFAULT_ALPHA).expect("default alpha is in range")
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Strength for the 0-based layer index.
    pub fn alpha(&self, layer: usize) -> f64 {
        self.alphas[layer]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeParam(f64);

impl RidgeParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || lambda.is_infinite() {
            return Err(QepError::InvalidConfig(format!("ridge parameter must be finite and >= 0, got {lambda}")));
        }
        Ok(Self(lambda))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Eigenvalues of an effective Hessian, descending and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    eigenvalues: Vec<f64>,
}

impl SpectrumResult {
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(QepError::singular("spectrum must be non-empty and strictly positive"));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

pub fn compute_delta(x: &Matrix, x_hat: &Matrix) -> Result<ErrorMatrix> {
    if x.shape() != x_hat.shape() {
        return Err(QepError::dim(
            "compute_delta",
            format!("{}x{}", x.rows(), x.cols()),
            format!("{}x{}", x_hat.rows(), x_hat.cols()),
        ));
    }
    Ok(ErrorMatrix { delta: x.sub(x_hat)? })
}

fn check_shapes(w: &Matrix, delta: &ErrorMatrix, x_hat: &Matrix) -> Result<()> {
    let d = delta.matrix();
    if w.cols() != d.rows() || d.shape() != x_hat.shape() {
        return Err(QepError::dim(
            "correct_weights",
            format!("W cols = δ rows = X̂ rows = {}, δ and X̂ same shape", w.cols()),
            format!(
                "W {}x{}, δ {}x{}, X̂ {}x{}",
                w.rows(),
                w.cols(),
                d.rows(),
                d.cols(),
                x_hat.rows(),
                x_hat.cols()
            ),
        ));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(QepError::InvalidConfig(format!("propagation strength {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// `W·δ·X̂ᵀ·H⁻¹` for an already assembled Hessian.
fn correction_term(w: &Matrix, delta: &ErrorMatrix, x_hat: &Matrix, h: &HessianMatrix) -> Result<Matrix> {
    let w_delta = w.matmul(delta.matrix())?;
    let cross = w_delta.matmul_transposed(x_hat)?;
    solve_right(h, &cross)
}

/// `W*(α) = W + α·W·δ·X̂ᵀ·Ĥ⁻¹`, with `Ĥ` built from `x_hat` and damped per
/// `mode`. Returns `W` unchanged when `α = 0` or `δ = 0`.
pub fn correct_weights(w: &Matrix, delta: &ErrorMatrix, x_hat: &Matrix, alpha: f64, mode: DampingMode) -> Result<Matrix> {
    check_shapes(w, delta, x_hat)?;
    check_alpha(alpha)?;
    if alpha == 0.0 || delta.is_zero() {
        return Ok(w.clone());
    }
    let h = damped_hessian(x_hat, mode)?;
    correct_weights_with(w, delta, x_hat, alpha, &h)
}

/// [`correct_weights`] reusing a Hessian that was already built for the
/// layer (the same one handed to the quantizer).
pub fn correct_weights_with(
    w: &Matrix,
    delta: &ErrorMatrix,
    x_hat: &Matrix,
    alpha: f64,
    h: &HessianMatrix,
) -> Result<Matrix> {
    check_shapes(w, delta, x_hat)?;
    check_alpha(alpha)?;
    if h.dim() != x_hat.rows() {
        return Err(QepError::dim("correct_weights", format!("Hessian dim = {}", x_hat.rows()), h.dim()));
    }
    if alpha == 0.0 || delta.is_zero() {
        return Ok(w.clone());
    }
    let term = correction_term(w, delta, x_hat, h)?;
    w.add_scaled(&term, alpha)
}

/// Minimizer of `‖W·X − Ŵ·X̂‖_F² + λ·‖W − Ŵ‖_F²`:
/// `W·(I + δ·X̂ᵀ·(Ĥ + λI)⁻¹)`.
pub fn ridge_correct(w: &Matrix, delta: &ErrorMatrix, x_hat: &Matrix, lam: RidgeParam) -> Result<Matrix> {
    check_shapes(w, delta, x_hat)?;
    let mode = if lam.value() == 0.0 {
        DampingMode::None
    } else {
        DampingMode::Fixed(lam.value())
    };
    let h = damped_hessian(x_hat, mode)?;
    if delta.is_zero() {
        // still validate invertibility so λ = 0 with singular Ĥ is reported
        h.cholesky()?;
        return Ok(w.clone());
    }
    let term = correction_term(w, delta, x_hat, &h)?;
    w.add(&term)
}

/// `α(λ) = (1/d)·Σ γ_i/(γ_i + λ)`: equals 1 at `λ = 0` and decreases
/// strictly towards 0.
pub fn alpha_of_lambda(spectrum: &SpectrumResult, lam: RidgeParam) -> f64 {
    let gammas = spectrum.eigenvalues();
    let lambda = lam.value();
    gammas.iter().map(|g| g / (g + lambda)).sum::<f64>() / gammas.len() as f64
}

/// Eigenvalues of the effective (damped) Hessian by cyclic Jacobi.
pub fn hessian_spectrum(h: &HessianMatrix) -> Result<SpectrumResult> {
    let eig = symmetric_eigen(&h.effective())?;
    SpectrumResult::new(eig.values)
}

/// Propagation term `‖W·δ·(I − α·P)‖_F` of the pre-activation residual.
pub fn propagation_term(w: &Matrix, delta: &ErrorMatrix, p: &ProjectionMatrix, alpha: f64) -> Result<f64> {
    let z = w.matmul(delta.matrix())?;
    Ok(p.apply_complement(&z, alpha)?.frobenius_norm())
}
