use super::{NetworkGains, WeightPerturbation};
use crate::error::{QepError, Result};
use crate::netmodel::NetworkSpec;

/// `U = Σ_k (Π_{s>k} γ_s‖W_s‖₂)·γ_k·‖R_k‖_F`.
pub fn lipschitz_bound(net: &NetworkSpec, residuals: &[f64]) -> Result<f64> {
    lipschitz_bound_with(&NetworkGains::new(net), residuals)
}

pub fn lipschitz_bound_with(gains: &NetworkGains, residuals: &[f64]) -> Result<f64> {
    if residuals.len() != gains.len() {
        return Err(QepError::dim("lipschitz_bound", format!("{} residuals", gains.len()), residuals.len()));
    }
    let mut total = 0.0;
    let mut tail = 1.0;
    for k in (0..gains.len()).rev() {
        total += tail * gains.gammas()[k] * residuals[k];
        tail *= gains.layer_gain(k);
    }
    Ok(total)
}

/// `((1+r)^n − 1)·G·‖X‖_F` for `n` weight layers.
pub fn uniform_error_bound_value(layers: usize, r: f64, gain: f64, x_norm: f64) -> f64 {
    let n = i32::try_from(layers).expect("layer count fits i32");
    ((1.0 + r).powi(n) - 1.0) * gain * x_norm
}

/// `n·r·G·‖X‖_F` for `n` weight layers.
pub fn first_order_bound_value(layers: usize, r: f64, gain: f64, x_norm: f64) -> f64 {
    layers as f64 * r * gain * x_norm
}

fn checked_gains(net: &NetworkSpec, perturb: &WeightPerturbation) -> Result<NetworkGains> {
    if perturb.matrices().len() != net.depth() {
        return Err(QepError::dim("perturbation bound", net.depth(), perturb.matrices().len()));
    }
    let gains = NetworkGains::new(net);
    gains.check_nondegenerate()?;
    Ok(gains)
}

/// Bound on the final activation mismatch under weight perturbation
/// `perturb`, valid for any Lipschitz activations with `σ(0) = 0`.
pub fn uniform_error_bound(net: &NetworkSpec, perturb: &WeightPerturbation, x_norm: f64) -> Result<f64> {
    let g = checked_gains(net, perturb)?.gain_product();
    Ok(uniform_error_bound_value(net.depth(), perturb.ratio_r(), g, x_norm))
}

/// Bound on the first-order (in `E`) component of the final mismatch.
pub fn first_order_bound(net: &NetworkSpec, perturb: &WeightPerturbation, x_norm: f64) -> Result<f64> {
    let g = checked_gains(net, perturb)?.gain_product();
    Ok(first_order_bound_value(net.depth(), perturb.ratio_r(), g, x_norm))
}

/// Scalar linear chain with `L − 1` weights `1+ε` perturbed by `c_E`,
/// input `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarBound {
    /// `(L−1)·c_E·C·(1+ε)^{L−2}`.
    pub lower_bound: f64,
    /// `C·((1+ε+c_E)^{L−1} − (1+ε)^{L−1})`.
    pub exact_mismatch: f64,
}

/// The exact value is summed from its binomial expansion, whose leading
/// term is the lower bound, so `exact_mismatch ≥ lower_bound` also holds in
/// floating point.
pub fn scalar_lower_bound(epsilon: f64, c_e: f64, big_l: usize, c: f64) -> Result<ScalarBound> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !(positive(epsilon) && positive(c_e) && positive(c)) || big_l < 2 {
        return Err(QepError::InvalidConfig(format!(
            "scalar bound needs epsilon, c_e, c > 0 and L >= 2 (got {epsilon}, {c_e}, {big_l}, {c})"
        )));
    }
    let n = big_l - 1;
    let b = 1.0 + epsilon;
    let lead = n as f64 * c_e * b.powi(i32::try_from(n - 1).expect("depth fits i32"));
    let mut rest = 0.0;
    let mut term = lead;
    for k in 2..=n {
        term *= (n - k + 1) as f64 / k as f64 * (c_e / b);
        rest += term;
    }
    Ok(ScalarBound {
        lower_bound: lead * c,
        exact_mismatch: (lead + rest) * c,
    })
}
