//! Error-growth measurements and the bounds that control them.
//!
//! Indexing: a network with `n` weight layers has activations
//! `X_1 … X_{n+1}`. `Δ_m` compares the outputs of block `m` (`m = 1 … n`);
//! reports prepend `Δ_0 = 0` for the shared input.

mod bounds;
mod report;

pub use bounds::{
    first_order_bound, first_order_bound_value, lipschitz_bound, lipschitz_bound_with, scalar_lower_bound,
    uniform_error_bound, uniform_error_bound_value, ScalarBound,
};
pub use report::{DiagnosticsReport, SeriesRow};

use crate::error::{QepError, Result};
use crate::netmodel::NetworkSpec;
use crate::numerics::{spectral_norm_default, Matrix};
use crate::par;

/// Per-layer spectral norms and activation Lipschitz constants.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGains {
    norms: Vec<f64>,
    gammas: Vec<f64>,
}

impl NetworkGains {
    pub fn new(net: &NetworkSpec) -> Self {
        let norms = par::map_slice(net.layers(), |l| spectral_norm_default(&l.weights));
        let gammas = net.layers().iter().map(|l| l.activation.gamma()).collect();
        Self { norms, gammas }
    }

    pub fn spectral_norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    /// `γ_l·‖W_l‖₂`.
    pub fn layer_gain(&self, l: usize) -> f64 {
        self.gammas[l] * self.norms[l]
    }

    /// `G = Π_l γ_l·‖W_l‖₂`.
    pub fn gain_product(&self) -> f64 {
        (0..self.len()).map(|l| self.layer_gain(l)).product()
    }

    pub(crate) fn check_nondegenerate(&self) -> Result<()> {
        match self.norms.iter().position(|&s| s == 0.0) {
            Some(l) => Err(QepError::DegenerateLayer { layer: l + 1 }),
            None => Ok(()),
        }
    }
}

/// `E_l = Ŵ_l − W_l` per layer and `r = max_l ‖E_l‖₂/‖W_l‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPerturbation {
    e: Vec<Matrix>,
    ratio_r: f64,
}

impl WeightPerturbation {
    pub fn new(net: &NetworkSpec, e: Vec<Matrix>) -> Result<Self> {
        if e.len() != net.depth() {
            return Err(QepError::dim("WeightPerturbation", format!("{} layers", net.depth()), e.len()));
        }
        for (l, (el, layer)) in e.iter().zip(net.layers()).enumerate() {
            if el.shape() != layer.weights.shape() {
                return Err(QepError::dim(
                    "WeightPerturbation",
                    format!("layer {} shape {:?}", l + 1, layer.weights.shape()),
                    format!("{:?}", el.shape()),
                ));
            }
        }
        let ratios = par::map_indices(e.len(), |l| {
            let w = spectral_norm_default(&net.layer(l).weights);
            (w, spectral_norm_default(&e[l]))
        });
        let mut ratio_r = 0.0f64;
        for (l, (w, el)) in ratios.into_iter().enumerate() {
            if w == 0.0 {
                return Err(QepError::DegenerateLayer { layer: l + 1 });
            }
            ratio_r = ratio_r.max(el / w);
        }
        Ok(Self { e, ratio_r })
    }

    pub fn between(net: &NetworkSpec, net_hat: &NetworkSpec) -> Result<Self> {
        net.check_compatible(net_hat, "WeightPerturbation::between")?;
        let e = net
            .weights()
            .zip(net_hat.weights())
            .map(|(w, w_hat)| w_hat.sub(w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(net, e)
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.e
    }

    pub fn ratio_r(&self) -> f64 {
        self.ratio_r
    }
}

/// `Δ_m = ‖f_m(X) − f̂_m(X)‖_F²` for `m = 1 … n`.
pub fn delta_series(net: &NetworkSpec, net_hat: &NetworkSpec, x: &Matrix) -> Result<Vec<f64>> {
    net.check_compatible(net_hat, "delta_series")?;
    let full = net.forward(x)?;
    let quant = net_hat.forward(x)?;
    full[1..]
        .iter()
        .zip(&quant[1..])
        .map(|(a, b)| Ok(a.sub(b)?.frobenius_norm_sq()))
        .collect()
}

/// `‖W·X − Ŵ·X̂‖_F`.
pub fn layer_residual(w: &Matrix, x: &Matrix, w_hat: &Matrix, x_hat: &Matrix) -> Result<f64> {
    Ok(w.matmul(x)?.sub(&w_hat.matmul(x_hat)?)?.frobenius_norm())
}

/// Residuals `‖W_l·X_l − Ŵ_l·X̂_l‖_F` along the two forward passes of `x`.
pub fn layer_residuals(net: &NetworkSpec, net_hat: &NetworkSpec, x: &Matrix) -> Result<Vec<f64>> {
    net.check_compatible(net_hat, "layer_residuals")?;
    let full = net.forward(x)?;
    let quant = net_hat.forward(x)?;
    net.weights()
        .zip(net_hat.weights())
        .enumerate()
        .map(|(l, (w, w_hat))| layer_residual(w, &full[l], w_hat, &quant[l]))
        .collect()
}
