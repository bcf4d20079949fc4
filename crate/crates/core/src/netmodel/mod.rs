//! Synthetic multi-layer networks, dual forward passes and the sequential
//! layer-by-layer quantization pipeline.

mod activation;
pub mod io;
mod pipeline;
pub mod synth;

pub use activation::Activation;
pub use pipeline::{
    partial_quantize, quantize_network, HessianSource, LayerStats, PipelineConfig, PipelineMode, QuantizationOutcome,
};

use crate::error::{QepError, Result};
use crate::numerics::Matrix;

/// One linear map followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, activation: Activation) -> Self {
        Self { weights, activation }
    }

    /// `σ(W·x)`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.activation.apply(&self.weights.matmul(x)?))
    }
}

/// `f(X) = σ_L(W_L·σ_{L−1}(… σ_1(W_1·X)))` with chained dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(QepError::InvalidConfig("network needs at least one layer".into()));
        }
        let mut expected = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.cols() != expected {
                return Err(QepError::dim(
                    "NetworkSpec::new",
                    format!("layer {} input width {expected}", l + 1),
                    layer.weights.cols(),
                ));
            }
            expected = layer.weights.rows();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.rows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &Layer {
        &self.layers[l]
    }

    pub fn weights(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| &l.weights)
    }

    /// Same activations and weight shapes, layer by layer.
    pub fn is_structurally_equal(&self, other: &NetworkSpec) -> bool {
        self.input_dim == other.input_dim
            && self.depth() == other.depth()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.activation == b.activation && a.weights.shape() == b.weights.shape())
    }

    pub(crate) fn check_compatible(&self, other: &NetworkSpec, op: &'static str) -> Result<()> {
        if self.is_structurally_equal(other) {
            Ok(())
        } else {
            Err(QepError::dim(op, "structurally identical networks", "differing shapes or activations"))
        }
    }

    /// Copy of the network with layer `l` (0-based) replaced.
    pub fn with_weights(&self, l: usize, weights: Matrix) -> Result<NetworkSpec> {
        let mut layers = self.layers.clone();
        layers[l].weights = weights;
        NetworkSpec::new(self.input_dim, layers)
    }

    /// `[X_1, …, X_{L+1}]` with `X_1 = x`.
    pub fn forward(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        if x.rows() != self.input_dim {
            return Err(QepError::dim("forward", format!("{} input rows", self.input_dim), x.rows()));
        }
        let mut out = Vec::with_capacity(self.depth() + 1);
        out.push(x.clone());
        for layer in &self.layers {
            let next = layer.apply(out.last().expect("non-empty"))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn output(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.pop().expect("non-empty"))
    }
}

/// Calibration inputs `X ∈ ℝ^{d_1 × m}`, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    x: Matrix,
}

impl CalibrationSet {
    pub fn new(x: Matrix) -> Self {
        Self { x }
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn samples(&self) -> usize {
        self.x.cols()
    }
}

/// Full-precision and quantized activations `X_l`, `X̂_l` for
/// `l = 1 … L+1`. Both start from the shared calibration input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub full: Vec<Matrix>,
    pub quantized: Vec<Matrix>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::spectral_norm_default;

    #[test]
    fn identity_layer_passes_input() {
        let net = NetworkSpec::new(2, vec![Layer::new(Matrix::identity(2), Activation::Identity)]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]).unwrap();
        assert_eq!(net.output(&x).unwrap(), x);
    }

    #[test]
    fn relu_sign_split() {
        let net = NetworkSpec::new(1, vec![Layer::new(Matrix::from_rows(&[[2.0]]).unwrap(), Activation::Relu)]).unwrap();
        let x = Matrix::from_rows(&[[-1.0, 3.0]]).unwrap();
        assert_eq!(net.output(&x).unwrap().as_slice(), &[0.0, 6.0]);
    }

    #[test]
    fn chained_dims_enforced() {
        let layers = vec![
            Layer::new(Matrix::zeros(3, 2), Activation::Identity),
            Layer::new(Matrix::zeros(2, 2), Activation::Identity),
        ];
        assert!(NetworkSpec::new(2, layers).is_err());
        assert!(NetworkSpec::new(2, vec![]).is_err());
        let net = NetworkSpec::new(2, vec![Layer::new(Matrix::zeros(3, 2), Activation::Relu)]).unwrap();
        assert!(net.forward(&Matrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn forward_growth_bound() {
        let acts = [Activation::Relu, Activation::ScaledTanh(1.5), Activation::Identity];
        let layers: Vec<Layer> = acts
            .iter()
            .enumerate()
            .map(|(l, &a)| Layer::new(Matrix::from_fn(4, 4, |i, j| ((i * 4 + j + 7 * l) as f64 * 0.83).sin()), a))
            .collect();
        let net = NetworkSpec::new(4, layers).unwrap();
        let x = Matrix::from_fn(4, 9, |i, j| ((i + 2 * j) as f64 * 0.37).cos());
        let xs = net.forward(&x).unwrap();
        assert_eq!(xs.len(), 4);
        for (l, layer) in net.layers().iter().enumerate() {
            let bound = layer.activation.gamma() * spectral_norm_default(&layer.weights) * xs[l].frobenius_norm();
            assert!(xs[l + 1].frobenius_norm() <= bound * (1.0 + 1e-12));
        }
    }
}
