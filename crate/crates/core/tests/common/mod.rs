#![allow(dead_code)]

use qep_core::netmodel::{Activation, Layer, NetworkSpec};
use qep_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random chain of square-ish layers with the given activation.
pub fn random_net(rng: &mut ChaCha8Rng, dims: &[usize], act: Activation, scale: f64) -> NetworkSpec {
    let layers = dims
        .windows(2)
        .map(|w| {
            let s = scale / (w[0] as f64).sqrt();
            Layer::new(gaussian(rng, w[1], w[0]).scale(s), act)
        })
        .collect();
    NetworkSpec::new(dims[0], layers).unwrap()
}

/// Network with every weight shifted by the matching perturbation.
pub fn perturbed(net: &NetworkSpec, e: &[Matrix]) -> NetworkSpec {
    let layers = net
        .layers()
        .iter()
        .zip(e)
        .map(|(l, e)| Layer::new(l.weights.add(e).unwrap(), l.activation))
        .collect();
    NetworkSpec::new(net.input_dim(), layers).unwrap()
}

/// First-order mismatch for identity activations:
/// `δ¹_{l+1} = −E_l·X_l + W_l·δ¹_l`, `δ¹_1 = 0`.
pub fn first_order_recursion(net: &NetworkSpec, e: &[Matrix], x: &Matrix) -> f64 {
    let xs = net.forward(x).unwrap();
    let mut d = Matrix::zeros(x.rows(), x.cols());
    for (l, layer) in net.layers().iter().enumerate() {
        let drive = e[l].matmul(&xs[l]).unwrap();
        d = layer.weights.matmul(&d).unwrap().sub(&drive).unwrap();
    }
    d.frobenius_norm()
}
