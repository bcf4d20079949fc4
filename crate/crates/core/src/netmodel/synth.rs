//! Seeded synthetic networks and calibration data.
//!
//! Weights and calibration inputs come from separate ChaCha8 streams of the
//! same seed, so changing the calibration size never changes the weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Activation, CalibrationSet, Layer, NetworkSpec};
use crate::error::{QepError, Result};
use crate::numerics::{spectral_norm_default, Matrix};

pub const DEFAULT_SPECTRAL_NORM: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightInit {
    /// i.i.d. standard normal entries rescaled to the target spectral norm.
    #[default]
    Gaussian,
    /// Random semi-orthogonal matrix times the target; every singular
    /// value equals the target.
    Orthogonal,
}

impl WeightInit {
    pub fn name(&self) -> &'static str {
        match self {
            WeightInit::Gaussian => "gaussian",
            WeightInit::Orthogonal => "orthogonal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(WeightInit::Gaussian),
            "orthogonal" => Ok(WeightInit::Orthogonal),
            other => Err(QepError::InvalidConfig(format!("unknown weight init '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// `[d_1, d_2, …, d_{L+1}]`; layer `l` maps `d_l → d_{l+1}`.
    pub dims: Vec<usize>,
    pub samples: usize,
    pub spectral_norm: f64,
    pub activation: Activation,
    pub init: WeightInit,
    pub seed: u64,
    /// When set, weights are drawn as integer codes on a power-of-two
    /// per-row asymmetric grid with this many bits, and the target norm is
    /// met only up to a power of two. Round-to-nearest at the same width
    /// then reproduces the weights exactly.
    pub grid_bits: Option<u8>,
}

impl GeneratorConfig {
    /// Square hidden layers of `width` after an `input_dim`-wide input.
    pub fn uniform(depth: usize, input_dim: usize, width: usize, samples: usize, seed: u64) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(width, depth));
        Self {
            dims,
            samples,
            spectral_norm: DEFAULT_SPECTRAL_NORM,
            activation: Activation::Identity,
            init: WeightInit::Gaussian,
            seed,
            grid_bits: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.dims.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(QepError::InvalidConfig("generator needs at least one layer".into()));
        }
        if self.dims.contains(&0) || self.samples == 0 {
            return Err(QepError::InvalidConfig("widths and sample count must be positive".into()));
        }
        if !(self.spectral_norm.is_finite() && self.spectral_norm > 0.0) {
            return Err(QepError::InvalidConfig(format!(
                "target spectral norm must be positive, got {}",
                self.spectral_norm
            )));
        }
        self.activation.validate()?;
        if let Some(b) = self.grid_bits {
            if !(2..=8).contains(&b) {
                return Err(QepError::InvalidConfig(format!("grid bits must be in 2..=8, got {b}")));
            }
            if self.dims[..self.depth()].iter().any(|&c| c < 2) {
                return Err(QepError::InvalidConfig("grid-aligned weights need at least 2 columns".into()));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Orthonormalizes the rows of a wide (or square) matrix with two passes of
/// modified Gram-Schmidt.
fn orthonormal_rows(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for i in 0..rows.len() {
        for _ in 0..2 {
            for k in 0..i {
                let c = dot(&rows[i], &rows[k]);
                let (done, rest) = rows.split_at_mut(i);
                for (v, q) in rest[0].iter_mut().zip(&done[k]) {
                    *v -= c * q;
                }
            }
        }
        let n = dot(&rows[i], &rows[i]).sqrt();
        rows[i].iter_mut().for_each(|v| *v /= n);
    }
    rows
}

fn semi_orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let g = gaussian(rng, rows.min(cols), rows.max(cols));
    let q = orthonormal_rows((0..g.rows()).map(|i| g.row(i).to_vec()).collect());
    let q = Matrix::from_rows(&q).expect("finite");
    if rows <= cols {
        q
    } else {
        q.transpose()
    }
}

fn grid_aligned(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bits: u8, target: f64) -> Matrix {
    let top = (1u32 << bits) - 1;
    let zp = (1u32 << (bits - 1)) as f64;
    let mut codes = Matrix::from_fn(rows, cols, |_, _| rng.random_range(0..=top) as f64 - zp);
    for i in 0..rows {
        // both grid ends present so the fitted grid is exactly this one
        let lo = rng.random_range(0..cols);
        let hi = (lo + rng.random_range(1..cols)) % cols;
        codes.set(i, lo, -zp);
        codes.set(i, hi, top as f64 - zp);
    }
    let sigma = spectral_norm_default(&codes);
    let scale = 2f64.powi((target / sigma).log2().round() as i32);
    codes.scale(scale)
}

pub fn generate_network(cfg: &GeneratorConfig) -> Result<NetworkSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = cfg
        .dims
        .windows(2)
        .map(|w| {
            let (cols, rows) = (w[0], w[1]);
            let weights = match (cfg.grid_bits, cfg.init) {
                (Some(bits), _) => grid_aligned(&mut rng, rows, cols, bits, cfg.spectral_norm),
                (None, WeightInit::Orthogonal) => semi_orthogonal(&mut rng, rows, cols).scale(cfg.spectral_norm),
                (None, WeightInit::Gaussian) => {
                    let g = gaussian(&mut rng, rows, cols);
                    let s = spectral_norm_default(&g);
                    g.scale(cfg.spectral_norm / s)
                }
            };
            Layer::new(weights, cfg.activation)
        })
        .collect();
    NetworkSpec::new(cfg.dims[0], layers)
}

/// Standard normal `d_1 × m` inputs.
pub fn generate_calibration(cfg: &GeneratorConfig) -> Result<CalibrationSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    Ok(CalibrationSet::new(gaussian(&mut rng, cfg.dims[0], cfg.samples)))
}

pub fn generate(cfg: &GeneratorConfig) -> Result<(NetworkSpec, CalibrationSet)> {
    Ok((generate_network(cfg)?, generate_calibration(cfg)?))
}

/// Random per-layer perturbations with `‖E_l‖₂ = r·‖W_l‖₂` exactly (up to
/// rounding), drawn from a third stream of `seed`.
pub fn random_perturbation(net: &NetworkSpec, r: f64, seed: u64) -> Result<Vec<Matrix>> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(QepError::InvalidConfig(format!("perturbation ratio must be >= 0, got {r}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    Ok(net
        .weights()
        .map(|w| {
            let g = gaussian(&mut rng, w.rows(), w.cols());
            g.scale(r * spectral_norm_default(w) / spectral_norm_default(&g))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::singular_values;
    use crate::quantizers::{rtn_quantize, QuantConfig};

    #[test]
    fn deterministic_per_seed() {
        let cfg = GeneratorConfig::uniform(3, 4, 6, 10, 42);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate_network(&cfg).unwrap(), generate_network(&other).unwrap());
        // calibration stream independent of the weights stream
        let more = GeneratorConfig { samples: 20, ..cfg.clone() };
        assert_eq!(generate_network(&cfg).unwrap(), generate_network(&more).unwrap());
    }

    #[test]
    fn gaussian_hits_target_norm() {
        let cfg = GeneratorConfig::uniform(6, 8, 8, 4, 0);
        let net = generate_network(&cfg).unwrap();
        for w in net.weights() {
            let s = singular_values(w)[0];
            assert!((s - 1.1).abs() <= 0.011, "{s}");
        }
    }

    #[test]
    fn orthogonal_has_flat_spectrum() {
        let mut cfg = GeneratorConfig::uniform(2, 5, 7, 4, 3);
        cfg.init = WeightInit::Orthogonal;
        cfg.spectral_norm = 1.15;
        let net = generate_network(&cfg).unwrap();
        for w in net.weights() {
            for s in singular_values(w) {
                assert!((s - 1.15).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_aligned_is_rtn_fixed_point() {
        for bits in [2u8, 3, 4] {
            let mut cfg = GeneratorConfig::uniform(3, 6, 8, 4, bits as u64);
            cfg.grid_bits = Some(bits);
            let net = generate_network(&cfg).unwrap();
            for w in net.weights() {
                let q = rtn_quantize(w, &QuantConfig::rtn(bits).unwrap()).unwrap();
                assert_eq!(q.dequantized(), w);
            }
        }
    }

    #[test]
    fn perturbation_has_requested_ratio() {
        let net = generate_network(&GeneratorConfig::uniform(3, 5, 6, 4, 8)).unwrap();
        let e = random_perturbation(&net, 0.2, 8).unwrap();
        for (w, e) in net.weights().zip(&e) {
            let ratio = singular_values(e)[0] / singular_values(w)[0];
            assert!((ratio - 0.2).abs() < 1e-6);
        }
        assert!(random_perturbation(&net, -1.0, 0).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = GeneratorConfig::uniform(2, 4, 4, 4, 0);
        cfg.dims = vec![4];
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::uniform(2, 4, 4, 4, 0);
        cfg.spectral_norm = 0.0;
        assert!(generate(&cfg).is_err());
        let mut cfg = GeneratorConfig::uniform(2, 1, 4, 4, 0);
        cfg.grid_bits = Some(3);
        assert!(cfg.validate().is_err());
    }
}
