use std::time::Instant;

use super::{ActivationTrace, CalibrationSet, Layer, NetworkSpec};
use crate::error::{QepError, Result};
use crate::numerics::{damped_hessian, DampingMode, HessianMatrix, Matrix};
use crate::qep::{compute_delta, correct_weights_with, PropagationSchedule};
use crate::quantizers::{quantize, QuantConfig, QuantizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PipelineMode {
    /// Each layer quantized against its own inputs, no propagation.
    #[default]
    Base,
    /// Weights corrected by `W*(α_l)` before quantization.
    Qep,
}

/// Activations used to build a Base-mode quantizer Hessian. QEP always uses
/// the quantized activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianSource {
    #[default]
    Quantized,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub quant: QuantConfig,
    pub damping: DampingMode,
    pub mode: PipelineMode,
    pub hessian_source: HessianSource,
}

impl PipelineConfig {
    pub fn new(quant: QuantConfig, mode: PipelineMode) -> Self {
        Self {
            quant,
            damping: DampingMode::MeanDiagonal,
            mode,
            hessian_source: HessianSource::Quantized,
        }
    }

    pub fn with_damping(mut self, damping: DampingMode) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_hessian_source(mut self, source: HessianSource) -> Self {
        self.hessian_source = source;
        self
    }
}

/// Per-layer record. Objectives are `‖W·X − V·X̂‖_F²` with `V` the original,
/// corrected and quantized weights respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    /// 1-based.
    pub layer: usize,
    pub alpha: f64,
    pub objective_uncorrected: f64,
    pub objective_corrected: f64,
    pub objective_quantized: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct QuantizationOutcome {
    pub network: NetworkSpec,
    pub trace: ActivationTrace,
    pub stats: Vec<LayerStats>,
}

fn objective(target: &Matrix, v: &Matrix, x_hat: &Matrix) -> Result<f64> {
    Ok(target.sub(&v.matmul(x_hat)?)?.frobenius_norm_sq())
}

/// Quantizes every layer in order. Layer `l` sees `X̂_l`, the calibration
/// data forwarded through the already-quantized layers `1 … l−1`.
pub fn quantize_network(
    net: &NetworkSpec,
    calib: &CalibrationSet,
    cfg: &PipelineConfig,
    schedule: &PropagationSchedule,
) -> Result<QuantizationOutcome> {
    let depth = net.depth();
    if cfg.mode == PipelineMode::Qep && schedule.len() != depth {
        return Err(QepError::InvalidConfig(format!(
            "propagation schedule has {} entries for {depth} layers",
            schedule.len()
        )));
    }
    cfg.damping.validate()?;
    let full = net.forward(calib.x())?;
    let mut quantized = Vec::with_capacity(depth + 1);
    quantized.push(calib.x().clone());
    let mut layers = Vec::with_capacity(depth);
    let mut stats = Vec::with_capacity(depth);

    for (l, layer) in net.layers().iter().enumerate() {
        let start = Instant::now();
        let at = |e: QepError| e.at_layer(l + 1);
        let w = &layer.weights;
        let x = &full[l];
        let x_hat = &quantized[l];
        let delta = compute_delta(x, x_hat)?;
        let alpha = match cfg.mode {
            PipelineMode::Base => 0.0,
            PipelineMode::Qep => schedule.alpha(l),
        };

        let needs_correction = alpha > 0.0 && !delta.is_zero();
        let needs_hessian = needs_correction || cfg.quant.kind() == QuantizerKind::Compensated;
        let h: Option<HessianMatrix> = if needs_hessian {
            let source = match (cfg.mode, cfg.hessian_source) {
                (PipelineMode::Base, HessianSource::Full) => x,
                _ => x_hat,
            };
            Some(damped_hessian(source, cfg.damping).map_err(at)?)
        } else {
            None
        };

        let corrected = match (&h, needs_correction) {
            (Some(h), true) => correct_weights_with(w, &delta, x_hat, alpha, h).map_err(at)?,
            _ => w.clone(),
        };
        let q = quantize(&corrected, h.as_ref(), &cfg.quant).map_err(at)?;
        let w_hat = q.into_dequantized();

        let target = w.matmul(x)?;
        let objective_uncorrected = objective(&target, w, x_hat)?;
        let objective_corrected = if needs_correction {
            objective(&target, &corrected, x_hat)?
        } else {
            objective_uncorrected
        };
        let objective_quantized = objective(&target, &w_hat, x_hat)?;

        let next = layer.activation.apply(&w_hat.matmul(x_hat)?);
        quantized.push(next);
        layers.push(Layer::new(w_hat, layer.activation));
        stats.push(LayerStats {
            layer: l + 1,
            alpha,
            objective_uncorrected,
            objective_corrected,
            objective_quantized,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(QuantizationOutcome {
        network: NetworkSpec::new(net.input_dim(), layers)?,
        trace: ActivationTrace { full, quantized },
        stats,
    })
}

/// Quantizes layers `1 … n` through the sequential pipeline and keeps
/// layers `n+1 … L` at full precision. `schedule` covers either the first
/// `n` layers or the whole network.
pub fn partial_quantize(
    net: &NetworkSpec,
    n: usize,
    calib: &CalibrationSet,
    cfg: &PipelineConfig,
    schedule: &PropagationSchedule,
) -> Result<NetworkSpec> {
    let depth = net.depth();
    if n == 0 || n > depth {
        return Err(QepError::InvalidConfig(format!("prefix length must be in 1..={depth}, got {n}")));
    }
    let prefix = NetworkSpec::new(net.input_dim(), net.layers()[..n].to_vec())?;
    let schedule = if cfg.mode == PipelineMode::Qep && schedule.len() == depth && n < depth {
        PropagationSchedule::new(schedule.alphas()[..n].to_vec())?
    } else {
        schedule.clone()
    };
    let outcome = quantize_network(&prefix, calib, cfg, &schedule)?;
    let mut layers = outcome.network.layers().to_vec();
    layers.extend_from_slice(&net.layers()[n..]);
    NetworkSpec::new(net.input_dim(), layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::Activation;
    use crate::quantizers::layer_objective;

    fn net(depth: usize, width: usize, act: Activation) -> NetworkSpec {
        let layers = (0..depth)
            .map(|l| {
                let w = Matrix::from_fn(width, width, |i, j| {
                    ((i * width + j) as f64 * 0.731 + l as f64 * 1.37).sin() * 0.6
                });
                Layer::new(w, act)
            })
            .collect();
        NetworkSpec::new(width, layers).unwrap()
    }

    fn calib(width: usize, m: usize) -> CalibrationSet {
        CalibrationSet::new(Matrix::from_fn(width, m, |i, j| ((i * m + j) as f64 * 0.377).cos()))
    }

    fn cfg(bits: u8, mode: PipelineMode) -> PipelineConfig {
        PipelineConfig::new(QuantConfig::rtn(bits).unwrap(), mode)
    }

    #[test]
    fn alpha_zero_matches_base_bitwise() {
        let n = net(3, 6, Activation::Relu);
        let c = calib(6, 20);
        let base = quantize_network(&n, &c, &cfg(3, PipelineMode::Base), &PropagationSchedule::default_for(3)).unwrap();
        let qep = quantize_network(
            &n,
            &c,
            &cfg(3, PipelineMode::Qep),
            &PropagationSchedule::uniform(3, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(base.network, qep.network);
        assert_eq!(base.trace, qep.trace);
    }

    #[test]
    fn trace_consistency() {
        let n = net(4, 5, Activation::ScaledTanh(1.2));
        let c = calib(5, 16);
        let out = quantize_network(&n, &c, &cfg(4, PipelineMode::Qep), &PropagationSchedule::default_for(4)).unwrap();
        assert_eq!(out.trace.full[0], out.trace.quantized[0]);
        assert_eq!(out.trace.quantized.len(), 5);
        let recomputed = out.network.forward(c.x()).unwrap();
        assert_eq!(recomputed, out.trace.quantized);
    }

    #[test]
    fn recorded_objectives_match_direct_evaluation() {
        let n = net(4, 6, Activation::Identity);
        let c = calib(6, 24);
        let base = quantize_network(&n, &c, &cfg(3, PipelineMode::Base), &PropagationSchedule::default_for(4)).unwrap();
        for (l, s) in base.stats.iter().enumerate() {
            let w = &n.layer(l).weights;
            let direct = w
                .matmul(&base.trace.full[l])
                .unwrap()
                .sub(&base.network.layer(l).weights.matmul(&base.trace.quantized[l]).unwrap())
                .unwrap()
                .frobenius_norm_sq();
            assert_eq!(s.objective_quantized, direct);
            if l == 0 {
                let own = layer_objective(w, &base.network.layer(0).weights, c.x()).unwrap();
                assert!((own - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn partial_keeps_tail() {
        let n = net(3, 4, Activation::Relu);
        let c = calib(4, 12);
        let cfg = cfg(3, PipelineMode::Base);
        let s = PropagationSchedule::default_for(3);
        let p = partial_quantize(&n, 1, &c, &cfg, &s).unwrap();
        assert_eq!(p.layers()[1..], n.layers()[1..]);
        assert_ne!(p.layer(0), n.layer(0));
        assert!(partial_quantize(&n, 0, &c, &cfg, &s).is_err());
        assert!(partial_quantize(&n, 4, &c, &cfg, &s).is_err());
        let whole = quantize_network(&n, &c, &cfg, &s).unwrap().network;
        assert_eq!(partial_quantize(&n, 3, &c, &cfg, &s).unwrap(), whole);
    }

    #[test]
    fn singular_hessian_reports_layer() {
        // layer 1 maps everything to zero, so layer 2 sees all-zero inputs
        let layers = vec![
            Layer::new(Matrix::zeros(3, 3), Activation::Identity),
            Layer::new(Matrix::identity(3), Activation::Identity),
        ];
        let n = NetworkSpec::new(3, layers).unwrap();
        let c = calib(3, 8);
        let cfg = cfg(4, PipelineMode::Base);
        let cfg = PipelineConfig {
            quant: cfg.quant.with_kind(QuantizerKind::Compensated),
            ..cfg
        };
        match quantize_network(&n, &c, &cfg, &PropagationSchedule::default_for(2)) {
            Err(QepError::SingularHessian { layer: Some(2), .. }) => {}
            other => panic!("expected singular Hessian at layer 2, got {other:?}"),
        }
    }

    #[test]
    fn schedule_length_checked_in_qep_mode() {
        let n = net(3, 4, Activation::Relu);
        let c = calib(4, 12);
        let short = PropagationSchedule::default_for(2);
        assert!(quantize_network(&n, &c, &cfg(3, PipelineMode::Qep), &short).is_err());
        assert!(quantize_network(&n, &c, &cfg(3, PipelineMode::Base), &short).is_ok());
    }
}
