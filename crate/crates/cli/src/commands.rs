use std::path::{Path, PathBuf};

use qep_core::diagnostics::DiagnosticsReport;
use qep_core::netmodel::io::{read_calibration, read_network, write_calibration, write_network};
use qep_core::netmodel::synth;
use qep_core::netmodel::{quantize_network, CalibrationSet, LayerStats, NetworkSpec, PipelineMode};
use qep_core::qep::PropagationSchedule;

use crate::config::{echo_path, Format, RunConfig};
use crate::error::{CliError, CliResult, ExitKind};

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_echo(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    write_text(&echo_path(out), &cfg.echo().to_text())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub(crate) fn load_pair(cfg: &RunConfig) -> CliResult<(NetworkSpec, CalibrationSet)> {
    let net = read_network(&cfg.require("model", &cfg.model)?)?;
    let calib = read_calibration(&cfg.require("calib", &cfg.calib)?)?;
    if calib.dim() != net.input_dim() {
        return Err(CliError {
            kind: ExitKind::Structural,
            message: format!(
                "calibration has {} rows but the model expects {}",
                calib.dim(),
                net.input_dim()
            ),
        });
    }
    Ok((net, calib))
}

pub fn generate(mut cfg: RunConfig) -> CliResult<()> {
    let out = cfg.require("out", &cfg.out)?;
    let calib_path = cfg.calib.clone().unwrap_or_else(|| with_suffix(&out, ".calib"));
    cfg.calib = Some(calib_path.clone());
    let gen = cfg.generator()?;
    let (net, calib) = synth::generate(&gen)?;
    write_network(&out, &net, cfg.payload)?;
    write_calibration(&calib_path, &calib, cfg.payload)?;
    write_echo(&cfg, &out)
}

fn stats_csv(stats: &[LayerStats]) -> String {
    let mut s = String::from("layer,alpha,objective_uncorrected,objective_corrected,objective_quantized,time_ms\n");
    for r in stats {
        s.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.layer, r.alpha, r.objective_uncorrected, r.objective_corrected, r.objective_quantized, r.elapsed_ms
        ));
    }
    s
}

/// Schedule for the first `n` layers of a `depth`-layer model. Per-layer
/// lists may cover either the prefix or the whole model.
pub(crate) fn prefix_schedule(cfg: &RunConfig, n: usize, depth: usize) -> CliResult<PropagationSchedule> {
    if cfg.mode == PipelineMode::Base {
        return Ok(PropagationSchedule::default_for(n));
    }
    match cfg.alpha.schedule(depth) {
        Ok(s) if n < depth => Ok(PropagationSchedule::new(s.alphas()[..n].to_vec())?),
        Ok(s) => Ok(s),
        Err(_) => cfg.alpha.schedule(n),
    }
}

/// Runs the pipeline over the configured prefix and appends the
/// full-precision tail.
pub(crate) fn run_pipeline(
    cfg: &RunConfig,
    net: &NetworkSpec,
    calib: &CalibrationSet,
) -> CliResult<(NetworkSpec, Vec<LayerStats>)> {
    let depth = net.depth();
    let n = cfg.prefix.unwrap_or(depth);
    if n == 0 || n > depth {
        return Err(CliError::config(format!("prefix must be in 1..={depth}, got {n}")));
    }
    let schedule = prefix_schedule(cfg, n, depth)?;
    let head = NetworkSpec::new(net.input_dim(), net.layers()[..n].to_vec())?;
    let outcome = quantize_network(&head, calib, &cfg.pipeline()?, &schedule)?;
    let mut layers = outcome.network.layers().to_vec();
    layers.extend_from_slice(&net.layers()[n..]);
    Ok((NetworkSpec::new(net.input_dim(), layers)?, outcome.stats))
}

pub fn quantize(mut cfg: RunConfig) -> CliResult<()> {
    let out = cfg.require("out", &cfg.out)?;
    let stats_path = cfg.stats.clone().unwrap_or_else(|| with_suffix(&out, ".stats.csv"));
    cfg.stats = Some(stats_path.clone());
    let (net, calib) = load_pair(&cfg)?;
    let (quantized, stats) = run_pipeline(&cfg, &net, &calib)?;
    write_network(&out, &quantized, cfg.payload)?;
    write_text(&stats_path, &stats_csv(&stats))?;
    write_echo(&cfg, &out)
}

pub fn diagnose(cfg: RunConfig) -> CliResult<()> {
    let out = cfg.require("out", &cfg.out)?;
    let (net, calib) = load_pair(&cfg)?;
    let hat = read_network(&cfg.require("quantized", &cfg.quantized)?)?;
    if !net.is_structurally_equal(&hat) {
        return Err(CliError {
            kind: ExitKind::Structural,
            message: "original and quantized models differ in shape or activations".into(),
        });
    }
    let report = DiagnosticsReport::build(&net, &hat, calib.x(), cfg.echo().map().clone())?;
    let text = match cfg.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    write_text(&out, &text)?;
    write_echo(&cfg, &out)
}
