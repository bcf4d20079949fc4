use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "qep", version, about = "Layer-wise quantization with error propagation on synthetic networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic model and calibration set.
    Generate(Options),
    /// Quantize a model layer by layer.
    Quantize(Options),
    /// Compare an original and a quantized model.
    Diagnose(Options),
    /// Evaluate diagnostics over a grid of one parameter.
    Sweep(Options),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Quantize(_) => "quantize",
            Command::Diagnose(_) => "diagnose",
            Command::Sweep(_) => "sweep",
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Command::Generate(o) | Command::Quantize(o) | Command::Diagnose(o) | Command::Sweep(o) => o,
        }
    }
}

/// Every flag is optional here; defaults and validation live in
/// [`crate::config::RunConfig`] so that config files and flags share them.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// `key = value` file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub calib: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    /// Quantized model (diagnose).
    #[arg(long)]
    pub quantized: Option<String>,
    /// Per-layer stats file (quantize); defaults to `<out>.stats.csv`.
    #[arg(long)]
    pub stats: Option<String>,

    #[arg(long)]
    pub bits: Option<String>,
    #[arg(long)]
    pub group: Option<String>,
    /// rtn | compensated
    #[arg(long)]
    pub quantizer: Option<String>,
    /// base | qep
    #[arg(long)]
    pub mode: Option<String>,
    /// Scalar or comma-separated per-layer list.
    #[arg(long)]
    pub alpha: Option<String>,
    /// none | mean | fixed:<v>
    #[arg(long)]
    pub damping: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// csv | json
    #[arg(long)]
    pub format: Option<String>,
    /// quantized | full
    #[arg(long = "base-activations")]
    pub base_activations: Option<String>,
    /// inline | binary
    #[arg(long)]
    pub payload: Option<String>,
    /// Quantize only the first n layers.
    #[arg(long)]
    pub prefix: Option<String>,

    /// alpha | bits | depth | r
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,

    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub width: Option<String>,
    /// Comma-separated `d_1,…,d_{L+1}`; overrides depth/width/input-dim.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long = "input-dim")]
    pub input_dim: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long = "spectral-norm")]
    pub spectral_norm: Option<String>,
    /// identity | relu | tanh[:<scale>]
    #[arg(long)]
    pub activation: Option<String>,
    /// gaussian | orthogonal
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long = "grid-bits")]
    pub grid_bits: Option<String>,
    /// Relative weight-perturbation ratio (depth and r sweeps).
    #[arg(long)]
    pub r: Option<String>,
}

impl Options {
    /// Flags given on the command line, keyed by flag name.
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 27] = [
            ("model", &self.model),
            ("calib", &self.calib),
            ("out", &self.out),
            ("quantized", &self.quantized),
            ("stats", &self.stats),
            ("bits", &self.bits),
            ("group", &self.group),
            ("quantizer", &self.quantizer),
            ("mode", &self.mode),
            ("alpha", &self.alpha),
            ("damping", &self.damping),
            ("seed", &self.seed),
            ("format", &self.format),
            ("base-activations", &self.base_activations),
            ("payload", &self.payload),
            ("prefix", &self.prefix),
            ("sweep", &self.sweep),
            ("grid", &self.grid),
            ("depth", &self.depth),
            ("width", &self.width),
            ("widths", &self.widths),
            ("input-dim", &self.input_dim),
            ("samples", &self.samples),
            ("spectral-norm", &self.spectral_norm),
            ("activation", &self.activation),
            ("init", &self.init),
            ("grid-bits", &self.grid_bits),
        ];
        let mut out: Vec<(&'static str, &str)> = fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect();
        if let Some(r) = self.r.as_deref() {
            out.push(("r", r));
        }
        out
    }
}
