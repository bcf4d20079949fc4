//! Flat `key = value` configuration, shared by config files, flags and the
//! echo written next to every output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qep_core::netmodel::io::PayloadMode;
use qep_core::netmodel::synth::{GeneratorConfig, WeightInit, DEFAULT_SPECTRAL_NORM};
use qep_core::netmodel::{Activation, HessianSource, PipelineConfig, PipelineMode};
use qep_core::qep::{PropagationSchedule, DEFAULT_ALPHA};
use qep_core::quantizers::{Granularity, QuantConfig, QuantizerKind};
use qep_core::DampingMode;

use crate::error::{CliError, CliResult};

pub const KEYS: &[&str] = &[
    "command",
    "model",
    "calib",
    "out",
    "quantized",
    "stats",
    "bits",
    "group",
    "quantizer",
    "mode",
    "alpha",
    "damping",
    "seed",
    "format",
    "base-activations",
    "payload",
    "prefix",
    "sweep",
    "grid",
    "depth",
    "width",
    "widths",
    "input-dim",
    "samples",
    "spectral-norm",
    "activation",
    "init",
    "grid-bits",
    "r",
];

/// Ordered key-value settings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("config line {}: expected 'key = value'", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::config(format!("config line {}: unknown key '{k}'", i + 1)));
            }
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.0
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::config(format!("invalid value '{v}' for {key}")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|t| {
                        t.trim()
                            .parse()
                            .map_err(|_| CliError::config(format!("invalid entry '{t}' in {key}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Single broadcast value or one value per layer.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Scalar(f64),
    PerLayer(Vec<f64>),
}

impl AlphaSpec {
    pub fn schedule(&self, depth: usize) -> CliResult<PropagationSchedule> {
        let s = match self {
            AlphaSpec::Scalar(a) => PropagationSchedule::uniform(depth, *a),
            AlphaSpec::PerLayer(v) if v.len() == depth => PropagationSchedule::new(v.clone()),
            AlphaSpec::PerLayer(v) => {
                return Err(CliError::config(format!("alpha list has {} entries for {depth} layers", v.len())))
            }
        };
        Ok(s?)
    }
}

impl fmt::Display for AlphaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSpec::Scalar(a) => write!(f, "{a}"),
            AlphaSpec::PerLayer(v) => f.write_str(&join(v)),
        }
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    Bits,
    Depth,
    R,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Bits => "bits",
            SweepAxis::Depth => "depth",
            SweepAxis::R => "r",
        }
    }
}

pub fn parse_damping(s: &str) -> CliResult<DampingMode> {
    let mode = match s {
        "none" => DampingMode::None,
        "mean" => DampingMode::MeanDiagonal,
        other => match other.strip_prefix("fixed:").map(str::parse::<f64>) {
            Some(Ok(v)) => DampingMode::Fixed(v),
            _ => return Err(CliError::config(format!("invalid damping '{other}' (none | mean | fixed:<v>)"))),
        },
    };
    Ok(mode.validate()?)
}

pub fn damping_name(d: DampingMode) -> String {
    match d {
        DampingMode::None => "none".into(),
        DampingMode::MeanDiagonal => "mean".into(),
        DampingMode::Fixed(v) => format!("fixed:{v}"),
    }
}

pub fn parse_activation(s: &str) -> CliResult<Activation> {
    let act = match s {
        "identity" => Activation::Identity,
        "relu" => Activation::Relu,
        "tanh" => Activation::ScaledTanh(1.0),
        other => match other.strip_prefix("tanh:").map(str::parse::<f64>) {
            Some(Ok(v)) => Activation::ScaledTanh(v),
            _ => return Err(CliError::config(format!("invalid activation '{other}'"))),
        },
    };
    Ok(act.validate()?)
}

pub fn activation_name(a: Activation) -> String {
    match a {
        Activation::ScaledTanh(s) => format!("tanh:{s}"),
        other => other.kind().to_string(),
    }
}

fn choice<T: Copy>(settings: &Settings, key: &str, default: T, options: &[(&str, T)]) -> CliResult<T> {
    match settings.get(key) {
        None => Ok(default),
        Some(v) => options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            CliError::config(format!("invalid {key} '{v}' (expected {})", names.join(" | ")))
        }),
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub model: Option<PathBuf>,
    pub calib: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub quantized: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub bits: u8,
    pub group: Option<usize>,
    pub quantizer: QuantizerKind,
    pub mode: PipelineMode,
    pub alpha: AlphaSpec,
    pub seed: u64,
    pub damping: DampingMode,
    pub format: Format,
    pub base_activations: HessianSource,
    pub payload: PayloadMode,
    pub prefix: Option<usize>,
    pub sweep: Option<SweepAxis>,
    pub grid: Vec<String>,
    pub dims: Vec<usize>,
    pub samples: usize,
    pub spectral_norm: f64,
    pub activation: Activation,
    pub init: WeightInit,
    pub grid_bits: Option<u8>,
    pub r: f64,
}

pub const DEFAULT_BITS: u8 = 4;
pub const DEFAULT_DEPTH: usize = 4;
pub const DEFAULT_WIDTH: usize = 16;
pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_R: f64 = 0.05;

impl RunConfig {
    pub fn resolve(command: &str, s: &Settings) -> CliResult<Self> {
        if let Some(c) = s.get("command") {
            if c != command {
                return Err(CliError::config(format!("config is for '{c}', not '{command}'")));
            }
        }
        let path = |k: &str| -> CliResult<Option<PathBuf>> {
            match s.get(k) {
                Some("") => Err(CliError::config(format!("{k} path is empty"))),
                other => Ok(other.map(PathBuf::from)),
            }
        };

        let alpha = match s.list::<f64>("alpha")? {
            None => AlphaSpec::Scalar(DEFAULT_ALPHA),
            Some(v) if v.len() == 1 => AlphaSpec::Scalar(v[0]),
            Some(v) => AlphaSpec::PerLayer(v),
        };
        let alphas = match &alpha {
            AlphaSpec::Scalar(a) => vec![*a],
            AlphaSpec::PerLayer(v) => v.clone(),
        };
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(CliError::config(format!("alpha {a} outside [0, 1]")));
        }

        let depth = s.parsed::<usize>("depth")?;
        let width = s.parsed::<usize>("width")?.unwrap_or(DEFAULT_WIDTH);
        let input_dim = s.parsed::<usize>("input-dim")?;
        let dims = match s.list::<usize>("widths")? {
            Some(ws) => {
                if let Some(d) = depth.filter(|&d| d + 1 != ws.len()) {
                    return Err(CliError::config(format!(
                        "widths lists {} sizes but depth {d} needs {}",
                        ws.len(),
                        d + 1
                    )));
                }
                if let Some(i) = input_dim.filter(|&i| i != ws[0]) {
                    return Err(CliError::config(format!("input-dim {i} disagrees with widths[0] = {}", ws[0])));
                }
                ws
            }
            None => {
                let mut v = vec![input_dim.unwrap_or(width)];
                v.extend(std::iter::repeat_n(width, depth.unwrap_or(DEFAULT_DEPTH)));
                v
            }
        };
        if dims.len() < 2 || dims.contains(&0) {
            return Err(CliError::config("network needs at least one layer and positive widths"));
        }

        let grid = s
            .get("grid")
            .map(|g| g.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
            .unwrap_or_default();

        let cfg = Self {
            command: command.to_string(),
            model: path("model")?,
            calib: path("calib")?,
            out: path("out")?,
            quantized: path("quantized")?,
            stats: path("stats")?,
            bits: s.parsed("bits")?.unwrap_or(DEFAULT_BITS),
            group: s.parsed("group")?,
            quantizer: choice(
                s,
                "quantizer",
                QuantizerKind::Rtn,
                &[("rtn", QuantizerKind::Rtn), ("compensated", QuantizerKind::Compensated)],
            )?,
            mode: choice(s, "mode", PipelineMode::Qep, &[("base", PipelineMode::Base), ("qep", PipelineMode::Qep)])?,
            alpha,
            seed: s.parsed("seed")?.unwrap_or(0),
            damping: s.get("damping").map_or(Ok(DampingMode::MeanDiagonal), parse_damping)?,
            format: choice(s, "format", Format::Csv, &[("csv", Format::Csv), ("json", Format::Json)])?,
            base_activations: choice(
                s,
                "base-activations",
                HessianSource::Quantized,
                &[("quantized", HessianSource::Quantized), ("full", HessianSource::Full)],
            )?,
            payload: choice(
                s,
                "payload",
                PayloadMode::Inline,
                &[("inline", PayloadMode::Inline), ("binary", PayloadMode::Binary)],
            )?,
            prefix: s.parsed("prefix")?,
            sweep: match s.contains("sweep") {
                false => None,
                true => Some(choice(
                    s,
                    "sweep",
                    SweepAxis::Alpha,
                    &[
                        ("alpha", SweepAxis::Alpha),
                        ("bits", SweepAxis::Bits),
                        ("depth", SweepAxis::Depth),
                        ("r", SweepAxis::R),
                    ],
                )?),
            },
            grid,
            dims,
            samples: s.parsed("samples")?.unwrap_or(DEFAULT_SAMPLES),
            spectral_norm: s.parsed("spectral-norm")?.unwrap_or(DEFAULT_SPECTRAL_NORM),
            activation: s.get("activation").map_or(Ok(Activation::Identity), parse_activation)?,
            init: s.get("init").map_or(Ok(WeightInit::Gaussian), |v| Ok::<_, CliError>(WeightInit::parse(v)?))?,
            grid_bits: s.parsed("grid-bits")?,
            r: s.parsed("r")?.unwrap_or(DEFAULT_R),
        };
        cfg.quant_config()?;
        if !(cfg.r.is_finite() && cfg.r >= 0.0) {
            return Err(CliError::config(format!("r must be >= 0, got {}", cfg.r)));
        }
        Ok(cfg)
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn quant_config(&self) -> CliResult<QuantConfig> {
        self.quant_config_bits(self.bits)
    }

    pub fn quant_config_bits(&self, bits: u8) -> CliResult<QuantConfig> {
        let gran = self.group.map_or(Granularity::PerChannel, Granularity::Group);
        Ok(QuantConfig::new(bits, gran, false, self.quantizer)?)
    }

    pub fn pipeline(&self) -> CliResult<PipelineConfig> {
        Ok(PipelineConfig::new(self.quant_config()?, self.mode)
            .with_damping(self.damping)
            .with_hessian_source(self.base_activations))
    }

    pub fn generator(&self) -> CliResult<GeneratorConfig> {
        let g = GeneratorConfig {
            dims: self.dims.clone(),
            samples: self.samples,
            spectral_norm: self.spectral_norm,
            activation: self.activation,
            init: self.init,
            seed: self.seed,
            grid_bits: self.grid_bits,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn require(&self, key: &str, value: &Option<PathBuf>) -> CliResult<PathBuf> {
        value
            .clone()
            .ok_or_else(|| CliError::config(format!("{} requires --{key}", self.command)))
    }

    /// Resolved settings; loading them back with `--config` reproduces the run.
    pub fn echo(&self) -> Settings {
        let mut s = Settings::default();
        s.set("command", &self.command);
        let paths = [
            ("model", &self.model),
            ("calib", &self.calib),
            ("out", &self.out),
            ("quantized", &self.quantized),
            ("stats", &self.stats),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                s.set(k, p.display().to_string());
            }
        }
        s.set("bits", self.bits.to_string());
        if let Some(g) = self.group {
            s.set("group", g.to_string());
        }
        s.set(
            "quantizer",
            match self.quantizer {
                QuantizerKind::Rtn => "rtn",
                QuantizerKind::Compensated => "compensated",
            },
        );
        s.set(
            "mode",
            match self.mode {
                PipelineMode::Base => "base",
                PipelineMode::Qep => "qep",
            },
        );
        s.set("alpha", self.alpha.to_string());
        s.set("seed", self.seed.to_string());
        s.set("damping", damping_name(self.damping));
        s.set(
            "format",
            match self.format {
                Format::Csv => "csv",
                Format::Json => "json",
            },
        );
        s.set(
            "base-activations",
            match self.base_activations {
                HessianSource::Quantized => "quantized",
                HessianSource::Full => "full",
            },
        );
        s.set(
            "payload",
            match self.payload {
                PayloadMode::Inline => "inline",
                PayloadMode::Binary => "binary",
            },
        );
        if let Some(p) = self.prefix {
            s.set("prefix", p.to_string());
        }
        if let Some(a) = self.sweep {
            s.set("sweep", a.name());
        }
        if !self.grid.is_empty() {
            s.set("grid", self.grid.join(","));
        }
        s.set("widths", join(&self.dims));
        s.set("samples", self.samples.to_string());
        s.set("spectral-norm", self.spectral_norm.to_string());
        s.set("activation", activation_name(self.activation));
        s.set("init", self.init.name());
        if let Some(b) = self.grid_bits {
            s.set("grid-bits", b.to_string());
        }
        s.set("r", self.r.to_string());
        let used = command_keys(&self.command);
        s.0.retain(|k, _| used.contains(&k.as_str()));
        s
    }
}

/// Keys that affect `command`; the echo is restricted to these.
fn command_keys(command: &str) -> &'static [&'static str] {
    const GENERATOR: &[&str] = &[
        "command", "out", "calib", "seed", "payload", "widths", "samples", "spectral-norm", "activation", "init",
        "grid-bits",
    ];
    const QUANTIZE: &[&str] = &[
        "command", "model", "calib", "out", "stats", "bits", "group", "quantizer", "mode", "alpha", "damping",
        "base-activations", "payload", "prefix",
    ];
    const DIAGNOSE: &[&str] = &["command", "model", "calib", "quantized", "out", "format"];
    match command {
        "generate" => GENERATOR,
        "quantize" => QUANTIZE,
        "diagnose" => DIAGNOSE,
        _ => KEYS,
    }
}

/// Config echo path for an output file.
pub fn echo_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}
