//! One CSV row of diagnostics per grid point. Grid points are evaluated
//! concurrently; rows are written in grid order.

use qep_core::diagnostics::DiagnosticsReport;
use qep_core::netmodel::synth::{
    generate, generate_calibration, generate_network, random_perturbation, GeneratorConfig,
};
use qep_core::netmodel::{quantize_network, Layer, NetworkSpec, PipelineConfig, PipelineMode};
use qep_core::numerics::{projection, Matrix};
use qep_core::par;
use qep_core::qep::{compute_delta, propagation_term, ErrorMatrix, PropagationSchedule};
use qep_core::ProjectionMatrix;

use crate::commands::{load_pair, run_pipeline, write_echo, write_text};
use crate::config::{RunConfig, SweepAxis};
use crate::error::{CliError, CliResult};

const SCALAR_COLUMNS: &str = "delta_final,mismatch_fro,bound_u,uniform_bound,first_order_bound,gain_G,ratio_r";

fn scalars(r: &DiagnosticsReport) -> Vec<f64> {
    let d = r.final_delta();
    vec![d, d.sqrt(), r.bound_u, r.uniform_bound, r.first_order_bound, r.gain_g, r.ratio_r]
}

fn parse_grid<T: std::str::FromStr>(cfg: &RunConfig, ok: impl Fn(&T) -> bool) -> CliResult<Vec<T>> {
    if cfg.grid.is_empty() {
        return Err(CliError::config("sweep needs a non-empty --grid"));
    }
    cfg.grid
        .iter()
        .map(|g| match g.parse::<T>() {
            Ok(v) if ok(&v) => Ok(v),
            _ => Err(CliError::config(format!("invalid grid value '{g}' for this axis"))),
        })
        .collect()
}

fn perturbed(net: &NetworkSpec, e: &[Matrix]) -> CliResult<NetworkSpec> {
    let layers = net
        .layers()
        .iter()
        .zip(e)
        .map(|(l, e)| Ok(Layer::new(l.weights.add(e)?, l.activation)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(NetworkSpec::new(net.input_dim(), layers)?)
}

fn collect_rows(rows: Vec<CliResult<Vec<f64>>>) -> CliResult<Vec<Vec<f64>>> {
    rows.into_iter().collect()
}

fn alpha_rows(cfg: &RunConfig) -> CliResult<(String, Vec<Vec<f64>>)> {
    let alphas = parse_grid::<f64>(cfg, |a| (0.0..=1.0).contains(a))?;
    let (net, calib) = load_pair(cfg)?;
    let depth = net.depth();
    // δ_l and P_l from the Base run, so every grid point measures the same
    // propagation terms
    let base_cfg = cfg.pipeline()?;
    let base_cfg = PipelineConfig {
        mode: PipelineMode::Base,
        ..base_cfg
    };
    let base = quantize_network(&net, &calib, &base_cfg, &PropagationSchedule::default_for(depth))?;
    let layer_terms: Vec<(ErrorMatrix, ProjectionMatrix)> = (0..depth)
        .map(|l| {
            let delta = compute_delta(&base.trace.full[l], &base.trace.quantized[l])?;
            let p = projection(&base.trace.quantized[l], cfg.damping).map_err(|e| e.at_layer(l + 1))?;
            Ok((delta, p))
        })
        .collect::<qep_core::Result<_>>()?;

    let rows = par::map_slice(&alphas, |&a| -> CliResult<Vec<f64>> {
        let qcfg = PipelineConfig {
            mode: PipelineMode::Qep,
            ..base_cfg.clone()
        };
        let out = quantize_network(&net, &calib, &qcfg, &PropagationSchedule::uniform(depth, a)?)?;
        let report = DiagnosticsReport::build(&net, &out.network, calib.x(), Default::default())?;
        let mut row = vec![a];
        row.extend(scalars(&report));
        let mut total = 0.0;
        for (l, (delta, p)) in layer_terms.iter().enumerate() {
            let t = propagation_term(&net.layer(l).weights, delta, p, a)?;
            total += t;
            row.push(t);
        }
        row.push(total);
        Ok(row)
    });
    let extra: String = (1..=depth).map(|l| format!(",prop_{l}")).collect();
    Ok((format!("alpha,{SCALAR_COLUMNS}{extra},prop_total"), collect_rows(rows)?))
}

fn bits_rows(cfg: &RunConfig) -> CliResult<(String, Vec<Vec<f64>>)> {
    let bits = parse_grid::<u8>(cfg, |b| (2..=8).contains(b))?;
    let (net, calib) = load_pair(cfg)?;
    let rows = par::map_slice(&bits, |&b| -> CliResult<Vec<f64>> {
        let mut point = cfg.clone();
        point.bits = b;
        let (q, _) = run_pipeline(&point, &net, &calib)?;
        let report = DiagnosticsReport::build(&net, &q, calib.x(), Default::default())?;
        let mut row = vec![b as f64];
        row.extend(scalars(&report));
        Ok(row)
    });
    Ok((format!("bits,{SCALAR_COLUMNS}"), collect_rows(rows)?))
}

fn generator_for_depth(cfg: &RunConfig, depth: usize) -> CliResult<GeneratorConfig> {
    let mut g = cfg.generator()?;
    let width = cfg.dims[1];
    g.dims = std::iter::once(cfg.dims[0]).chain(std::iter::repeat_n(width, depth)).collect();
    Ok(g)
}

fn perturbation_row(net: &NetworkSpec, x: &Matrix, r: f64, seed: u64, key: f64) -> CliResult<Vec<f64>> {
    let e = random_perturbation(net, r, seed)?;
    let hat = perturbed(net, &e)?;
    let report = DiagnosticsReport::build(net, &hat, x, Default::default())?;
    let mut row = vec![key];
    row.extend(scalars(&report));
    Ok(row)
}

fn depth_rows(cfg: &RunConfig) -> CliResult<(String, Vec<Vec<f64>>)> {
    let depths = parse_grid::<usize>(cfg, |d| *d >= 1)?;
    let rows = par::map_slice(&depths, |&d| -> CliResult<Vec<f64>> {
        let (net, calib) = generate(&generator_for_depth(cfg, d)?)?;
        perturbation_row(&net, calib.x(), cfg.r, cfg.seed, d as f64)
    });
    Ok((format!("depth,{SCALAR_COLUMNS}"), collect_rows(rows)?))
}

fn r_rows(cfg: &RunConfig) -> CliResult<(String, Vec<Vec<f64>>)> {
    let ratios = parse_grid::<f64>(cfg, |r| r.is_finite() && *r >= 0.0)?;
    let (net, calib) = if cfg.model.is_some() {
        load_pair(cfg)?
    } else {
        let g = cfg.generator()?;
        (generate_network(&g)?, generate_calibration(&g)?)
    };
    let rows = par::map_slice(&ratios, |&r| perturbation_row(&net, calib.x(), r, cfg.seed, r));
    Ok((format!("r,{SCALAR_COLUMNS}"), collect_rows(rows)?))
}

pub fn sweep(cfg: RunConfig) -> CliResult<()> {
    let out = cfg.require("out", &cfg.out)?;
    let axis = cfg
        .sweep
        .ok_or_else(|| CliError::config("sweep requires --sweep <alpha|bits|depth|r>"))?;
    let (header, rows) = match axis {
        SweepAxis::Alpha => alpha_rows(&cfg)?,
        SweepAxis::Bits => bits_rows(&cfg)?,
        SweepAxis::Depth => depth_rows(&cfg)?,
        SweepAxis::R => r_rows(&cfg)?,
    };
    let mut text = format!("index,{header}\n");
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        text.push_str(&format!("{i},{}\n", cells.join(",")));
    }
    write_text(&out, &text)?;
    write_echo(&cfg, &out)
}
