use std::path::{Path, PathBuf};

use qep_core::diagnostics::DiagnosticsReport;
use qep_core::netmodel::io::read_network;
use qep_core::numerics::spectral_norm_default;
use tempfile::TempDir;

fn qep(args: &[&str]) -> i32 {
    qep_cli::run(std::iter::once("qep").chain(args.iter().copied()))
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i]).collect()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
    let model = path(dir, name);
    let mut args = vec!["generate", "--out", s(&model)];
    args.extend_from_slice(extra);
    assert_eq!(qep(&args), 0);
    let calib = PathBuf::from(format!("{}.calib", model.display()));
    (model, calib)
}

fn quantize(model: &Path, calib: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["quantize", "--model", s(model), "--calib", s(calib), "--out", s(out)];
    args.extend_from_slice(extra);
    qep(&args)
}

fn objective_sum(stats: &Path) -> f64 {
    let (h, rows) = csv_rows(stats);
    column(&h, &rows, "objective_quantized").iter().sum()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let (a, ca) = generate(&dir, "a.qep", &["--seed", "0", "--depth", "3", "--width", "8"]);
    let (b, cb) = generate(&dir, "b.qep", &["--seed", "0", "--depth", "3", "--width", "8"]);
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&ca), read(&cb));
    let (c, _) = generate(&dir, "c.qep", &["--seed", "1", "--depth", "3", "--width", "8"]);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn generated_layers_hit_target_spectral_norm() {
    let dir = TempDir::new().unwrap();
    for init in ["gaussian", "orthogonal"] {
        let (m, _) = generate(&dir, &format!("{init}.qep"), &["--init", init, "--width", "12", "--depth", "3"]);
        let net = read_network(&m).unwrap();
        for w in net.weights() {
            let n = spectral_norm_default(w);
            assert!((n - 1.1).abs() <= 0.011, "{init}: {n}");
        }
    }
}

#[test]
fn binary_payload_round_trips() {
    let dir = TempDir::new().unwrap();
    let (inline, _) = generate(&dir, "i.qep", &["--depth", "2", "--width", "5"]);
    let (binary, _) = generate(&dir, "b.qep", &["--depth", "2", "--width", "5", "--payload", "binary"]);
    assert!(PathBuf::from(format!("{}.bin", binary.display())).exists());
    assert_eq!(read_network(&inline).unwrap(), read_network(&binary).unwrap());
}

#[test]
fn width_mismatch_is_a_config_error_before_any_write() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.qep");
    let code = qep(&["generate", "--out", s(&out), "--widths", "4,8,8", "--depth", "3"]);
    assert_eq!(code, 2);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unknown_flag_and_bad_values_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.qep");
    assert_eq!(qep(&["generate", "--out", s(&out), "--bogus", "1"]), 2);
    assert_eq!(qep(&["generate", "--out", s(&out), "--depth", "x"]), 2);
    let (m, c) = generate(&dir, "g.qep", &["--depth", "2", "--width", "4"]);
    assert_eq!(quantize(&m, &c, &path(&dir, "q.qep"), &["--alpha", "1.5"]), 2);
}

#[test]
fn missing_input_exits_1() {
    let dir = TempDir::new().unwrap();
    let code = quantize(&path(&dir, "nope"), &path(&dir, "nope.calib"), &path(&dir, "q.qep"), &[]);
    assert_eq!(code, 1);
}

#[test]
fn grid_aligned_model_is_unchanged_by_base_rtn() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--grid-bits", "3", "--depth", "3", "--width", "8"]);
    let q = path(&dir, "q.qep");
    assert_eq!(quantize(&m, &c, &q, &["--bits", "3", "--mode", "base"]), 0);
    assert_eq!(read(&m), read(&q));
}

#[test]
fn qep_alpha_zero_matches_base_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    for quantizer in ["rtn", "compensated"] {
        let (m, c) = generate(&dir, "g.qep", &["--seed", "3", "--activation", "relu", "--width", "8"]);
        let base = path(&dir, "base.qep");
        let qz = path(&dir, "qep.qep");
        let common = ["--bits", "3", "--quantizer", quantizer];
        assert_eq!(quantize(&m, &c, &base, &[&common[..], &["--mode", "base"]].concat()), 0);
        assert_eq!(quantize(&m, &c, &qz, &[&common[..], &["--mode", "qep", "--alpha", "0"]].concat()), 0);
        assert_eq!(read(&base), read(&qz), "{quantizer}");
    }
}

#[test]
fn qep_full_correction_lowers_summed_objective() {
    let dir = TempDir::new().unwrap();
    for seed in ["1", "2", "3"] {
        let (m, c) = generate(&dir, "g.qep", &["--seed", seed, "--width", "8", "--depth", "4"]);
        let base = path(&dir, "base.qep");
        let qz = path(&dir, "qep.qep");
        assert_eq!(quantize(&m, &c, &base, &["--bits", "3", "--mode", "base"]), 0);
        assert_eq!(quantize(&m, &c, &qz, &["--bits", "3", "--mode", "qep", "--alpha", "1"]), 0);
        let b = objective_sum(&path(&dir, "base.qep.stats.csv"));
        let q = objective_sum(&path(&dir, "qep.qep.stats.csv"));
        assert!(q <= b * (1.0 + 1e-9), "seed {seed}: qep {q} > base {b}");
    }
}

#[test]
fn stats_file_has_one_row_per_layer() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "3", "--width", "6"]);
    let q = path(&dir, "q.qep");
    let stats = path(&dir, "s.csv");
    assert_eq!(quantize(&m, &c, &q, &["--stats", s(&stats), "--alpha", "0.2,0.4,0.6"]), 0);
    let (h, rows) = csv_rows(&stats);
    assert_eq!(h[0], "layer");
    assert_eq!(column(&h, &rows, "layer"), vec![1.0, 2.0, 3.0]);
    assert_eq!(column(&h, &rows, "alpha"), vec![0.2, 0.4, 0.6]);
}

#[test]
fn singular_hessian_exits_3() {
    let dir = TempDir::new().unwrap();
    // fewer samples than input features leaves X̂X̂ᵀ rank-deficient
    let (m, c) = generate(&dir, "g.qep", &["--input-dim", "8", "--width", "8", "--depth", "2", "--samples", "4"]);
    let q = path(&dir, "q.qep");
    let code = quantize(&m, &c, &q, &["--quantizer", "compensated", "--damping", "none"]);
    assert_eq!(code, 3);
}

#[test]
fn structural_mismatch_exits_4() {
    let dir = TempDir::new().unwrap();
    let (a, ca) = generate(&dir, "a.qep", &["--depth", "2", "--width", "6"]);
    let (b, _) = generate(&dir, "b.qep", &["--depth", "3", "--width", "6"]);
    let out = path(&dir, "r.csv");
    let code = qep(&["diagnose", "--model", s(&a), "--calib", s(&ca), "--quantized", s(&b), "--out", s(&out)]);
    assert_eq!(code, 4);
    let (_, c_other) = generate(&dir, "c.qep", &["--depth", "2", "--width", "6", "--input-dim", "5"]);
    assert_eq!(quantize(&a, &c_other, &path(&dir, "q.qep"), &[]), 4);
}

#[test]
fn identical_pair_diagnoses_to_zero() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "3", "--width", "6"]);
    let out = path(&dir, "r.json");
    let code = qep(&[
        "diagnose", "--model", s(&m), "--calib", s(&c), "--quantized", s(&m), "--out", s(&out), "--format", "json",
    ]);
    assert_eq!(code, 0);
    let report = DiagnosticsReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.delta_values().iter().all(|&d| d == 0.0));
    assert_eq!(report.bound_u, 0.0);
}

#[test]
fn prefix_error_is_zero_only_at_the_input() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "6", "--width", "8", "--init", "orthogonal"]);
    let q = path(&dir, "q.qep");
    assert_eq!(quantize(&m, &c, &q, &["--prefix", "2", "--bits", "3", "--mode", "base"]), 0);
    let original = read_network(&m).unwrap();
    let quantized = read_network(&q).unwrap();
    assert_eq!(original.layers()[2..], quantized.layers()[2..]);

    let out = path(&dir, "r.json");
    let args = ["diagnose", "--model", s(&m), "--calib", s(&c), "--quantized", s(&q), "--out", s(&out), "--format", "json"];
    assert_eq!(qep(&args), 0);
    let report = DiagnosticsReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let d = report.delta_values();
    // row 0 is the shared input
    assert_eq!(d.len(), 7);
    assert_eq!(d[0], 0.0);
    assert!(d[1..].iter().all(|&v| v > 0.0), "{d:?}");
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "3", "--width", "6", "--seed", "9"]);
    let first = path(&dir, "first.qep");
    assert_eq!(quantize(&m, &c, &first, &["--bits", "3", "--alpha", "0.7", "--quantizer", "compensated"]), 0);
    let echo = path(&dir, "first.qep.cfg");
    let text = std::fs::read_to_string(&echo).unwrap();
    assert!(text.contains("alpha = 0.7"), "{text}");

    let second = path(&dir, "second.qep");
    assert_eq!(qep(&["quantize", "--config", s(&echo), "--out", s(&second)]), 0);
    assert_eq!(read(&first), read(&second));

    // explicit flags win over the file
    let third = path(&dir, "third.qep");
    assert_eq!(qep(&["quantize", "--config", s(&echo), "--out", s(&third), "--alpha", "0"]), 0);
    assert_ne!(read(&first), read(&third));
}

#[test]
fn config_for_another_command_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "2", "--width", "4"]);
    let echo = PathBuf::from(format!("{}.cfg", m.display()));
    let code = qep(&["quantize", "--config", s(&echo), "--model", s(&m), "--calib", s(&c)]);
    assert_eq!(code, 2);
}

#[test]
fn sweep_requires_a_grid() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "2", "--width", "4"]);
    let out = path(&dir, "s.csv");
    let code = qep(&["sweep", "--model", s(&m), "--calib", s(&c), "--out", s(&out), "--sweep", "alpha"]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn alpha_sweep_propagation_terms_never_increase() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "3", "--width", "8", "--activation", "relu"]);
    let out = path(&dir, "s.csv");
    let grid = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    let args = ["sweep", "--model", s(&m), "--calib", s(&c), "--out", s(&out), "--sweep", "alpha", "--grid", grid, "--bits", "3"];
    assert_eq!(qep(&args), 0);
    let (h, rows) = csv_rows(&out);
    assert_eq!(rows.len(), 11);
    assert_eq!(column(&h, &rows, "alpha")[10], 1.0);
    for name in ["prop_1", "prop_2", "prop_3", "prop_total"] {
        let col = column(&h, &rows, name);
        for w in col.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{name}: {col:?}");
        }
    }
}

#[test]
fn depth_sweep_grows_and_respects_uniform_bound() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "d.csv");
    let args = ["sweep", "--out", s(&out), "--sweep", "depth", "--grid", "2,4,8", "--width", "8", "--init", "orthogonal"];
    assert_eq!(qep(&args), 0);
    let (h, rows) = csv_rows(&out);
    let measured = column(&h, &rows, "mismatch_fro");
    let bound = column(&h, &rows, "uniform_bound");
    assert!(measured.windows(2).all(|w| w[1] > w[0]), "{measured:?}");
    for (m, b) in measured.iter().zip(&bound) {
        assert!(m <= b, "{m} > {b}");
    }
}

#[test]
fn bits_sweep_error_shrinks_with_precision() {
    let dir = TempDir::new().unwrap();
    let (m, c) = generate(&dir, "g.qep", &["--depth", "3", "--width", "8"]);
    let out = path(&dir, "b.csv");
    let args = ["sweep", "--model", s(&m), "--calib", s(&c), "--out", s(&out), "--sweep", "bits", "--grid", "2,4,8"];
    assert_eq!(qep(&args), 0);
    let (h, rows) = csv_rows(&out);
    let d = column(&h, &rows, "delta_final");
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    assert!(path(&dir, "b.csv.cfg").exists());
}

#[test]
fn sweep_rows_are_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a.csv");
    let b = path(&dir, "b.csv");
    for out in [&a, &b] {
        let args = ["sweep", "--out", s(out), "--sweep", "r", "--grid", "0,0.02,0.05,0.1", "--width", "6", "--depth", "3"];
        assert_eq!(qep(&args), 0);
    }
    assert_eq!(read(&a), read(&b));
    let (h, rows) = csv_rows(&a);
    assert_eq!(column(&h, &rows, "delta_final")[0], 0.0);
}
