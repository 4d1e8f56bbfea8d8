use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpca::simulation::{gen_series, CovCase, DgpConfig};
use gpca::{pe_estimate, IterationOptions, PanelDataset};
use tempfile::TempDir;

fn gpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpca")).args(args).output().expect("spawn gpca")
}

fn ok(args: &[&str]) {
    let out = gpca(args);
    assert!(out.status.success(), "gpca {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Numeric body of a `label,...` matrix file.
fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &TempDir, months: usize) -> PathBuf {
    let out = dir.path().join("fixture");
    ok(&["synth", "--seed", "4", "--months", &months.to_string(), "--out", s(&out)]);
    out.join("ff_synthetic_10x10.csv")
}

fn write_dataset(dir: &TempDir, cfg: &DgpConfig) -> PathBuf {
    let (x, _) = gen_series(cfg).unwrap();
    let path = dir.path().join("data.csv");
    PanelDataset::from_series(x).write_wide(fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn noiseless_simulation_has_zero_distances() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "simulate", "--reps", "1", "--noise-scale", "0", "--t", "30", "--p2", "30", "--methods",
        "gpca,oracle,pe,alphapca", "--out", s(dir.path()),
    ]);
    let mut rdr = csv::Reader::from_path(dir.path().join("table.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let mean: f64 = rec[col("mean")].parse().unwrap();
        assert!(mean <= 1e-8, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 12);
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(threads);
        ok(&["simulate", "--case", "3", "--t", "40", "--p2", "40", "--reps", "5", "--threads", threads, "--out", s(&out)]);
        fs::read(out.join("table.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn estimate_writes_files_with_model_shapes() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, 120);
    let out = dir.path().join("est");
    ok(&["estimate", "--input", s(&input), "--k1", "2", "--k2", "3", "--out", s(&out)]);
    let r = read_matrix(&out.join("r_hat.csv"));
    let c = read_matrix(&out.join("c_hat.csv"));
    assert_eq!((r.len(), r[0].len()), (10, 2));
    assert_eq!((c.len(), c[0].len()), (10, 3));
    assert_eq!(read_matrix(&out.join("u.csv")).len(), 10);
    let lines = |f: &str| fs::read_to_string(out.join(f)).unwrap().lines().count() - 1;
    assert_eq!(lines("factors.csv"), 120 * 2 * 3);
    assert_eq!(lines("common.csv"), 120 * 100);
    assert_eq!(lines("residuals.csv"), 120 * 100);
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["T"], 120);
    assert_eq!(summary["method"], "gpca");
}

#[test]
fn gpca_and_pe_loadings_differ_on_heteroscedastic_data() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, 120);
    let run = |method: &str| {
        let out = dir.path().join(method);
        ok(&["estimate", "--input", s(&input), "--method", method, "--out", s(&out)]);
        read_matrix(&out.join("r_hat.csv"))
    };
    let (g, p) = (run("gpca"), run("pe"));
    assert_eq!((g.len(), g[0].len()), (p.len(), p[0].len()));
    let gap = g.iter().flatten().zip(p.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-3, "max loading difference {gap}");
}

#[test]
fn factor_count_above_dimension_is_rejected() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, 60);
    let out = gpca(&["estimate", "--input", s(&input), "--k1", "11", "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"sed": 1}"#).unwrap();
    let out = |args: &[&str]| gpca(&[args, &["--out", s(&dir.path().join("o"))]].concat());
    assert!(!out(&["simulate", "--config", s(&cfg)]).status.success());
    assert!(!out(&["estimate"]).status.success());
    assert!(!out(&["estimate", "--input", s(&dir.path().join("missing.csv"))]).status.success());
    assert!(!out(&["simulate", "--phi", "1.2"]).status.success());
}

#[test]
fn zero_constants_return_the_sample_covariances() {
    let dir = TempDir::new().unwrap();
    let cfg = DgpConfig { cov_case: CovCase::Case2, t: 40, p1: 8, p2: 12, k1: 2, k2: 2, seed: 5, ..Default::default() };
    let input = write_dataset(&dir, &cfg);
    let out = dir.path().join("cov");
    ok(&["cov", "--input", s(&input), "--no-standardize", "--c-r", "0", "--c-c", "0", "--out", s(&out)]);

    // Reference: residuals of the PE pilot and their plain second moments.
    let (x, _) = gen_series(&cfg).unwrap();
    let pilot = pe_estimate(&x, 2, 2, &IterationOptions::default()).unwrap();
    let (t, p1, p2) = (x.len(), x.rows(), x.cols());
    let mut u = vec![vec![0.0; p1]; p1];
    let mut v = vec![vec![0.0; p2]; p2];
    for e in pilot.residuals.iter() {
        for i in 0..p1 {
            for j in 0..p1 {
                u[i][j] += (0..p2).map(|k| e[(i, k)] * e[(j, k)]).sum::<f64>() / (t * p2) as f64;
            }
        }
        for i in 0..p2 {
            for j in 0..p2 {
                v[i][j] += (0..p1).map(|k| e[(k, i)] * e[(k, j)]).sum::<f64>() / (t * p1) as f64;
            }
        }
    }
    for (got, want) in [(read_matrix(&out.join("u_hat.csv")), u), (read_matrix(&out.join("v_hat.csv")), v)] {
        for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
    let summary = json(&out.join("cov_summary.json"));
    assert_eq!(summary["row"]["chosen_constant"], 0.0);
    assert!(summary["row"]["cross_validation"].is_null());
}

#[test]
fn single_point_grid_reports_that_constant() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, 120);
    let out = dir.path().join("cov");
    ok(&["cov", "--input", s(&input), "--grid", "0.7", "--out", s(&out)]);
    let summary = json(&out.join("cov_summary.json"));
    assert_eq!(summary["row"]["chosen_constant"], 0.7);
    assert_eq!(summary["col"]["chosen_constant"], 0.7);
    assert_eq!(json(&out.join("config.json"))["fit"]["threshold"]["grid"], serde_json::json!([0.7]));
}

#[test]
fn diagonal_truth_gives_sparse_estimates() {
    let dir = TempDir::new().unwrap();
    let diag = |p: usize| -> Vec<Vec<f64>> {
        (0..p).map(|i| (0..p).map(|j| if i == j { 0.5 + (i % 4) as f64 } else { 0.0 }).collect()).collect()
    };
    let cfg = DgpConfig {
        cov_case: CovCase::Custom { u: diag(20), v: diag(30) },
        t: 200,
        p1: 20,
        p2: 30,
        seed: 8,
        ..Default::default()
    };
    let input = write_dataset(&dir, &cfg);
    let out = dir.path().join("cov");
    ok(&["cov", "--input", s(&input), "--no-standardize", "--k1", "3", "--k2", "3", "--out", s(&out)]);
    let summary = json(&out.join("cov_summary.json"));
    for side in ["row", "col"] {
        let sparsity = summary[side]["sparsity"].as_f64().unwrap();
        assert!(sparsity >= 0.9, "{side} sparsity {sparsity}");
    }
}

#[test]
fn rolling_writes_one_report_per_method() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, 96);
    let out = dir.path().join("rolling");
    ok(&["rolling", "--input", s(&input), "--n-years", "3", "--k", "1", "--methods", "gpca,pe", "--out", s(&out)]);
    for method in ["gpca", "pe"] {
        let text = fs::read_to_string(out.join(format!("rolling_{method}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // 8 periods, 3 in the first window: 5 evaluation years plus the mean row.
        assert_eq!(lines.len(), 1 + 5 + 1);
        assert_eq!(lines[0], "year,mse,rho,upsilon");
        assert!(lines[1].starts_with("1998"));
        assert!(lines[1].ends_with(','));
        assert!(lines[6].starts_with("mean,"));
    }
    let summary = fs::read_to_string(out.join("rolling_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
