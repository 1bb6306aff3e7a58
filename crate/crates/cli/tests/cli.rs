use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fsi_core::fsi::wn_criterion;
use fsi_core::{Euclidean, IndexParam, Kernel, RegressionDataset};
use nalgebra::DMatrix;

fn fsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsi"))
        .args(args)
        .env("FSI_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic_mortality")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (headers, rows)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SIM_GRID: &str = "0.3,0.5,0.8";

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--n", "50", "--p", "2", "--sigma2", "0.4", "--replicates", "3", "--seed", "7", "--bandwidths",
        SIM_GRID, "--out", path_str(out),
    ];
    args.extend_from_slice(extra);
    fsi(&args)
}

#[test]
fn simulate_writes_one_row_per_replicate_and_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));

    let (headers, rows) = csv_rows(&dir.path().join("sim_replicates.csv"));
    assert_eq!(&headers[..6], ["setting", "replicate", "h", "se", "msee_fsi", "msee_mlf"]);
    assert_eq!(rows.len(), 3 * 3);
    for h in ["0.3", "0.5", "0.8"] {
        let mut reps: Vec<&str> = rows.iter().filter(|r| r[2] == h).map(|r| r[1].as_str()).collect();
        reps.sort_unstable();
        assert_eq!(reps, ["0", "1", "2"]);
    }
    let (_, summary) = csv_rows(&dir.path().join("sim_summary.csv"));
    assert_eq!(summary.len(), 1);

    let m = manifest(dir.path());
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(simulate(a.path(), &[]).status.success());
    assert!(simulate(b.path(), &["--threads", "3"]).status.success());
    for name in ["sim_replicates.csv", "sim_summary.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn simulate_rejects_scalar_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsi(&["simulate", "--n", "50", "--p", "1", "--sigma2", "0.4", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("p >= 2"), "{}", stderr(&out));
    assert_eq!(manifest(dir.path())["exit_code"], 1);
}

#[test]
fn simulate_settings_file_matches_inline_flags() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let settings = b.path().join("settings.json");
    fs::write(
        &settings,
        format!(
            r#"{{"settings": [{{"n": 50, "p": 2, "sigma2": 0.4, "replicates": 3, "seed": 7}}], "bandwidths": [{SIM_GRID}]}}"#
        ),
    )
    .unwrap();
    let out_b = b.path().join("run");
    assert!(simulate(a.path(), &[]).status.success());
    let out = fsi(&["simulate", "--settings", path_str(&settings), "--out", path_str(&out_b)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(a.path().join("sim_replicates.csv")).unwrap(),
        fs::read(out_b.join("sim_replicates.csv")).unwrap()
    );
}

#[test]
fn simulated_sphere_data_round_trips_into_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let out = fsi(&[
        "simulate", "--n", "40", "--p", "2", "--sigma2", "0.2", "--replicates", "1", "--seed", "3", "--bandwidths",
        "0.5", "--dump-data", "--out", path_str(&sim_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let fit_dir = dir.path().join("fit");
    let out = fsi(&[
        "fit", "--geometry", "sphere", "--data", path_str(&sim_dir.join("data_setting0.csv")), "--bandwidths",
        "0.3,0.5", "--out", path_str(&fit_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (headers, rows) = csv_rows(&fit_dir.join("fitted.csv"));
    assert_eq!(headers, ["row", "index", "fitted_y1", "fitted_y2", "fitted_y3"]);
    assert_eq!(rows.len(), 40);
    for r in &rows {
        let norm: f64 = r[2..].iter().map(|v| v.parse::<f64>().unwrap().powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }
    let theta: serde_json::Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("theta_hat.json")).unwrap()).unwrap();
    let t: Vec<f64> = serde_json::from_value(theta["theta_hat"].clone()).unwrap();
    let se = (t[0] - std::f64::consts::FRAC_1_SQRT_2).powi(2) + (t[1] - std::f64::consts::FRAC_1_SQRT_2).powi(2);
    assert!(se < 0.05, "theta_hat {t:?}");
    let (_, trace) = csv_rows(&fit_dir.join("trace.csv"));
    assert_eq!(trace.len(), 10);
}

/// Deterministic covariates without an RNG dependency.
fn design(n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|i| [((i as f64) * 0.7).sin(), ((i as f64) * 1.3 + 0.4).cos()]).collect()
}

#[test]
fn euclidean_fit_matches_dense_grid_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let theta0 = [0.8f64, -0.6];
    let xs = design(60);
    let mut text = String::from("x1,x2,y\n");
    for x in &xs {
        let u = theta0[0] * x[0] + theta0[1] * x[1];
        text += &format!("{:.17e},{:.17e},{:.17e}\n", x[0], x[1], 2.0 * u + 0.5);
    }
    let data_path = dir.path().join("lin.csv");
    fs::write(&data_path, text).unwrap();
    let out_dir = dir.path().join("fit");
    let out = fsi(&["fit", "--geometry", "euclidean", "--data", path_str(&data_path), "--bandwidths", "0.4", "--out", path_str(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("theta_hat.json")).unwrap()).unwrap();
    let eta_hat = json["eta_hat"][0].as_f64().unwrap();

    let x = DMatrix::from_fn(xs.len(), 2, |i, j| xs[i][j]);
    let y = xs.iter().map(|x| 2.0 * (theta0[0] * x[0] + theta0[1] * x[1]) + 0.5).collect();
    let data = RegressionDataset::new(x, y, Euclidean).unwrap();
    let half = std::f64::consts::FRAC_PI_2;
    let (mut best_eta, mut best) = (0.0, f64::INFINITY);
    for k in 0..=20_000 {
        let eta = -half + std::f64::consts::PI * k as f64 / 20_000.0;
        let v = wn_criterion(&data, &IndexParam::from_polar(&[eta]).unwrap(), 0.4, Kernel::Gaussian).unwrap();
        if v < best {
            best = v;
            best_eta = eta;
        }
    }
    assert!((eta_hat - best_eta).abs() < 0.01, "eta_hat {eta_hat}, oracle {best_eta}");
}

#[test]
fn fit_reports_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut text = String::from("x1,x2,y1,y2\n");
    for x in design(20) {
        text += &format!("{},{},0,1\n", x[0], x[1]);
    }
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = fsi(&["fit", "--geometry", "sphere", "--data", path_str(&path), "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("y3"), "{}", stderr(&out));
    assert!(out_dir.join("manifest.json").is_file());
}

fn mortality(out: &Path, lifetables: &Path, splits: &str) -> Output {
    fsi(&[
        "mortality", "--lifetables", path_str(lifetables), "--covariates", path_str(&bundled().join("covariates.csv")),
        "--splits", splits, "--test-size", "10", "--seed", "11", "--auto-bandwidths", "4", "--out", path_str(out),
    ])
}

#[test]
fn mortality_on_bundled_data_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mortality(dir.path(), &bundled().join("lifetables"), "2");
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["comparison.csv", "theta_hat.json", "fitted_quantiles.csv", "splits.csv", "whatif.csv", "manifest.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let (headers, rows) = csv_rows(&dir.path().join("comparison.csv"));
    assert_eq!(headers, ["model", "h", "r2", "mspe_mean", "mspe_sd", "mspe_failures"]);
    let models: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(models, ["GF", "LF_hdi", "LF_hce", "LF_gdpc", "LF_im", "LF_co2e", "FSI"]);
    let (_, splits) = csv_rows(&dir.path().join("splits.csv"));
    assert_eq!(splits.len(), 2 * 7);
    // 40 lifetables plus the covariate file.
    assert_eq!(manifest(dir.path())["inputs"].as_array().unwrap().len(), 41);
}

#[test]
fn mortality_without_splits_omits_mspe_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = mortality(dir.path(), &bundled().join("lifetables"), "0");
    assert!(out.status.success(), "{}", stderr(&out));
    let (headers, rows) = csv_rows(&dir.path().join("comparison.csv"));
    assert_eq!(headers, ["model", "h", "r2"]);
    assert_eq!(rows.len(), 7);
}

#[test]
fn mortality_names_corrupted_unit() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("lifetables");
    fs::create_dir(&tables).unwrap();
    for entry in fs::read_dir(bundled().join("lifetables")).unwrap() {
        let path = entry.unwrap().path();
        fs::copy(&path, tables.join(path.file_name().unwrap())).unwrap();
    }
    let target = tables.join("U07.csv");
    let text = fs::read_to_string(&target).unwrap();
    let corrupted: String = text
        .lines()
        .map(|l| if l.starts_with("60,") { "60,100000".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&target, corrupted + "\n").unwrap();

    let out_dir = dir.path().join("out");
    let out = mortality(&out_dir, &tables, "0");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("U07"), "{}", stderr(&out));
    assert_eq!(manifest(&out_dir)["exit_code"], 1);
}

#[test]
fn mortality_missing_covariates_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsi(&[
        "mortality", "--lifetables", path_str(&bundled().join("lifetables")), "--covariates",
        path_str(&dir.path().join("nope.csv")), "--out", path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_mortality_regenerates_bundled_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsi(&["synth-mortality", "--out", path_str(dir.path()), "--units", "40", "--seed", "2024"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bundle = bundled();
    for name in ["covariates.csv", "truth.json"] {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(bundle.join(name)).unwrap(), "{name}");
    }
    for entry in fs::read_dir(bundle.join("lifetables")).unwrap() {
        let path = entry.unwrap().path();
        let fresh = dir.path().join("lifetables").join(path.file_name().unwrap());
        assert_eq!(fs::read(&fresh).unwrap(), fs::read(&path).unwrap(), "{}", path.display());
    }
}
