use std::path::Path;
use std::process::{Command, Output};

use dynpen::cli::table::read_betas;

fn dynpen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynpen")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn rows(path: &Path) -> Vec<(f64, Vec<f64>)> {
    read_betas(std::fs::File::open(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn noiseless_gen_then_fit_recovers_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let g = dynpen(&["gen", "--set", "noise_scale=0", "--set", "beta_slope=2,-1", "--out", d]);
    assert!(g.status.success(), "{}", stderr(&g));
    let panel = tmp.path().join("panel.csv");
    let f = dynpen(&["fit", panel.to_str().unwrap(), "--out", d]);
    assert_eq!(f.status.code(), Some(0), "{}", stderr(&f));
    let fit = rows(&tmp.path().join("betas.csv"));
    let truth = rows(&tmp.path().join("truth.csv"));
    assert_eq!(fit.len(), 11);
    for ((t1, a), (t2, b)) in fit.iter().zip(&truth) {
        assert_eq!(t1, t2);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-8);
        }
    }
}

#[test]
fn gen_output_is_linear_without_noise_and_echoes_dims() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let cfg = write(tmp.path(), "gen.cfg", "n_cases = 4\nn_covariates = 3\ngrid_points = 5\nbeta_true = 1, 2, 3\nnoise_scale = 0\n");
    assert!(dynpen(&["gen", "--config", &cfg, "--out", d]).status.success());
    let text = std::fs::read_to_string(tmp.path().join("panel.csv")).unwrap();
    assert!(text.starts_with("# n_cases=4\n# n_covariates=3\n# grid="));
    assert!(text.contains("\nt,i,y,x_1,x_2,x_3\n"));
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with('t')) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let signal = v[3] + 2.0 * v[4] + 3.0 * v[5];
        assert!((v[2] - signal).abs() <= 1e-12 * (1.0 + signal.abs()));
    }
}

#[test]
fn gen_is_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert!(dynpen(&["gen", "--seed", "42", "--out", dir.to_str().unwrap()]).status.success());
    }
    for f in ["panel.csv", "truth.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let c = tmp.path().join("c");
    dynpen(&["gen", "--seed", "43", "--out", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(a.join("panel.csv")).unwrap(), std::fs::read(c.join("panel.csv")).unwrap());
}

#[test]
fn scalar_ridge_panel_reproduces_the_golden_value() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = write(tmp.path(), "p.csv", "t,i,y,x_1\n0,1,1,1\n1,1,1,1\n");
    let o = dynpen(&["fit", &panel, "--penalty", "ridge", "--lambda", "0.5", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = rows(&tmp.path().join("betas.csv"));
    // at s = 0 the penalty weight g_x vanishes, so only the s = 1 row is shrunk
    assert!((fit[0].1[0] - 1.0).abs() < 1e-12);
    assert!((fit[1].1[0] - 0.13582).abs() < 1e-5);
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("converged: 2/2"));
}

#[test]
fn invalid_alpha_exits_1_and_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = write(tmp.path(), "p.csv", "t,i,y,x_1\n0,1,1,1\n1,1,1,1\n");
    let cfg = write(tmp.path(), "fit.cfg", "penalty = elasticnet\nalpha = 1.5\n");
    let o = dynpen(&["fit", &panel, "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn malformed_inputs_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let missing = write(tmp.path(), "m.csv", "t,i,y,x_1\n0,1,1,1\n0,2,1,2\n1,1,1,1\n");
    let o = dynpen(&["fit", &missing, "--out", d]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("case 2 missing"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "bad.cfg", "lamda = 1\n");
    let o = dynpen(&["gen", "--config", &cfg, "--out", d]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lamda"));

    assert_eq!(dynpen(&["fit", "/nonexistent/panel.csv"]).status.code(), Some(1));
    assert_eq!(dynpen(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn unconverged_fit_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    assert!(dynpen(&["gen", "--out", d]).status.success());
    let panel = tmp.path().join("panel.csv");
    let o = dynpen(&["fit", panel.to_str().unwrap(), "--penalty", "lasso", "--lambda", "0.1", "--tol", "1e-300", "--max-sweeps", "2", "--out", d]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("betas.csv")).unwrap();
    let flags: Vec<bool> = text.lines().skip(1).map(|l| l.ends_with(",true")).collect();
    // s = 0 switches the penalty off: that point is plain least squares and
    // solves exactly; every other point is cut off after two sweeps
    assert!(flags[0]);
    assert!(flags[1..].iter().all(|c| !c));
}

#[test]
fn validate_reports() {
    let o = dynpen(&["validate", "--penalty", "ridge", "--lambda", "0.1", "--n", "40"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("max discrepancy <= 1e-6"), "{}", stdout(&o));

    let o = dynpen(&["validate", "--penalty", "grouplasso", "--lambda", "0.1", "--n", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("[group block update vs foc]"));
    assert!(out.contains("max discrepancy > 1e-6"));

    assert_eq!(dynpen(&["validate", "--penalty", "scad"]).status.code(), Some(1));
}

fn residuals(args: &[&str]) -> Vec<f64> {
    let mut full = vec!["propagate"];
    full.extend_from_slice(args);
    let o = dynpen(&full);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn propagate_residual_tables() {
    let zero = residuals(&["--potential", "zero", "--steps", "5"]);
    assert_eq!(zero, vec![0.0; 5]);

    let a = residuals(&["--potential", "const:1", "--epsilon", "0.01", "--steps", "1"]);
    let b = residuals(&["--potential", "const:1", "--epsilon", "0.005", "--steps", "1"]);
    assert!((a[0] / b[0] - 2.0).abs() < 0.05);

    let quad: Vec<f64> = ["0.02", "0.01", "0.005", "0.0025"]
        .iter()
        .map(|e| residuals(&["--potential", "quad", "--epsilon", e, "--steps", "1", "--nodes", "2001"])[0])
        .collect();
    assert!(quad.windows(2).all(|w| w[1] < w[0]), "{quad:?}");

    assert_eq!(dynpen(&["propagate", "--potential", "cubic"]).status.code(), Some(1));
}
