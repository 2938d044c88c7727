//! `dynpen` command line: `fit`, `gen`, `validate`, `propagate`.
//!
//! Exit codes: 0 success, 1 bad input or internal error, 2 (`fit` only) when
//! some grid points did not converge.

pub mod config;
pub mod table;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::domain::{CoefPath, PointStatus, TimeGrid};
use crate::oracle::validate_family;
use crate::propagator::{schrodinger_residual, transition_step, WaveGrid};
use crate::sde::{generate_panel, Design, SdeOptions};
use crate::solver::{fit_path, FitReport};
use config::Config;
use table::fmt;

#[derive(Debug, Parser)]
#[command(name = "dynpen", version, about = "Time-dependent penalized regression paths")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit beta(t) at every grid point of a panel; writes betas.csv and report.txt.
    Fit(FitArgs),
    /// Generate a synthetic panel; writes panel.csv and truth.csv.
    Gen(GenArgs),
    /// Cross-check closed-form updates against the numerical oracles.
    Validate(ValidateArgs),
    /// Propagate a transition function and print the per-step residual.
    Propagate(PropagateArgs),
}

/// Settings shared by the commands; flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any config key, as key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set {kv}: expected key=value"))?;
            c.set(k.trim(), v)?;
        }
        let flags: [(&str, Option<String>); 10] = [
            ("penalty", self.penalty.clone()),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("p", self.p.map(|v| v.to_string())),
            ("group_size", self.group_size.map(|v| v.to_string())),
            ("basis", self.basis.clone()),
            ("tol", self.tol.map(|v| v.to_string())),
            ("max_sweeps", self.max_sweeps.map(|v| v.to_string())),
            ("init", self.init.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub panel: PathBuf,
    #[command(flatten)]
    pub settings: Overrides,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub settings: Overrides,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub settings: Overrides,
    /// Number of random instances
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    /// zero | const:C | quad
    #[arg(long, default_value = "zero")]
    pub potential: String,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 601)]
    pub nodes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a),
        Command::Gen(a) => cmd_gen(&a).map(|_| 0),
        Command::Validate(a) => cmd_validate(&a).map(|_| 0),
        Command::Propagate(a) => cmd_propagate(&a).map(|_| 0),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let cfg = a.settings.resolve()?;
    let file = File::open(&a.panel).with_context(|| format!("opening {}", a.panel.display()))?;
    let panel = table::read_panel(BufReader::new(file)).with_context(|| format!("reading {}", a.panel.display()))?;
    let spec = cfg.penalty_spec(panel.n_covariates())?;
    let opts = cfg.solve_options()?;
    let (path, report) = fit_path(&panel, &spec, cfg.basis, &opts)?;

    let mut w = create(&a.out, "betas.csv")?;
    table::write_betas(&mut w, &path, &report)?;
    w.flush()?;
    let mut r = create(&a.out, "report.txt")?;
    r.write_all(fit_report(&cfg, &path, &report).as_bytes())?;
    r.flush()?;

    Ok(if report.all_converged() { 0 } else { 2 })
}

fn fit_report(cfg: &Config, path: &CoefPath, report: &FitReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "penalty: {}", cfg.penalty);
    let _ = writeln!(s, "lambda: {}", fmt(cfg.lambda));
    let _ = writeln!(s, "basis: {}", cfg.basis.name());
    let _ = writeln!(s, "grid points: {}", path.grid().len());
    let _ = writeln!(s, "converged: {}/{}", report.n_converged(), report.points.len());
    let _ = writeln!(s, "aggregate objective: {}", fmt(report.aggregate_objective));
    let _ = writeln!(s, "t,iterations,max_foc_residual,stationarity,objective,status,signs");
    for (t, d) in path.grid().points().iter().zip(&report.points) {
        let status = match &d.status {
            PointStatus::Converged => "converged".to_string(),
            PointStatus::NotConverged => "not-converged".to_string(),
            PointStatus::Failed(e) => format!("failed: {e}"),
        };
        let signs: String = d.branch_signs.iter().map(|v| if *v < 0 { '-' } else if *v > 0 { '+' } else { '0' }).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt(*t),
            d.iterations,
            fmt(d.foc_residual_norm),
            fmt(d.stationarity),
            fmt(d.objective),
            status,
            signs
        );
    }
    s
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let cfg = a.settings.resolve()?;
    if cfg.n_covariates == 0 || cfg.n_cases == 0 {
        bail!("n_cases and n_covariates must be >= 1");
    }
    let grid = TimeGrid::uniform(cfg.t0, cfg.t1, cfg.grid_points)?;
    let betas = grid
        .points()
        .iter()
        .map(|t| cfg.true_beta(*t).map(nalgebra::DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    let truth = CoefPath::from_betas(grid.clone(), betas)?;
    let spec = cfg.penalty_spec(cfg.n_covariates)?;
    if !(cfg.x_sd >= 0.0) || !cfg.noise_scale.is_finite() {
        bail!("x_sd must be >= 0 and noise_scale finite");
    }
    let design = Design::Gaussian {
        n_cases: cfg.n_cases,
        n_covariates: cfg.n_covariates,
        mean: cfg.x_mean,
        sd: cfg.x_sd,
        seed: cfg.seed,
    };
    let sde = SdeOptions { n_paths: cfg.n_cases, seed: cfg.seed, u0: cfg.u0, noise_scale: cfg.noise_scale };
    let panel = generate_panel(&truth, &design, &spec, cfg.basis, &sde)?;

    let comments = vec![
        format!("n_cases={}", cfg.n_cases),
        format!("n_covariates={}", cfg.n_covariates),
        format!("grid={},{},{}", fmt(cfg.t0), fmt(cfg.t1), cfg.grid_points),
        format!("seed={}", cfg.seed),
        format!("penalty={} basis={} noise_scale={}", cfg.penalty, cfg.basis.name(), fmt(cfg.noise_scale)),
    ];
    let mut w = create(&a.out, "panel.csv")?;
    table::write_panel(&mut w, &panel, &comments)?;
    w.flush()?;
    let mut w = create(&a.out, "truth.csv")?;
    table::write_truth(&mut w, &truth, &comments)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let cfg = a.settings.resolve()?;
    let spec = cfg.penalty_spec(cfg.n_covariates)?;
    let report = validate_family(&spec, cfg.basis, a.n, cfg.seed);
    emit(a.out.as_deref(), &report.render())
}

fn potential(spec: &str) -> Result<Box<dyn Fn(f64) -> f64 + Sync>> {
    match spec.trim() {
        "zero" | "0" => Ok(Box::new(|_| 0.0)),
        "quad" => Ok(Box::new(|x| x * x)),
        other => match other.strip_prefix("const:") {
            Some(c) => {
                let c: f64 = c.parse().with_context(|| format!("potential: cannot parse constant {c:?}"))?;
                Ok(Box::new(move |_| c))
            }
            None => bail!("potential: expected zero, const:C or quad (got {other:?})"),
        },
    }
}

pub fn cmd_propagate(a: &PropagateArgs) -> Result<()> {
    let f = potential(&a.potential)?;
    let mut w = WaveGrid::uniform(a.lo, a.hi, a.nodes, |x| (-0.5 * x * x).exp())?;
    let mut s = String::from("step,s,residual\n");
    for step in 1..=a.steps {
        let next = transition_step(&w, &f, a.epsilon)?;
        let r = schrodinger_residual(&w, &next, &f, a.epsilon)?;
        let _ = writeln!(s, "{step},{},{}", fmt(next.s()), fmt(r));
        w = next;
    }
    emit(a.out.as_deref(), &s)
}
