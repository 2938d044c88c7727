//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are rejected so typos fail loudly.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use crate::domain::{BasisKind, Family, PenaltySpec};
use crate::solver::{InitStrategy, SolveOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub penalty: String,
    pub lambda: f64,
    pub alpha: f64,
    pub p: f64,
    pub group_size: usize,
    pub basis: BasisKind,
    pub tol: f64,
    pub max_sweeps: usize,
    pub init: InitStrategy,
    pub seed: u64,
    // generator
    pub n_cases: usize,
    pub n_covariates: usize,
    pub t0: f64,
    pub t1: f64,
    pub grid_points: usize,
    pub beta_true: Vec<f64>,
    pub beta_slope: Vec<f64>,
    pub noise_scale: f64,
    pub u0: f64,
    pub x_mean: f64,
    pub x_sd: f64,
}

impl Default for Config {
    fn default() -> Self {
        let solve = SolveOptions::default();
        Self {
            penalty: "ridge".into(),
            lambda: 0.0,
            alpha: 0.5,
            p: 1.5,
            group_size: 1,
            basis: BasisKind::Identity,
            tol: solve.tol,
            max_sweeps: solve.max_sweeps,
            init: solve.init,
            seed: 0,
            n_cases: 20,
            n_covariates: 2,
            t0: 0.0,
            t1: 1.0,
            grid_points: 11,
            beta_true: vec![1.0, -0.5],
            beta_slope: vec![0.0],
            noise_scale: 1.0,
            u0: 0.0,
            x_mean: 0.0,
            x_sd: 1.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "penalty", "lambda", "alpha", "p", "group_size", "basis", "tol", "max_sweeps", "init", "seed",
    "n_cases", "n_covariates", "t0", "t1", "grid_points", "beta_true", "beta_slope", "noise_scale",
    "u0", "x_mean", "x_sd",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| num::<f64>(key, v.trim())).collect()
}

pub fn parse_basis(value: &str) -> Result<BasisKind> {
    match value.to_ascii_lowercase().as_str() {
        "identity" | "linear" => Ok(BasisKind::Identity),
        "cubic" => Ok(BasisKind::Cubic),
        other => bail!("basis: unknown basis {other:?} (expected identity or cubic)"),
    }
}

pub fn parse_init(value: &str) -> Result<InitStrategy> {
    match value.to_ascii_lowercase().as_str() {
        "zero" => Ok(InitStrategy::Zero),
        "ols" => Ok(InitStrategy::Ols),
        "warm" => Ok(InitStrategy::Warm),
        other => bail!("init: unknown strategy {other:?} (expected zero, ols or warm)"),
    }
}

/// Canonical family name, or an error naming the `penalty` field.
pub fn canonical_penalty(value: &str) -> Result<&'static str> {
    Ok(match value.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
        "lasso" => "lasso",
        "ridge" => "ridge",
        "lp" | "lpnorm" => "lp",
        "elasticnet" | "enet" => "elasticnet",
        "fused" | "fusedlasso" => "fused",
        "bridge" => "bridge",
        "group" | "grouplasso" => "grouplasso",
        "spline" | "splinecubic" | "cubicspline" => "spline",
        other => bail!("penalty: unknown family {other:?}"),
    })
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "penalty" => self.penalty = canonical_penalty(value)?.to_string(),
            "lambda" => self.lambda = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "group_size" => self.group_size = num(key, value)?,
            "basis" => self.basis = parse_basis(value)?,
            "tol" => self.tol = num(key, value)?,
            "max_sweeps" => self.max_sweeps = num(key, value)?,
            "init" => self.init = parse_init(value)?,
            "seed" => self.seed = num(key, value)?,
            "n_cases" => self.n_cases = num(key, value)?,
            "n_covariates" => self.n_covariates = num(key, value)?,
            "t0" => self.t0 = num(key, value)?,
            "t1" => self.t1 = num(key, value)?,
            "grid_points" => self.grid_points = num(key, value)?,
            "beta_true" => self.beta_true = list(key, value)?,
            "beta_slope" => self.beta_slope = list(key, value)?,
            "noise_scale" => self.noise_scale = num(key, value)?,
            "u0" => self.u0 = num(key, value)?,
            "x_mean" => self.x_mean = num(key, value)?,
            "x_sd" => self.x_sd = num(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut c = Self::default();
        c.apply_str(&text).with_context(|| format!("in {}", path.display()))?;
        Ok(c)
    }

    /// The penalty for `j` covariates; errors name the offending field.
    pub fn penalty_spec(&self, j: usize) -> Result<PenaltySpec> {
        let family = match canonical_penalty(&self.penalty)? {
            "lasso" => Family::Lasso,
            "ridge" => Family::Ridge,
            "lp" => Family::LpNorm { p: self.p },
            "elasticnet" => Family::ElasticNet { alpha: self.alpha },
            "fused" => Family::FusedLasso { alpha: self.alpha },
            "bridge" => Family::Bridge,
            "spline" => Family::SplineCubic,
            _ => {
                let m = self.group_size;
                if m == 0 || !j.is_multiple_of(m) {
                    bail!("group_size: {m} does not divide the {j} covariates");
                }
                Family::group_identity(m, j / m)
            }
        };
        Ok(PenaltySpec::new(family, self.lambda)?)
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let opts = SolveOptions {
            max_sweeps: self.max_sweeps,
            tol: self.tol,
            init: self.init,
            ..SolveOptions::default()
        };
        opts.validate()?;
        Ok(opts)
    }

    /// `beta_j(t) = beta_true_j + beta_slope_j t`; one-element lists broadcast.
    pub fn true_beta(&self, t: f64) -> Result<Vec<f64>> {
        let j = self.n_covariates;
        let pick = |name: &str, v: &[f64], c: usize| -> Result<f64> {
            match v.len() {
                1 => Ok(v[0]),
                n if n == j => Ok(v[c]),
                n => bail!("{name}: {n} values for {j} covariates"),
            }
        };
        (0..j)
            .map(|c| Ok(pick("beta_true", &self.beta_true, c)? + pick("beta_slope", &self.beta_slope, c)? * t))
            .collect()
    }
}
