//! Per-timepoint cyclic coordinate solver and whole-path fitting.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::{signs_of, BasisKind, CoefPath, Family, Panel, PenaltySpec, PointDiagnostics, PointStatus};
use crate::error::{Error, Result};
use crate::foc::{closed_update_candidate, f_coord, f_eval, foc_residual, group_update, stationarity, FocContext};

#[derive(Debug, Clone, PartialEq)]
pub enum BranchStrategy {
    /// Evaluate both sign branches per coordinate and keep the consistent one
    /// with the lower objective (ties go to +1).
    TryBoth,
    /// One fixed sign per coordinate.
    FixedSigns(Vec<i8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    Zero,
    Ols,
    /// Start each grid point from the previous point's solution.
    Warm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_sweeps: usize,
    /// Absolute tolerance on max_k |residual|, scaled by 1 + ||Y||^2.
    pub tol: f64,
    pub branch_strategy: BranchStrategy,
    pub init: InitStrategy,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-8,
            branch_strategy: BranchStrategy::TryBoth,
            init: InitStrategy::Ols,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimepointFit {
    pub beta: DVector<f64>,
    pub diagnostics: PointDiagnostics,
}

/// Fits one time point. `NotConverged` is reported through the diagnostics;
/// branch and denominator failures are errors.
pub fn fit_timepoint(ctx: &FocContext, opts: &SolveOptions) -> Result<TimepointFit> {
    fit_timepoint_from(ctx, opts, None)
}

/// As [`fit_timepoint`], starting from `start` when given.
pub fn fit_timepoint_from(
    ctx: &FocContext,
    opts: &SolveOptions,
    start: Option<&DVector<f64>>,
) -> Result<TimepointFit> {
    opts.validate()?;
    let fit = solve(ctx, opts, start);
    match &fit.diagnostics.status {
        PointStatus::Failed(e) => Err(e.clone()),
        _ => Ok(fit),
    }
}

fn initial_beta(ctx: &FocContext, opts: &SolveOptions, start: Option<&DVector<f64>>) -> DVector<f64> {
    let j = ctx.n_covariates();
    if let Some(b) = start.filter(|b| b.len() == j && b.iter().all(|v| v.is_finite())) {
        return b.clone();
    }
    match opts.init {
        InitStrategy::Zero => DVector::zeros(j),
        InitStrategy::Ols | InitStrategy::Warm => {
            least_squares(ctx.xh(), ctx.y()).unwrap_or_else(|| DVector::zeros(j))
        }
    }
}

/// Least squares by Householder QR; `None` when the design is rank deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if x.nrows() < x.ncols() {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

fn solve(ctx: &FocContext, opts: &SolveOptions, start: Option<&DVector<f64>>) -> TimepointFit {
    let mut beta = initial_beta(ctx, opts, start);
    let tol = opts.tol * (1.0 + ctx.y().norm_squared());
    let mut sweeps = 0;
    let mut status = PointStatus::NotConverged;
    let mut stat_norm = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        sweeps = sweep;
        if let Err(e) = sweep_once(ctx, opts, &mut beta) {
            status = PointStatus::Failed(e);
            break;
        }
        match max_abs(ctx, beta.as_slice(), stationarity) {
            Ok(v) => stat_norm = v,
            Err(e) => {
                status = PointStatus::Failed(e);
                break;
            }
        }
        if stat_norm <= tol {
            status = PointStatus::Converged;
            break;
        }
    }

    let foc_norm = max_abs(ctx, beta.as_slice(), foc_residual).unwrap_or(f64::INFINITY);
    let objective = f_eval(ctx, beta.as_slice()).unwrap_or(f64::NAN);
    TimepointFit {
        diagnostics: PointDiagnostics {
            foc_residual_norm: foc_norm,
            stationarity: stat_norm,
            iterations: sweeps,
            branch_signs: signs_of(beta.as_slice()),
            objective,
            status,
        },
        beta,
    }
}

fn max_abs(
    ctx: &FocContext,
    beta: &[f64],
    f: fn(&FocContext, &[f64], usize) -> Result<f64>,
) -> Result<f64> {
    let mut m: f64 = 0.0;
    for k in 0..beta.len() {
        m = m.max(f(ctx, beta, k)?.abs());
    }
    Ok(m)
}

fn sweep_once(ctx: &FocContext, opts: &SolveOptions, beta: &mut DVector<f64>) -> Result<()> {
    if let Family::GroupLasso { blocks } = ctx.spec().family() {
        let m = blocks[0].nrows();
        for g in 0..blocks.len() {
            let block = group_update(ctx, beta.as_slice(), g)?;
            beta.rows_mut(g * m, m).copy_from(&block);
        }
        return Ok(());
    }
    for k in 0..beta.len() {
        beta[k] = coordinate_update(ctx, beta.as_slice(), k, &opts.branch_strategy)?;
    }
    Ok(())
}

/// One coordinate update with the sign-branch search.
pub fn coordinate_update(
    ctx: &FocContext,
    beta: &[f64],
    k: usize,
    strategy: &BranchStrategy,
) -> Result<f64> {
    if !ctx.spec().family().has_branches() {
        return closed_update_candidate(ctx, beta, k, 1).map(|c| c.value);
    }
    if let BranchStrategy::FixedSigns(signs) = strategy {
        let branch = *signs.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!("{} fixed signs for {} coordinates", signs.len(), beta.len()))
        })?;
        let c = closed_update_candidate(ctx, beta, k, branch)?;
        return if c.consistent { Ok(c.value) } else { Err(Error::NoConsistentBranch(k)) };
    }
    let pos = closed_update_candidate(ctx, beta, k, 1)?;
    let neg = closed_update_candidate(ctx, beta, k, -1)?;
    match (pos.consistent, neg.consistent) {
        (true, true) if pos.value == neg.value => Ok(pos.value),
        (true, true) => {
            let mut trial = beta.to_vec();
            trial[k] = pos.value;
            let fp = f_coord(ctx, &trial, k);
            trial[k] = neg.value;
            let fn_ = f_coord(ctx, &trial, k);
            Ok(if fn_ < fp { neg.value } else { pos.value })
        }
        (true, false) => Ok(pos.value),
        (false, true) => Ok(neg.value),
        (false, false) => Err(Error::NoConsistentBranch(k)),
    }
}

/// Per-timepoint diagnostics plus the aggregate objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub points: Vec<PointDiagnostics>,
    /// Trapezoid integral over the grid of sum_i (Y_i - Xh_i . beta)^2.
    pub aggregate_objective: f64,
}

impl FitReport {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(PointDiagnostics::converged)
    }

    pub fn n_converged(&self) -> usize {
        self.points.iter().filter(|p| p.converged()).count()
    }
}

/// Fits every grid point independently (or chained, with warm starts).
/// Failures at one point never abort the others.
pub fn fit_path(
    panel: &Panel,
    spec: &PenaltySpec,
    basis: BasisKind,
    opts: &SolveOptions,
) -> Result<(CoefPath, FitReport)> {
    opts.validate()?;
    spec.check_dims(panel.n_covariates())?;
    let times = panel.grid().points();
    let point = |ti: usize, start: Option<&DVector<f64>>| -> TimepointFit {
        match FocContext::new(times[ti], panel.y(ti).clone(), panel.x(ti).clone(), spec.clone(), basis) {
            Ok(ctx) => solve(&ctx, opts, start),
            Err(e) => failed_point(panel.n_covariates(), e),
        }
    };

    let fits: Vec<TimepointFit> = if opts.init == InitStrategy::Warm {
        let mut out: Vec<TimepointFit> = Vec::with_capacity(times.len());
        for ti in 0..times.len() {
            let prev = out.last().map(|f| f.beta.clone());
            out.push(point(ti, prev.as_ref()));
        }
        out
    } else {
        (0..times.len()).into_par_iter().map(|ti| point(ti, None)).collect()
    };

    let rss: Vec<f64> = fits
        .iter()
        .enumerate()
        .map(|(ti, f)| (panel.y(ti) - basis.apply(panel.x(ti)) * &f.beta).norm_squared())
        .collect();
    let aggregate_objective = panel.grid().trapezoid(&rss)?;
    let (betas, points): (Vec<_>, Vec<_>) = fits.into_iter().map(|f| (f.beta, f.diagnostics)).unzip();
    let path = CoefPath::new(panel.grid().clone(), betas, points.clone())?;
    Ok((path, FitReport { points, aggregate_objective }))
}

fn failed_point(j: usize, e: Error) -> TimepointFit {
    TimepointFit {
        beta: DVector::zeros(j),
        diagnostics: PointDiagnostics {
            foc_residual_norm: f64::INFINITY,
            stationarity: f64::INFINITY,
            iterations: 0,
            branch_signs: vec![1; j],
            objective: f64::NAN,
            status: PointStatus::Failed(e),
        },
    }
}
