//! First-order condition for a single time point.
//!
//! For coordinate `k` the residual is
//!
//! ```text
//! 2 sum_i (Y_i - Xh_i . beta) Xh_ik  -  s g(s, xbar_k) dmu/dbeta_k  -  s^2 sum_i h(X_ik) g(s, X_ik)
//! ```
//!
//! with `g(s, x) = lambda* exp(s x)`, `xbar_k` the case-averaged raw covariate and
//! `mu` the penalty drift. The last term is `1/2 sum_i g_xx(X_ik) dsigma_i/dbeta_k`
//! for the diffusion `sigma = 2 sum_i sum_k beta_k h(X_ik)`.
//!
//! The residual is minus the `beta_k` partial of [`f_coord`], so a fitted
//! coordinate is a stationary point of that objective. The closed-form updates
//! solve `residual = 0` for `beta_k` with every other coefficient held fixed.

use nalgebra::{DMatrix, DVector};

use crate::domain::{BasisKind, Family, PenaltySpec};
use crate::error::{Error, Result};
use crate::penalty::{column_means, drift, drift_grad, fused_neighbors};

/// `g(s, x) = lambda* exp(s x)` and its x-partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFunction {
    lambda_star: f64,
}

impl GFunction {
    pub fn new(lambda_star: f64) -> Result<Self> {
        if !lambda_star.is_finite() || lambda_star < 0.0 {
            return Err(Error::InvalidPenalty(format!("lambda must be >= 0, got {lambda_star}")));
        }
        Ok(Self { lambda_star })
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Order 0, 1 or 2 partial in `x`: `g`, `s g`, `s^2 g`.
    pub fn eval(&self, s: f64, x: f64, order: u8) -> Result<f64> {
        if order > 2 {
            return Err(Error::InvalidArgument(format!("g order must be 0, 1 or 2, got {order}")));
        }
        if self.lambda_star == 0.0 {
            return Ok(0.0);
        }
        let g = self.lambda_star * (s * x).exp();
        let v = g * s.powi(order as i32);
        if !g.is_finite() || !v.is_finite() {
            return Err(Error::Overflow { s, x });
        }
        Ok(v)
    }
}

/// Everything needed to evaluate the objective and its FOC at one time point.
#[derive(Debug, Clone)]
pub struct FocContext {
    s: f64,
    y: DVector<f64>,
    x: DMatrix<f64>,
    xh: DMatrix<f64>,
    spec: PenaltySpec,
    basis: BasisKind,
    gfun: GFunction,
    col_means: Vec<f64>,
    /// g(s, xbar_k)
    g_bar: Vec<f64>,
    /// s^2 sum_i h(X_ik) g(s, X_ik)
    sigma_term: Vec<f64>,
    /// sum_i Xh_ik^2
    col_sq: Vec<f64>,
}

impl FocContext {
    pub fn new(
        s: f64,
        y: DVector<f64>,
        x: DMatrix<f64>,
        spec: PenaltySpec,
        basis: BasisKind,
    ) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {s}")));
        }
        if y.len() != x.nrows() || x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Y has {} entries, X is {} x {}",
                y.len(),
                x.nrows(),
                x.ncols()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("time point data".into()));
        }
        spec.check_dims(x.ncols())?;
        let gfun = GFunction::new(spec.lambda_star())?;
        let xh = basis.apply(&x);
        let col_means = column_means(&x);
        let g_bar = col_means
            .iter()
            .map(|m| gfun.eval(s, *m, 0))
            .collect::<Result<Vec<_>>>()?;
        let mut sigma_term = Vec::with_capacity(x.ncols());
        for k in 0..x.ncols() {
            let mut acc = 0.0;
            for i in 0..x.nrows() {
                acc += xh[(i, k)] * gfun.eval(s, x[(i, k)], 2)?;
            }
            sigma_term.push(acc);
        }
        let col_sq = xh.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Self { s, y, x, xh, spec, basis, gfun, col_means, g_bar, sigma_term, col_sq })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn xh(&self) -> &DMatrix<f64> {
        &self.xh
    }

    pub fn spec(&self) -> &PenaltySpec {
        &self.spec
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn gfun(&self) -> GFunction {
        self.gfun
    }

    pub fn n_cases(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn col_means(&self) -> &[f64] {
        &self.col_means
    }

    /// `g_x` at the case-averaged covariate of column `k`.
    pub fn drift_weight(&self, k: usize) -> f64 {
        self.s * self.g_bar[k]
    }

    /// The `1/2 g_xx dsigma/dbeta_k` term.
    pub fn sigma_term(&self, k: usize) -> f64 {
        self.sigma_term[k]
    }

    /// `g + g_s` at the case-averaged covariate of column `k`.
    fn level(&self, k: usize) -> f64 {
        self.g_bar[k] * (1.0 + self.col_means[k])
    }

    pub fn rss(&self, beta: &[f64]) -> f64 {
        self.residuals(beta).norm_squared()
    }

    fn residuals(&self, beta: &[f64]) -> DVector<f64> {
        &self.y - &self.xh * DVector::from_column_slice(beta)
    }

    fn sigma_potential(&self, beta: &[f64]) -> f64 {
        beta.iter().zip(&self.sigma_term).map(|(b, t)| b * t).sum()
    }

    /// `sum_i Xh_ik (Y_i - sum_{j != k} Xh_ij beta_j)`
    fn partial_dot(&self, beta: &[f64], k: usize) -> f64 {
        let r = self.residuals(beta);
        self.xh.column(k).dot(&r) + self.col_sq[k] * beta[k]
    }
}

/// Objective along coordinate `k`: RSS plus the g-terms with the drift weighted
/// by `g_x(s, xbar_k)`. Its `beta_k` partial is exactly `-foc_residual(k)`.
pub fn f_coord(ctx: &FocContext, beta: &[f64], k: usize) -> f64 {
    ctx.rss(beta)
        + ctx.level(k)
        + ctx.drift_weight(k) * drift(&ctx.spec, beta, &ctx.col_means)
        + ctx.sigma_potential(beta)
}

/// Aggregate objective: RSS + g + g_s + g_x mu + 1/2 sum g_xx sigma, with the
/// column-dependent g-terms averaged over columns. Equals [`f_coord`] when J = 1.
pub fn f_eval(ctx: &FocContext, beta: &[f64]) -> Result<f64> {
    check_beta(ctx, beta)?;
    let j = ctx.n_covariates() as f64;
    let level = (0..ctx.n_covariates()).map(|k| ctx.level(k)).sum::<f64>() / j;
    let weight = (0..ctx.n_covariates()).map(|k| ctx.drift_weight(k)).sum::<f64>() / j;
    Ok(ctx.rss(beta)
        + level
        + weight * drift(&ctx.spec, beta, &ctx.col_means)
        + ctx.sigma_potential(beta))
}

fn check_beta(ctx: &FocContext, beta: &[f64]) -> Result<()> {
    if beta.len() != ctx.n_covariates() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, expected {}",
            beta.len(),
            ctx.n_covariates()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteValue("beta".into()));
    }
    Ok(())
}

/// FOC residual at coordinate `k` (0-based). Zero at a fitted coordinate.
pub fn foc_residual(ctx: &FocContext, beta: &[f64], k: usize) -> Result<f64> {
    check_beta(ctx, beta)?;
    let rss_part = 2.0 * ctx.xh.column(k).dot(&ctx.residuals(beta));
    let w = ctx.drift_weight(k);
    let drift_part = if w == 0.0 {
        0.0
    } else {
        w * drift_grad(&ctx.spec, beta, k, &ctx.col_means)?
    };
    Ok(rss_part - drift_part - ctx.sigma_term[k])
}

/// Residual of the equation the family's update rule actually solves. For
/// group lasso this is its block system; otherwise the FOC residual.
pub fn stationarity(ctx: &FocContext, beta: &[f64], k: usize) -> Result<f64> {
    match ctx.spec.family() {
        Family::GroupLasso { .. } => {
            let m = ctx.spec.block_size();
            let (a, rhs) = group_system(ctx, beta, k / m)?;
            let bb = DVector::from_column_slice(&beta[(k / m) * m..(k / m + 1) * m]);
            let lhs = &a * bb;
            Ok(2.0 * (lhs[k % m] - rhs[k % m]))
        }
        _ => foc_residual(ctx, beta, k),
    }
}

/// A coordinate update together with whether it lies on the requested branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub value: f64,
    pub consistent: bool,
}

/// Closed-form `beta_k` with the other coordinates held at `beta`.
///
/// `branch` (+1 / -1) selects the `beta_k > 0` or `beta_k < 0` formula for the
/// absolute-value families and is ignored by the others.
pub fn closed_update(ctx: &FocContext, beta: &[f64], k: usize, branch: i8) -> Result<f64> {
    closed_update_candidate(ctx, beta, k, branch).map(|c| c.value)
}

pub fn closed_update_candidate(
    ctx: &FocContext,
    beta: &[f64],
    k: usize,
    branch: i8,
) -> Result<Candidate> {
    check_beta(ctx, beta)?;
    let branch = if branch < 0 { -1.0 } else { 1.0 };
    let d = ctx.col_sq[k];
    let p2 = 2.0 * ctx.partial_dot(beta, k) - ctx.sigma_term[k];
    let w = ctx.drift_weight(k);

    if let Family::GroupLasso { .. } = ctx.spec.family() {
        let m = ctx.spec.block_size();
        let block = group_update(ctx, beta, k / m)?;
        return Ok(Candidate { value: block[k % m], consistent: true });
    }

    // With g_x = 0 the penalty drops out of the FOC and every family shares
    // the partial-residual least-squares update.
    if w == 0.0 {
        return Ok(Candidate { value: linear_solve(p2, d, 0.0, 0.0, 0.0, k)?, consistent: true });
    }

    let on_branch = |v: f64| v != 0.0 && (v > 0.0) == (branch > 0.0);
    match ctx.spec.family() {
        Family::Ridge => Ok(Candidate { value: linear_solve(p2, d, w, 0.0, 2.0, k)?, consistent: true }),
        Family::SplineCubic => {
            let a0 = 2.0 + 6.0 * ctx.col_means[k];
            Ok(Candidate { value: linear_solve(p2, d, w, a0, 0.0, k)?, consistent: true })
        }
        Family::Lasso => {
            let v = linear_solve(p2, d, w, branch, 0.0, k)?;
            Ok(Candidate { value: v, consistent: on_branch(v) })
        }
        Family::ElasticNet { alpha } => {
            let v = linear_solve(p2, d, w, (1.0 - alpha) * branch, 2.0 * alpha, k)?;
            Ok(Candidate { value: v, consistent: on_branch(v) })
        }
        Family::FusedLasso { alpha } => fused_update(ctx, beta, k, branch, *alpha, p2, d, w),
        Family::LpNorm { .. } | Family::Bridge => branch_root(ctx, beta, k, branch, p2, d, w),
        Family::GroupLasso { .. } => unreachable!(),
    }
}

/// Solves `p2 - 2 d b - w (a0 + a1 b) = 0` for `b`.
fn linear_solve(p2: f64, d: f64, w: f64, a0: f64, a1: f64, k: usize) -> Result<f64> {
    let denom = 2.0 * d + w * a1;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ZeroDenominator(k));
    }
    let v = (p2 - w * a0) / denom;
    if !v.is_finite() {
        return Err(Error::ZeroDenominator(k));
    }
    Ok(v)
}

/// Fused lasso: on the branch half-line the drift gradient is piecewise
/// constant with breaks at the neighbouring coefficients. Each piece gets its
/// own linear update; the lowest-objective update that stays inside its piece
/// wins.
#[allow(clippy::too_many_arguments)]
fn fused_update(
    ctx: &FocContext,
    beta: &[f64],
    k: usize,
    branch: f64,
    alpha: f64,
    p2: f64,
    d: f64,
    w: f64,
) -> Result<Candidate> {
    let neighbors: Vec<f64> = fused_neighbors(beta, k).collect();
    let mut cuts = vec![0.0, branch * f64::INFINITY];
    cuts.extend(neighbors.iter().copied().filter(|n| *n * branch > 0.0));
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();

    let mut best: Option<(f64, f64)> = None;
    let mut fallback = None;
    let mut trial = beta.to_vec();
    for piece in cuts.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => unreachable!(),
        };
        let slope: f64 = neighbors.iter().map(|n| if probe > *n { 1.0 } else { -1.0 }).sum();
        let a0 = alpha * branch + (1.0 - alpha) * slope;
        let v = linear_solve(p2, d, w, a0, 0.0, k)?;
        let current = beta[k];
        if fallback.is_none() || (current > lo && current < hi) {
            fallback = Some(v);
        }
        if v > lo && v < hi {
            trial[k] = v;
            let f = f_coord(ctx, &trial, k);
            if best.is_none_or(|(bf, _)| f < bf) {
                best = Some((f, v));
            }
        }
    }
    Ok(match best {
        Some((_, v)) => Candidate { value: v, consistent: true },
        None => Candidate { value: fallback.unwrap_or(0.0), consistent: false },
    })
}

const ROOT_SCAN_POINTS: usize = 256;

/// L^p and bridge: the drift gradient is nonlinear in `beta_k`, so the branch
/// equation is solved numerically. On the positive branch the gradient is
/// non-negative, so every root lies in `(0, max(p2, 0) / 2d]`; the negative
/// branch mirrors this. Roots where the objective has a local minimum are
/// bracketed on a geometric scan and bisected; the lowest objective wins.
fn branch_root(
    ctx: &FocContext,
    beta: &[f64],
    k: usize,
    branch: f64,
    p2: f64,
    d: f64,
    w: f64,
) -> Result<Candidate> {
    if d == 0.0 {
        return Err(Error::ZeroDenominator(k));
    }
    let lagged = Candidate { value: (p2 - w * branch) / (2.0 * d), consistent: false };
    let bound = (branch * p2).max(0.0) / (2.0 * d);
    if bound == 0.0 || !bound.is_finite() {
        return Ok(lagged);
    }
    let mut trial = beta.to_vec();
    let mut phi = |b: f64| -> Result<f64> {
        trial[k] = b;
        Ok(p2 - 2.0 * d * b - w * drift_grad(&ctx.spec, &trial, k, &ctx.col_means)?)
    };

    // magnitudes from bound * 1e-12 up to just past bound
    let top = bound * (1.0 + 1e-9) + f64::MIN_POSITIVE;
    let ratio = (top / (bound * 1e-12)).powf(1.0 / (ROOT_SCAN_POINTS - 1) as f64);
    let mut mags: Vec<f64> = (0..ROOT_SCAN_POINTS)
        .map(|i| bound * 1e-12 * ratio.powi(i as i32))
        .collect();
    mags[ROOT_SCAN_POINTS - 1] = top;
    let mut pts: Vec<f64> = mags.iter().map(|m| branch * m).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    let vals = pts.iter().map(|b| phi(*b)).collect::<Result<Vec<_>>>()?;

    let mut roots = Vec::new();
    for i in 0..pts.len() - 1 {
        if vals[i] > 0.0 && vals[i + 1] <= 0.0 {
            let (mut lo, mut hi) = (pts[i], pts[i + 1]);
            if vals[i + 1] == 0.0 {
                roots.push(hi);
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if phi(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for r in roots {
        trial[k] = r;
        let f = f_coord(ctx, &trial, k);
        if best.is_none_or(|(bf, _)| f < bf) {
            best = Some((f, r));
        }
    }
    Ok(match best {
        Some((_, v)) => Candidate { value: v, consistent: true },
        None => lagged,
    })
}

/// Group-lasso block system `A beta_b = rhs` for block `block`:
///
/// ```text
/// A   = Xh_b' Xh_b + diag(g_b) (K_b + K_b')
/// rhs = 1/2 [ 2 Xh_b' r_b - s diag(g_b) sum_{j != b} (K_j + K_j') beta_j - sigma_b ]
/// ```
///
/// where `r_b` is the partial residual without block `b` and `g_b` holds
/// `g(s, xbar_c)` for the columns of the block. Unlike the FOC, the penalty
/// matrix in `A` carries no factor of `s`.
pub fn group_system(
    ctx: &FocContext,
    beta: &[f64],
    block: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let blocks = match ctx.spec.family() {
        Family::GroupLasso { blocks } => blocks,
        _ => return Err(Error::InvalidArgument("group system needs a group lasso spec".into())),
    };
    let m = blocks[0].nrows();
    if block >= blocks.len() {
        return Err(Error::InvalidArgument(format!("group {block} out of range")));
    }
    let cols = block * m..(block + 1) * m;
    let xb = ctx.xh.columns(cols.start, m);
    let mut partial = ctx.residuals(beta);
    for (c, col) in cols.clone().enumerate() {
        partial += xb.column(c) * beta[col];
    }
    let g_b: Vec<f64> = cols.clone().map(|c| ctx.g_bar[c]).collect();
    let sym = |kmat: &DMatrix<f64>| kmat + kmat.transpose();

    let mut a = xb.transpose() * xb;
    let kb = sym(&blocks[block]);
    for r in 0..m {
        for c in 0..m {
            a[(r, c)] += g_b[r] * kb[(r, c)];
        }
    }
    let mut other = DVector::zeros(m);
    for (j, kmat) in blocks.iter().enumerate() {
        if j != block {
            other += sym(kmat) * DVector::from_column_slice(&beta[j * m..(j + 1) * m]);
        }
    }
    let mut rhs = 2.0 * xb.transpose() * partial;
    for (r, col) in cols.enumerate() {
        rhs[r] -= ctx.s * g_b[r] * other[r] + ctx.sigma_term[col];
    }
    Ok((a, rhs * 0.5))
}

/// Solves the block system for group `block` by LU.
pub fn group_update(ctx: &FocContext, beta: &[f64], block: usize) -> Result<DVector<f64>> {
    check_beta(ctx, beta)?;
    let (a, rhs) = group_system(ctx, beta, block)?;
    let scale = a.amax();
    let lu = a.lu();
    let sol = lu.solve(&rhs).ok_or(Error::SingularSystem(block))?;
    let u_min = (0..rhs.len()).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if sol.iter().any(|v| !v.is_finite()) || u_min <= 1e-14 * scale {
        return Err(Error::SingularSystem(block));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Family;
    use std::f64::consts::E;

    fn scalar_ctx(family: Family, lambda: f64, s: f64, x: f64, y: f64) -> FocContext {
        FocContext::new(
            s,
            DVector::from_element(1, y),
            DMatrix::from_element(1, 1, x),
            PenaltySpec::new(family, lambda).unwrap(),
            BasisKind::Identity,
        )
        .unwrap()
    }

    #[test]
    fn g_examples() {
        let g = GFunction::new(1.0).unwrap();
        assert_eq!(g.eval(0.0, 7.0, 0).unwrap(), 1.0);
        let zero = GFunction::new(0.0).unwrap();
        for order in 0..3 {
            assert_eq!(zero.eval(3.0, 1e6, order).unwrap(), 0.0);
        }
        let half = GFunction::new(0.5).unwrap();
        assert!((half.eval(1.0, 1.0, 1).unwrap() - 1.359140914).abs() < 1e-9);
        assert!(matches!(g.eval(10.0, 100.0, 0), Err(Error::Overflow { .. })));
        assert!(g.eval(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn g_partials_match_finite_differences() {
        let g = GFunction::new(0.8).unwrap();
        for &(s, x) in &[(0.3, 1.2), (1.5, -0.7), (2.0, 0.4)] {
            let h = 1e-5;
            let f = |x: f64| g.eval(s, x, 0).unwrap();
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let h2 = 1e-3;
            let d2 = (f(x + h2) - 2.0 * f(x) + f(x - h2)) / (h2 * h2);
            let a1 = g.eval(s, x, 1).unwrap();
            let a2 = g.eval(s, x, 2).unwrap();
            assert!((d1 - a1).abs() <= 1e-7 * a1.abs(), "{d1} {a1}");
            assert!((d2 - a2).abs() <= 1e-5 * a2.abs(), "{d2} {a2}");
        }
    }

    #[test]
    fn f_eval_without_penalty_is_rss() {
        let ctx = FocContext::new(
            0.7,
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 2.0, -1.0, 1.0]),
            PenaltySpec::new(Family::Lasso, 0.0).unwrap(),
            BasisKind::Identity,
        )
        .unwrap();
        let beta = [0.3, -0.4];
        let rss = (1.0f64 - 0.3).powi(2) + (-2.0f64 - (0.15 - 0.8)).powi(2) + (0.5f64 - (-0.3 - 0.4)).powi(2);
        assert!((f_eval(&ctx, &beta).unwrap() - rss).abs() < 1e-14);
    }

    #[test]
    fn f_eval_scalar_ridge_terms() {
        // RSS = 1, g = 1, g_s = x g = 1, s = 0 kills g_x mu and the sigma term
        let ctx = scalar_ctx(Family::Ridge, 1.0, 0.0, 1.0, 0.0);
        assert_eq!(f_eval(&ctx, &[1.0]).unwrap(), 3.0);
        assert_eq!(foc_residual(&ctx, &[1.0], 0).unwrap(), -2.0);
    }

    #[test]
    fn ridge_scalar_golden_value() {
        let ctx = scalar_ctx(Family::Ridge, 0.5, 1.0, 1.0, 1.0);
        let g = 0.5 * E;
        let plug_in = (2.0 - g) / (2.0 * (1.0 + g));
        let b = closed_update(&ctx, &[0.0], 0, 1).unwrap();
        assert!((b - plug_in).abs() < 1e-15);
        assert!((b - 0.13582).abs() < 1e-5);
        assert!(foc_residual(&ctx, &[b], 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_has_zero_residual() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let beta = [1.5, -0.5];
        let y = &x * DVector::from_column_slice(&beta);
        for fam in [Family::Lasso, Family::Ridge, Family::Bridge] {
            let ctx = FocContext::new(0.4, y.clone(), x.clone(), PenaltySpec::new(fam, 0.0).unwrap(), BasisKind::Identity).unwrap();
            for k in 0..2 {
                assert!(foc_residual(&ctx, &beta, k).unwrap().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn at_time_zero_every_family_is_ols() {
        let fams = [
            Family::Lasso,
            Family::Ridge,
            Family::LpNorm { p: 1.7 },
            Family::ElasticNet { alpha: 0.4 },
            Family::FusedLasso { alpha: 0.4 },
            Family::Bridge,
            Family::SplineCubic,
        ];
        let y = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let x = DMatrix::from_column_slice(3, 1, &[0.5, 1.5, -1.0]);
        let ols = x.column(0).dot(&y) / x.column(0).norm_squared();
        for fam in fams {
            let ctx = FocContext::new(0.0, y.clone(), x.clone(), PenaltySpec::new(fam, 2.0).unwrap(), BasisKind::Identity).unwrap();
            for branch in [1, -1] {
                let b = closed_update(&ctx, &[0.3], 0, branch).unwrap();
                assert!((b - ols).abs() < 1e-14);
            }
        }
        // group lasso keeps lambda* in its block denominator even at s = 0
        let ctx = FocContext::new(0.0, y, x, PenaltySpec::new(Family::group_identity(1, 1), 2.0).unwrap(), BasisKind::Identity).unwrap();
        let b = closed_update(&ctx, &[0.3], 0, 1).unwrap();
        assert!((b - ols).abs() > 1e-3);
    }

    #[test]
    fn lasso_branches_reflect_under_response_negation() {
        // beta_+(-Y) + beta_-(Y) = -2 sigma_k / (2 D): only the sigma term
        // breaks the antisymmetry
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.5, 1.0, 2.0, 0.3]);
        let y = DVector::from_vec(vec![1.0, -0.4, 2.2]);
        let spec = PenaltySpec::new(Family::Lasso, 0.3).unwrap();
        let pos = FocContext::new(0.8, -y.clone(), x.clone(), spec.clone(), BasisKind::Identity).unwrap();
        let neg = FocContext::new(0.8, y, x.clone(), spec, BasisKind::Identity).unwrap();
        let beta = [0.5, -0.25];
        let neg_beta = [-0.5, 0.25];
        let a = closed_update(&pos, &neg_beta, 0, 1).unwrap();
        let b = closed_update(&neg, &beta, 0, -1).unwrap();
        let d = x.column(0).norm_squared();
        assert!((a + b + pos.sigma_term(0) / d).abs() < 1e-13);
    }

    #[test]
    fn group_m1_denominator_differs_from_ridge_by_k_lambda() {
        let ctx = FocContext::new(
            0.0,
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
            PenaltySpec::new(Family::group_identity(1, 1), 0.7).unwrap(),
            BasisKind::Identity,
        )
        .unwrap();
        let (a, _) = group_system(&ctx, &[0.1], 0).unwrap();
        let ridge_denominator = 1.25 + ctx.s() * 0.7;
        assert!((a[(0, 0)] - ridge_denominator - 2.0 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn group_without_penalty_is_ols_block() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 0.2, 1.0, -0.5, 0.4, 1.2, -0.8]);
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0, 2.0]);
        let ctx = FocContext::new(0.5, y.clone(), x.clone(), PenaltySpec::new(Family::group_identity(2, 1), 0.0).unwrap(), BasisKind::Identity).unwrap();
        let b = group_update(&ctx, &[0.0, 0.0], 0).unwrap();
        let ols = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
        assert!((b - ols).amax() < 1e-12);
    }

    #[test]
    fn singular_group_system_is_reported() {
        let ctx = FocContext::new(
            0.5,
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::zeros(2, 2),
            PenaltySpec::new(Family::group_identity(2, 1), 0.0).unwrap(),
            BasisKind::Identity,
        )
        .unwrap();
        assert_eq!(group_update(&ctx, &[0.0, 0.0], 0), Err(Error::SingularSystem(0)));
    }

    #[test]
    fn zero_column_gives_zero_denominator() {
        let ctx = FocContext::new(
            0.5,
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 0.0]),
            PenaltySpec::new(Family::Lasso, 0.3).unwrap(),
            BasisKind::Identity,
        )
        .unwrap();
        assert_eq!(closed_update(&ctx, &[1.0], 0, 1), Err(Error::ZeroDenominator(0)));
    }

    #[test]
    fn bridge_and_lp_updates_zero_the_residual() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 0.2, 1.0, -0.5, 0.4, 1.2, -0.8]);
        let y = DVector::from_vec(vec![2.0, 1.0, -1.0, 3.0]);
        for fam in [Family::Bridge, Family::LpNorm { p: 1.5 }, Family::LpNorm { p: 0.6 }] {
            let ctx = FocContext::new(0.6, y.clone(), x.clone(), PenaltySpec::new(fam, 0.2).unwrap(), BasisKind::Identity).unwrap();
            let mut beta = vec![1.0, 0.8];
            let c = closed_update_candidate(&ctx, &beta, 0, 1).unwrap();
            assert!(c.consistent);
            beta[0] = c.value;
            assert!(foc_residual(&ctx, &beta, 0).unwrap().abs() < 1e-9);
        }
    }
}
