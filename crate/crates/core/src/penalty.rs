//! Drift and diffusion coefficients of the error dynamics for each penalty
//! family, together with their coefficient gradients.
//!
//! The drift is the scalar penalty itself (sum of |beta|, sum of squares, ...).
//! The diffusion is `2 * sum_i sum_k beta_k h(X_ik)` for every family.
//!
//! `col_means` carries the case-averaged raw covariate of each column. Only
//! the cubic spline drift uses it (`sum_k (2 + 6 xbar_k) beta_k`).

use nalgebra::DMatrix;

use crate::domain::{BasisKind, Family, PenaltySpec};
use crate::error::{Error, Result};

#[inline]
fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn drift(spec: &PenaltySpec, beta: &[f64], col_means: &[f64]) -> f64 {
    match spec.family() {
        Family::Lasso => beta.iter().map(|b| b.abs()).sum(),
        Family::Ridge => beta.iter().map(|b| b * b).sum(),
        Family::LpNorm { p } => beta.iter().map(|b| b.abs().powf(*p)).sum::<f64>().powf(1.0 / p),
        Family::ElasticNet { alpha } => beta
            .iter()
            .map(|b| (1.0 - alpha) * b.abs() + alpha * b * b)
            .sum(),
        Family::FusedLasso { alpha } => {
            let l1: f64 = beta.iter().map(|b| b.abs()).sum();
            let tv: f64 = beta.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            alpha * l1 + (1.0 - alpha) * tv
        }
        Family::Bridge => {
            let s: f64 = beta.iter().map(|b| b.abs().sqrt()).sum();
            s * s
        }
        Family::GroupLasso { blocks } => {
            let m = blocks[0].nrows();
            blocks
                .iter()
                .enumerate()
                .map(|(g, k)| {
                    let b = &beta[g * m..(g + 1) * m];
                    let mut q = 0.0;
                    for r in 0..m {
                        for c in 0..m {
                            q += b[r] * k[(r, c)] * b[c];
                        }
                    }
                    q
                })
                .sum()
        }
        Family::SplineCubic => beta
            .iter()
            .zip(col_means)
            .map(|(b, xm)| (2.0 + 6.0 * xm) * b)
            .sum(),
    }
}

/// Partial derivative of the drift with respect to coordinate `k` (0-based)
/// on the smooth branch containing `beta`.
pub fn drift_grad(spec: &PenaltySpec, beta: &[f64], k: usize, col_means: &[f64]) -> Result<f64> {
    let bk = beta[k];
    let nonzero = |v: f64| if v == 0.0 { Err(Error::NonDifferentiableAtZero(k)) } else { Ok(v) };
    match spec.family() {
        Family::Lasso => Ok(sign(nonzero(bk)?)),
        Family::Ridge => Ok(2.0 * bk),
        Family::LpNorm { p } => {
            nonzero(bk)?;
            let total: f64 = beta.iter().map(|b| b.abs().powf(*p)).sum();
            Ok(total.powf(1.0 / p - 1.0) * bk.abs().powf(p - 1.0) * sign(bk))
        }
        Family::ElasticNet { alpha } => Ok((1.0 - alpha) * sign(nonzero(bk)?) + 2.0 * alpha * bk),
        Family::FusedLasso { alpha } => {
            let mut g = alpha * sign(nonzero(bk)?);
            for n in fused_neighbors(beta, k) {
                if bk == n {
                    return Err(Error::TiedFusedPair(k));
                }
                g += (1.0 - alpha) * sign(bk - n);
            }
            Ok(g)
        }
        Family::Bridge => {
            nonzero(bk)?;
            let s: f64 = beta.iter().map(|b| b.abs().sqrt()).sum();
            Ok(s / bk.abs().sqrt() * sign(bk))
        }
        Family::GroupLasso { blocks } => {
            let m = blocks[0].nrows();
            let (g, r) = (k / m, k % m);
            let kmat = &blocks[g];
            Ok((0..m)
                .map(|c| (kmat[(r, c)] + kmat[(c, r)]) * beta[g * m + c])
                .sum())
        }
        Family::SplineCubic => Ok(2.0 + 6.0 * col_means[k]),
    }
}

/// Values of the fused neighbours of coordinate `k` (previous and next).
pub fn fused_neighbors(beta: &[f64], k: usize) -> impl Iterator<Item = f64> + '_ {
    let prev = (k > 0).then(|| beta[k - 1]);
    let next = (k + 1 < beta.len()).then(|| beta[k + 1]);
    prev.into_iter().chain(next)
}

/// `2 * sum_i sum_k beta_k Xh_ik` for basis-applied covariates `xh`.
pub fn diffusion(beta: &[f64], xh: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (k, b) in beta.iter().enumerate() {
        total += b * xh.column(k).sum();
    }
    2.0 * total
}

/// `2 * sum_i h(X_ik)`.
pub fn diffusion_grad(x: &DMatrix<f64>, k: usize, basis: BasisKind) -> f64 {
    2.0 * x.column(k).iter().map(|v| basis.h(*v)).sum::<f64>()
}

pub fn apply_basis(x: &DMatrix<f64>, basis: BasisKind) -> DMatrix<f64> {
    basis.apply(x)
}

/// Case-averaged raw covariate of each column.
pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}
