//! One-dimensional transition-function propagation by direct quadrature, and
//! the residual of the reduced evolution `dPsi/ds = -f Psi`.
//!
//! A step maps
//!
//! ```text
//! Psi'(x) = (1 / N_s(x)) * integral K(x, xi) exp(-eps f(xi)) Psi(xi) dxi
//! N_s(x)  = integral K(x, xi) Psi(xi) dxi / Psi(x)
//! ```
//!
//! with the heat kernel `K = exp(-(x - xi)^2 / (2 eps))`. The integral runs over
//! the largest window symmetric about `x` that fits inside the node interval
//! (capped at ten kernel widths), so the odd moments of the kernel vanish and
//! the step is first-order consistent up to the boundary. The normalisation
//! makes the zero-potential step the identity.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveGrid {
    x: Vec<f64>,
    psi: Vec<f64>,
    s: f64,
}

impl WaveGrid {
    pub fn new(x: Vec<f64>, psi: Vec<f64>, s: f64) -> Result<Self> {
        if x.len() < 2 || x.len() != psi.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes and {} values",
                x.len(),
                psi.len()
            )));
        }
        if x.iter().chain(&psi).any(|v| !v.is_finite()) || !s.is_finite() {
            return Err(Error::NonFiniteValue("wave grid".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        if let Some(i) = psi.iter().position(|p| *p <= 0.0) {
            return Err(Error::NegativePsi(i));
        }
        Ok(Self { x, psi, s })
    }

    /// Uniform nodes on `[lo, hi]` with `psi = init(x)`.
    pub fn uniform(lo: f64, hi: f64, n: usize, init: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidGrid(format!("need n >= 2 and lo < hi (n = {n}, [{lo}, {hi}])")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let x: Vec<f64> = (0..n).map(|i| if i == n - 1 { hi } else { lo + h * i as f64 }).collect();
        let psi = x.iter().map(|v| init(*v)).collect();
        Self::new(x, psi, 0.0)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn s(&self) -> f64 {
        self.s
    }
}

const KERNEL_WIDTHS: f64 = 10.0;

pub fn transition_step(w: &WaveGrid, f: impl Fn(f64) -> f64, epsilon: f64) -> Result<WaveGrid> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let x = &w.x;
    let n = x.len();
    let fvals: Vec<f64> = x.iter().map(|v| f(*v)).collect();
    if let Some(i) = fvals.iter().position(|v| !v.is_finite()) {
        return Err(Error::UnboundedF(i));
    }
    let damp: Vec<f64> = fvals.iter().map(|v| (-epsilon * v).exp()).collect();
    let (lo, hi) = (x[0], x[n - 1]);
    let cap = KERNEL_WIDTHS * epsilon.sqrt();
    let slack = 1e-12 * (hi - lo);

    let mut psi = Vec::with_capacity(n);
    for i in 0..n {
        let half = (x[i] - lo).min(hi - x[i]).min(cap);
        let a = x.partition_point(|v| *v < x[i] - half - slack);
        let b = x.partition_point(|v| *v <= x[i] + half + slack);
        let ratio = if b - a <= 1 {
            damp[i]
        } else {
            let (mut num, mut den) = (0.0, 0.0);
            for j in a..b - 1 {
                let h = 0.5 * (x[j + 1] - x[j]);
                let k0 = kernel(x[i], x[j], epsilon);
                let k1 = kernel(x[i], x[j + 1], epsilon);
                num += h * (k0 * damp[j] * w.psi[j] + k1 * damp[j + 1] * w.psi[j + 1]);
                den += h * (k0 * w.psi[j] + k1 * w.psi[j + 1]);
            }
            num / den
        };
        let v = w.psi[i] * ratio;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NegativePsi(i));
        }
        psi.push(v);
    }
    Ok(WaveGrid { x: x.clone(), psi, s: w.s + epsilon })
}

#[inline]
fn kernel(x: f64, xi: f64, epsilon: f64) -> f64 {
    let d = x - xi;
    (-d * d / (2.0 * epsilon)).exp()
}

/// `max_x |(Psi_after - Psi_before) / eps + f Psi_before|`.
pub fn schrodinger_residual(
    before: &WaveGrid,
    after: &WaveGrid,
    f: impl Fn(f64) -> f64,
    epsilon: f64,
) -> Result<f64> {
    if before.x != after.x {
        return Err(Error::GridMismatch("wave grids have different nodes".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut worst: f64 = 0.0;
    for i in 0..before.x.len() {
        let fx = f(before.x[i]);
        if !fx.is_finite() {
            return Err(Error::UnboundedF(i));
        }
        let r = (after.psi[i] - before.psi[i]) / epsilon + fx * before.psi[i];
        worst = worst.max(r.abs());
    }
    Ok(worst)
}
