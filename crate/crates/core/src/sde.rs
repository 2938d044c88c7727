//! Euler–Maruyama simulation of the error dynamics `dU = mu ds + sigma dB`,
//! synthetic panel generation and the time-integrated RSS objective.
//!
//! Normal draws come from a counter-based generator: the draw for
//! `(seed, stream, counter)` is a pure function of the key, so paths can be
//! simulated in any order or in parallel with bit-identical results.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{BasisKind, CoefPath, Panel, PenaltySpec, TimeGrid};
use crate::error::{Error, Result};
use crate::penalty::{column_means, diffusion, drift};

/// Standard normals keyed by `(stream, counter)`.
///
/// Each key maps to a fixed pair of 64-bit words of the ChaCha8 keystream for
/// `stream`, transformed by Box–Muller. Distinct keys read disjoint words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

const WORDS_PER_DRAW: u128 = 4;

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn keystream(&self, stream: u64, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(counter as u128 * WORDS_PER_DRAW);
        rng
    }

    pub fn normal(&self, stream: u64, counter: u64) -> f64 {
        let mut rng = self.keystream(stream, counter);
        box_muller(rng.next_u64(), rng.next_u64())
    }

    /// `n` consecutive draws `counter = start..start + n` of one stream.
    pub fn normals(&self, stream: u64, start: u64, n: usize) -> Vec<f64> {
        let mut rng = self.keystream(stream, start);
        (0..n).map(|_| box_muller(rng.next_u64(), rng.next_u64())).collect()
    }
}

fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((a >> 11) as f64 + 1.0) * SCALE; // (0, 1]
    let u2 = (b >> 11) as f64 * SCALE; // [0, 1)
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Simulated sample paths of U over a grid; `paths[p][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPaths {
    pub grid: TimeGrid,
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
}

impl ErrorPaths {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// Values of every path at grid index `t`.
    pub fn at(&self, t: usize) -> impl Iterator<Item = f64> + '_ {
        self.paths.iter().map(move |p| p[t])
    }
}

/// One explicit step.
#[inline]
pub fn em_step(u: f64, mu: f64, sigma: f64, dt: f64, dw: f64) -> f64 {
    u + mu * dt + sigma * dw
}

/// Euler–Maruyama over `grid` with coefficients `coeff(step, s, u) -> (mu, sigma)`
/// evaluated at the left endpoint of each step. Path `p` uses stream `p`.
pub fn euler_maruyama<F>(grid: &TimeGrid, n_paths: usize, seed: u64, u0: f64, coeff: F) -> Result<ErrorPaths>
where
    F: Fn(usize, f64, f64) -> (f64, f64) + Sync,
{
    if n_paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if !u0.is_finite() {
        return Err(Error::NonFiniteValue("U0".into()));
    }
    let rng = CounterRng::new(seed);
    let t = grid.points();
    let steps: Vec<f64> = grid.steps().collect();
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let z = rng.normals(p as u64, 0, steps.len());
            let mut path = Vec::with_capacity(t.len());
            let mut u = u0;
            path.push(u);
            for (step, dt) in steps.iter().enumerate() {
                let (mu, sigma) = coeff(step, t[step], u);
                u = em_step(u, mu, sigma, *dt, dt.sqrt() * z[step]);
                path.push(u);
            }
            path
        })
        .collect();
    if paths.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("simulated error path".into()));
    }
    Ok(ErrorPaths { grid: grid.clone(), paths, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub u0: f64,
    /// Multiplies both drift and diffusion; 0 switches the noise off.
    pub noise_scale: f64,
}

impl Default for SdeOptions {
    fn default() -> Self {
        Self { n_paths: 1, seed: 0, u0: 0.0, noise_scale: 1.0 }
    }
}

/// Drift and diffusion at each grid point for the given coefficients and designs.
pub fn coefficients(
    beta_path: &CoefPath,
    designs: &[DMatrix<f64>],
    spec: &PenaltySpec,
    basis: BasisKind,
) -> Result<Vec<(f64, f64)>> {
    if designs.len() != beta_path.grid().len() {
        return Err(Error::GridMismatch(format!(
            "{} designs for {} grid points",
            designs.len(),
            beta_path.grid().len()
        )));
    }
    spec.check_dims(beta_path.n_covariates())?;
    beta_path
        .betas()
        .iter()
        .zip(designs)
        .map(|(b, x)| {
            if x.ncols() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "design has {} columns, beta has {}",
                    x.ncols(),
                    b.len()
                )));
            }
            let mu = drift(spec, b.as_slice(), &column_means(x));
            let sigma = diffusion(b.as_slice(), &basis.apply(x));
            Ok((mu, sigma))
        })
        .collect()
}

/// Simulates `opts.n_paths` error paths driven by the penalty drift and the
/// diffusion of `beta_path` over `designs`, frozen at each step's left endpoint.
pub fn simulate_errors(
    beta_path: &CoefPath,
    designs: &[DMatrix<f64>],
    spec: &PenaltySpec,
    basis: BasisKind,
    opts: &SdeOptions,
) -> Result<ErrorPaths> {
    let coeffs = coefficients(beta_path, designs, spec, basis)?;
    let c = opts.noise_scale;
    euler_maruyama(beta_path.grid(), opts.n_paths, opts.seed, opts.u0, |step, _, _| {
        let (mu, sigma) = coeffs[step];
        (c * mu, c * sigma)
    })
}

/// Covariate design for panel generation.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// One N x J matrix per grid point.
    Given(Vec<DMatrix<f64>>),
    /// Independent N(mean, sd^2) entries, fresh at every grid point.
    Gaussian { n_cases: usize, n_covariates: usize, mean: f64, sd: f64, seed: u64 },
}

impl Design {
    pub fn realize(&self, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
        match self {
            Design::Given(xs) => {
                if xs.len() != grid.len() {
                    return Err(Error::GridMismatch(format!(
                        "{} designs for {} grid points",
                        xs.len(),
                        grid.len()
                    )));
                }
                Ok(xs.clone())
            }
            Design::Gaussian { n_cases, n_covariates, mean, sd, seed } => {
                if *n_cases == 0 || *n_covariates == 0 {
                    return Err(Error::DimensionMismatch("design needs N >= 1 and J >= 1".into()));
                }
                // separate key space from the error paths
                let rng = CounterRng::new(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
                Ok((0..grid.len())
                    .map(|t| {
                        let z = rng.normals(t as u64, 0, n_cases * n_covariates);
                        DMatrix::from_row_iterator(*n_cases, *n_covariates, z.into_iter().map(|v| mean + sd * v))
                    })
                    .collect())
            }
        }
    }
}

/// `Y_i(s) = sum_k beta_k(s) h(X_ik(s)) + U_i(s)` with one independent error
/// path per case.
pub fn generate_panel(
    beta_true: &CoefPath,
    design: &Design,
    spec: &PenaltySpec,
    basis: BasisKind,
    opts: &SdeOptions,
) -> Result<Panel> {
    let grid = beta_true.grid();
    let designs = design.realize(grid)?;
    let n = designs[0].nrows();
    let errors = simulate_errors(
        beta_true,
        &designs,
        spec,
        basis,
        &SdeOptions { n_paths: n, ..opts.clone() },
    )?;
    let ys = designs
        .iter()
        .zip(beta_true.betas())
        .enumerate()
        .map(|(t, (x, b))| {
            let signal = basis.apply(x) * b;
            signal + DVector::from_iterator(n, errors.at(t))
        })
        .collect();
    Panel::new(grid.clone(), ys, designs)
}

/// Trapezoid integral over the grid of `sum_i (Y_i - sum_k beta_k h(X_ik))^2`.
pub fn objective_eval(panel: &Panel, beta_path: &CoefPath, basis: BasisKind) -> Result<f64> {
    if panel.grid() != beta_path.grid() {
        return Err(Error::GridMismatch("panel and coefficient path grids differ".into()));
    }
    if panel.n_covariates() != beta_path.n_covariates() {
        return Err(Error::DimensionMismatch("panel and path covariate counts differ".into()));
    }
    let rss: Vec<f64> = (0..panel.grid().len())
        .map(|t| (panel.y(t) - basis.apply(panel.x(t)) * beta_path.beta(t)).norm_squared())
        .collect();
    panel.grid().trapezoid(&rss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Family;
    use std::collections::HashSet;

    fn const_path(grid: &TimeGrid, beta: &[f64]) -> CoefPath {
        CoefPath::from_betas(grid.clone(), vec![DVector::from_column_slice(beta); grid.len()]).unwrap()
    }

    #[test]
    fn draws_are_pure_functions_of_the_key() {
        let rng = CounterRng::new(42);
        let seq = rng.normals(3, 5, 10);
        for (i, v) in seq.iter().enumerate() {
            assert_eq!(rng.normal(3, 5 + i as u64).to_bits(), v.to_bits());
        }
        assert_ne!(rng.normal(3, 5), CounterRng::new(43).normal(3, 5));
    }

    #[test]
    fn disjoint_keys_never_collide() {
        let rng = CounterRng::new(7);
        let mut seen = HashSet::new();
        let mut collisions = 0;
        for stream in 0..64u64 {
            for v in rng.normals(stream, 0, 256) {
                if !seen.insert(v.to_bits()) {
                    collisions += 1;
                }
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn zero_coefficients_keep_u0() {
        let grid = TimeGrid::uniform(0.0, 1.0, 11).unwrap();
        let x = vec![DMatrix::from_element(3, 2, 1.5); 11];
        let spec = PenaltySpec::new(Family::Lasso, 1.0).unwrap();
        let opts = SdeOptions { n_paths: 5, seed: 1, u0: 0.25, noise_scale: 1.0 };
        let e = simulate_errors(&const_path(&grid, &[0.0, 0.0]), &x, &spec, BasisKind::Identity, &opts).unwrap();
        assert!(e.paths.iter().flatten().all(|u| *u == 0.25));
    }

    #[test]
    fn constant_drift_integrates_exactly() {
        let grid = TimeGrid::uniform(0.0, 2.0, 9).unwrap();
        let e = euler_maruyama(&grid, 3, 9, 1.0, |_, _, _| (0.5, 0.0)).unwrap();
        for p in &e.paths {
            assert_eq!(p[0], 1.0);
            assert!((p[8] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let grid = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let x = vec![DMatrix::from_element(1, 1, 1.0); 3];
        let spec = PenaltySpec::new(Family::Ridge, 1.0).unwrap();
        let r = simulate_errors(&const_path(&grid, &[1.0]), &x, &spec, BasisKind::Identity, &SdeOptions::default());
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn generated_panel_is_deterministic_and_noiseless_when_scaled_off() {
        let grid = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        let truth = const_path(&grid, &[1.0, -2.0]);
        let design = Design::Gaussian { n_cases: 6, n_covariates: 2, mean: 0.0, sd: 1.0, seed: 3 };
        let spec = PenaltySpec::new(Family::Ridge, 0.5).unwrap();
        let opts = SdeOptions { seed: 11, ..Default::default() };
        let a = generate_panel(&truth, &design, &spec, BasisKind::Identity, &opts).unwrap();
        let b = generate_panel(&truth, &design, &spec, BasisKind::Identity, &opts).unwrap();
        assert_eq!(a, b);
        let quiet = SdeOptions { noise_scale: 0.0, ..opts };
        let p = generate_panel(&truth, &design, &spec, BasisKind::Identity, &quiet).unwrap();
        for t in 0..5 {
            let fitted = p.x(t) * truth.beta(t);
            assert_eq!(&fitted, p.y(t));
        }
        assert_eq!(objective_eval(&p, &truth, BasisKind::Identity).unwrap(), 0.0);
    }

    #[test]
    fn objective_of_constant_residual() {
        let grid = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 3.0);
        let panel = Panel::new(grid.clone(), vec![y; 3], vec![x; 3]).unwrap();
        // residual r = 3 - 1 = 2 everywhere, N = 1 -> r^2 over [0, 1]
        let v = objective_eval(&panel, &const_path(&grid, &[1.0]), BasisKind::Identity).unwrap();
        assert!((v - 4.0).abs() < 1e-15);
        let other = TimeGrid::uniform(0.0, 2.0, 3).unwrap();
        assert!(objective_eval(&panel, &const_path(&other, &[1.0]), BasisKind::Identity).is_err());
    }
}
