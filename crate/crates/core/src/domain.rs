//! Shared data types: time grids, balanced panels, penalty specifications,
//! basis maps and fitted coefficient paths.
//!
//! Everything here is immutable after construction. Constructors validate
//! dimensions and finiteness so downstream numerics can assume clean input.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Strictly increasing, finite, non-negative time points (at least two).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFiniteValue(format!("time point {p}")));
        }
        if points[0] < 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first point {} is negative",
                points[0]
            )));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// `n` equally spaced points on `[t0, t1]`.
    pub fn uniform(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        let h = (t1 - t0) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| t0 + h * i as f64).collect();
        points[n - 1] = t1;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    /// Trapezoid rule for values sampled at the grid points.
    pub fn trapezoid(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.points.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} grid points",
                values.len(),
                self.points.len()
            )));
        }
        Ok(self
            .points
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum())
    }
}

/// Covariate feature map applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    #[default]
    Identity,
    /// h(x) = x + x^2 + x^3
    Cubic,
}

impl BasisKind {
    #[inline]
    pub fn h(self, x: f64) -> f64 {
        match self {
            BasisKind::Identity => x,
            BasisKind::Cubic => x + x * x + x * x * x,
        }
    }

    pub fn apply(self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            BasisKind::Identity => x.clone(),
            BasisKind::Cubic => x.map(|v| self.h(v)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Identity => "identity",
            BasisKind::Cubic => "cubic",
        }
    }
}

/// One observation row: time, 1-based case index, response, covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub t: f64,
    pub case: usize,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Balanced panel: one N-vector of responses and one N x J design per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    grid: TimeGrid,
    y: Vec<DVector<f64>>,
    x: Vec<DMatrix<f64>>,
}

impl Panel {
    pub fn new(grid: TimeGrid, y: Vec<DVector<f64>>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        if y.len() != grid.len() || x.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} points, got {} responses and {} designs",
                grid.len(),
                y.len(),
                x.len()
            )));
        }
        let n = y[0].len();
        let j = x[0].ncols();
        if n == 0 || j == 0 {
            return Err(Error::DimensionMismatch(format!("N = {n}, J = {j}")));
        }
        for (idx, (yv, xm)) in y.iter().zip(&x).enumerate() {
            if yv.len() != n || xm.nrows() != n || xm.ncols() != j {
                return Err(Error::DimensionMismatch(format!(
                    "grid point {idx}: expected {n} x {j}, got y {} and X {} x {}",
                    yv.len(),
                    xm.nrows(),
                    xm.ncols()
                )));
            }
            if yv.iter().chain(xm.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue(format!("panel data at grid point {idx}")));
            }
        }
        Ok(Self { grid, y, x })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_cases(&self) -> usize {
        self.y[0].len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x[0].ncols()
    }

    pub fn y(&self, t_idx: usize) -> &DVector<f64> {
        &self.y[t_idx]
    }

    pub fn x(&self, t_idx: usize) -> &DMatrix<f64> {
        &self.x[t_idx]
    }

    pub fn responses(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn designs(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    /// Rows sorted by (t, case).
    pub fn rows(&self) -> Vec<PanelRow> {
        let mut rows = Vec::with_capacity(self.grid.len() * self.n_cases());
        for (ti, &t) in self.grid.points().iter().enumerate() {
            for i in 0..self.n_cases() {
                rows.push(PanelRow {
                    t,
                    case: i + 1,
                    y: self.y[ti][i],
                    x: self.x[ti].row(i).iter().copied().collect(),
                });
            }
        }
        rows
    }
}

/// Groups raw rows by time and checks that every case 1..N is present once at
/// every time point.
pub fn validate_panel(rows: &[PanelRow]) -> Result<Panel> {
    if rows.is_empty() {
        return Err(Error::Empty("panel rows"));
    }
    let j = rows[0].x.len();
    if j == 0 {
        return Err(Error::RaggedJ { row: 1, expected: 1, found: 0 });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.x.len() != j {
            return Err(Error::RaggedJ { row: r + 1, expected: j, found: row.x.len() });
        }
        if !row.t.is_finite() {
            return Err(Error::NonFiniteValue(format!("t in row {}", r + 1)));
        }
        if !row.y.is_finite() {
            return Err(Error::NonFiniteValue(format!("y in row {}", r + 1)));
        }
        if let Some(c) = row.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("x_{} in row {}", c + 1, r + 1)));
        }
        if row.case == 0 {
            return Err(Error::InvalidCaseIndex(0));
        }
    }

    let mut by_time: BTreeMap<u64, (f64, BTreeMap<usize, &PanelRow>)> = BTreeMap::new();
    for row in rows {
        // order-preserving key for finite floats
        let key = ordered_key(row.t);
        let entry = by_time.entry(key).or_insert_with(|| (row.t, BTreeMap::new()));
        if entry.1.insert(row.case, row).is_some() {
            return Err(Error::DuplicateCase { t: row.t, case: row.case });
        }
    }
    let n = rows.iter().map(|r| r.case).max().unwrap_or(0);

    let mut times = Vec::with_capacity(by_time.len());
    let mut ys = Vec::with_capacity(by_time.len());
    let mut xs = Vec::with_capacity(by_time.len());
    for (t, cases) in by_time.values() {
        let mut y = DVector::zeros(n);
        let mut x = DMatrix::zeros(n, j);
        for i in 1..=n {
            let row = cases.get(&i).ok_or(Error::MissingCase { t: *t, case: i })?;
            y[i - 1] = row.y;
            for (c, v) in row.x.iter().enumerate() {
                x[(i - 1, c)] = *v;
            }
        }
        times.push(*t);
        ys.push(y);
        xs.push(x);
    }
    Panel::new(TimeGrid::new(times)?, ys, xs)
}

fn ordered_key(t: f64) -> u64 {
    let bits = (t + 0.0).to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Penalty family and its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Lasso,
    Ridge,
    LpNorm { p: f64 },
    ElasticNet { alpha: f64 },
    FusedLasso { alpha: f64 },
    Bridge,
    /// One m x m positive definite matrix per block of m consecutive coefficients.
    GroupLasso { blocks: Vec<DMatrix<f64>> },
    SplineCubic,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Lasso => "lasso",
            Family::Ridge => "ridge",
            Family::LpNorm { .. } => "lp",
            Family::ElasticNet { .. } => "elasticnet",
            Family::FusedLasso { .. } => "fused",
            Family::Bridge => "bridge",
            Family::GroupLasso { .. } => "grouplasso",
            Family::SplineCubic => "spline",
        }
    }

    /// Families whose coordinate update depends on the sign of the coefficient.
    pub fn has_branches(&self) -> bool {
        matches!(
            self,
            Family::Lasso
                | Family::LpNorm { .. }
                | Family::ElasticNet { .. }
                | Family::FusedLasso { .. }
                | Family::Bridge
        )
    }

    /// Identity K for `n_blocks` groups of size `m`.
    pub fn group_identity(m: usize, n_blocks: usize) -> Self {
        Family::GroupLasso { blocks: vec![DMatrix::identity(m, m); n_blocks] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    family: Family,
    lambda_star: f64,
}

impl PenaltySpec {
    pub fn new(family: Family, lambda_star: f64) -> Result<Self> {
        if !lambda_star.is_finite() || lambda_star < 0.0 {
            return Err(Error::InvalidPenalty(format!(
                "lambda must be finite and >= 0, got {lambda_star}"
            )));
        }
        match &family {
            Family::LpNorm { p } if *p == 0.0 || !p.is_finite() => {
                return Err(Error::InvalidPenalty(format!("p must be finite and nonzero, got {p}")));
            }
            Family::ElasticNet { alpha } if !(0.0..=1.0).contains(alpha) => {
                return Err(Error::InvalidPenalty(format!("alpha must lie in [0, 1], got {alpha}")));
            }
            Family::FusedLasso { alpha } if !(*alpha > 0.0 && *alpha < 1.0) => {
                return Err(Error::InvalidPenalty(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            Family::GroupLasso { blocks } => check_group_blocks(blocks)?,
            _ => {}
        }
        Ok(Self { family, lambda_star })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Group size m, or 1 for scalar families.
    pub fn block_size(&self) -> usize {
        match &self.family {
            Family::GroupLasso { blocks } => blocks[0].nrows(),
            _ => 1,
        }
    }

    /// Checks that the spec can be applied to `j` covariates.
    pub fn check_dims(&self, j: usize) -> Result<()> {
        if let Family::GroupLasso { blocks } = &self.family {
            let m = blocks[0].nrows();
            if blocks.len() * m != j {
                return Err(Error::DimensionMismatch(format!(
                    "{} groups of size {m} do not cover {j} covariates",
                    blocks.len()
                )));
            }
        }
        Ok(())
    }
}

fn check_group_blocks(blocks: &[DMatrix<f64>]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::InvalidPenalty("group lasso needs at least one K matrix".into()));
    }
    let m = blocks[0].nrows();
    for (b, k) in blocks.iter().enumerate() {
        if k.nrows() != m || k.ncols() != m || m == 0 {
            return Err(Error::InvalidPenalty(format!(
                "K_{} is {} x {}, expected {m} x {m}",
                b + 1,
                k.nrows(),
                k.ncols()
            )));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("K_{}", b + 1)));
        }
        let scale = k.amax().max(1.0);
        if (k - k.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidPenalty(format!("K_{} is not symmetric", b + 1)));
        }
        if k.clone().cholesky().is_none() {
            return Err(Error::InvalidPenalty(format!("K_{} is not positive definite", b + 1)));
        }
    }
    Ok(())
}

/// Outcome of a single timepoint solve.
#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Converged,
    NotConverged,
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointDiagnostics {
    /// max_k |FOC residual| at the returned coefficients
    pub foc_residual_norm: f64,
    /// max_k residual of the update rule's own equation; equals
    /// `foc_residual_norm` except for group lasso
    pub stationarity: f64,
    pub iterations: usize,
    pub branch_signs: Vec<i8>,
    pub objective: f64,
    pub status: PointStatus,
}

impl PointDiagnostics {
    pub fn converged(&self) -> bool {
        self.status == PointStatus::Converged
    }
}

/// Fitted coefficients over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefPath {
    grid: TimeGrid,
    betas: Vec<DVector<f64>>,
    diagnostics: Vec<PointDiagnostics>,
}

impl CoefPath {
    pub fn new(
        grid: TimeGrid,
        betas: Vec<DVector<f64>>,
        diagnostics: Vec<PointDiagnostics>,
    ) -> Result<Self> {
        if betas.len() != grid.len() || diagnostics.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} betas and {} diagnostics for {} grid points",
                betas.len(),
                diagnostics.len(),
                grid.len()
            )));
        }
        let j = betas[0].len();
        if betas.iter().any(|b| b.len() != j) {
            return Err(Error::DimensionMismatch("coefficient vectors differ in length".into()));
        }
        Ok(Self { grid, betas, diagnostics })
    }

    /// A path with no solver diagnostics, e.g. a known truth.
    pub fn from_betas(grid: TimeGrid, betas: Vec<DVector<f64>>) -> Result<Self> {
        let diagnostics = betas
            .iter()
            .map(|b| PointDiagnostics {
                foc_residual_norm: 0.0,
                stationarity: 0.0,
                iterations: 0,
                branch_signs: signs_of(b.as_slice()),
                objective: 0.0,
                status: PointStatus::Converged,
            })
            .collect();
        Self::new(grid, betas, diagnostics)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn betas(&self) -> &[DVector<f64>] {
        &self.betas
    }

    pub fn beta(&self, t_idx: usize) -> &DVector<f64> {
        &self.betas[t_idx]
    }

    pub fn diagnostics(&self) -> &[PointDiagnostics] {
        &self.diagnostics
    }

    pub fn n_covariates(&self) -> usize {
        self.betas[0].len()
    }

    pub fn all_converged(&self) -> bool {
        self.diagnostics.iter().all(PointDiagnostics::converged)
    }
}

/// Sign of each coordinate in {-1, +1}; zero maps to +1.
pub fn signs_of(beta: &[f64]) -> Vec<i8> {
    beta.iter().map(|b| if *b < 0.0 { -1 } else { 1 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, case: usize, y: f64, x: &[f64]) -> PanelRow {
        PanelRow { t, case, y, x: x.to_vec() }
    }

    #[test]
    fn complete_panel_validates() {
        let rows = vec![
            row(0.5, 2, 1.0, &[3.0]),
            row(0.0, 1, 1.0, &[1.0]),
            row(0.0, 2, 2.0, &[2.0]),
            row(0.5, 1, 0.0, &[4.0]),
        ];
        let p = validate_panel(&rows).unwrap();
        assert_eq!(p.n_cases(), 2);
        assert_eq!(p.n_covariates(), 1);
        assert_eq!(p.grid().points(), &[0.0, 0.5]);
        assert_eq!(p.x(1)[(0, 0)], 4.0);
        assert_eq!(p.y(0)[1], 2.0);
    }

    #[test]
    fn missing_case_is_rejected() {
        let rows = vec![
            row(0.0, 1, 1.0, &[1.0]),
            row(0.0, 2, 2.0, &[2.0]),
            row(0.5, 1, 0.0, &[4.0]),
        ];
        assert_eq!(validate_panel(&rows), Err(Error::MissingCase { t: 0.5, case: 2 }));
    }

    #[test]
    fn non_finite_response_is_rejected() {
        let rows = vec![row(0.0, 1, f64::NAN, &[1.0]), row(1.0, 1, 1.0, &[1.0])];
        assert!(matches!(validate_panel(&rows), Err(Error::NonFiniteValue(_))));
    }

    #[test]
    fn ragged_covariates_are_rejected() {
        let rows = vec![row(0.0, 1, 1.0, &[1.0, 2.0]), row(1.0, 1, 1.0, &[1.0])];
        assert_eq!(
            validate_panel(&rows),
            Err(Error::RaggedJ { row: 2, expected: 2, found: 1 })
        );
    }

    #[test]
    fn duplicate_case_is_rejected() {
        let rows = vec![
            row(0.0, 1, 1.0, &[1.0]),
            row(0.0, 1, 1.0, &[1.0]),
            row(1.0, 1, 1.0, &[1.0]),
        ];
        assert!(matches!(validate_panel(&rows), Err(Error::DuplicateCase { .. })));
    }

    #[test]
    fn single_time_point_is_not_a_grid() {
        let rows = vec![row(0.0, 1, 1.0, &[1.0])];
        assert!(matches!(validate_panel(&rows), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn grid_invariants() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![-0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::INFINITY]).is_err());
        let g = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.trapezoid(&[2.0; 5]).unwrap(), 2.0);
        // non-uniform grids are accepted
        let g = TimeGrid::new(vec![0.0, 0.1, 1.0]).unwrap();
        assert!((g.trapezoid(&[0.0, 0.1, 1.0]).unwrap() - 0.5 * (0.01 + 0.9 * 1.1)).abs() < 1e-15);
    }

    #[test]
    fn penalty_spec_invariants() {
        assert!(PenaltySpec::new(Family::LpNorm { p: 0.0 }, 1.0).is_err());
        assert!(PenaltySpec::new(Family::ElasticNet { alpha: 1.5 }, 1.0).is_err());
        assert!(PenaltySpec::new(Family::ElasticNet { alpha: 1.0 }, 1.0).is_ok());
        assert!(PenaltySpec::new(Family::FusedLasso { alpha: 1.0 }, 1.0).is_err());
        assert!(PenaltySpec::new(Family::FusedLasso { alpha: 0.5 }, 1.0).is_ok());
        assert!(PenaltySpec::new(Family::Ridge, -1.0).is_err());
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PenaltySpec::new(Family::GroupLasso { blocks: vec![not_pd] }, 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]);
        assert!(PenaltySpec::new(Family::GroupLasso { blocks: vec![asym] }, 1.0).is_err());
        let spec = PenaltySpec::new(Family::group_identity(2, 2), 1.0).unwrap();
        assert!(spec.check_dims(4).is_ok());
        assert!(spec.check_dims(3).is_err());
    }

    #[test]
    fn identity_basis_is_identity() {
        let x = DMatrix::from_row_slice(2, 2, &[1.5, -2.0, 0.0, 7.25]);
        assert_eq!(BasisKind::Identity.apply(&x), x);
        assert_eq!(BasisKind::Cubic.h(1.0), 3.0);
        assert_eq!(BasisKind::Cubic.h(-1.0), -1.0);
    }

    #[test]
    fn rows_round_trip_through_validation() {
        let rows = vec![
            row(0.0, 1, 1.0, &[1.0, 0.5]),
            row(0.0, 2, 2.0, &[2.0, -0.5]),
            row(0.3, 1, 0.1, &[4.0, 1e-300]),
            row(0.3, 2, -7.0, &[-3.0, 2.0]),
        ];
        let p = validate_panel(&rows).unwrap();
        assert_eq!(p.rows(), rows);
        assert_eq!(validate_panel(&p.rows()).unwrap(), p);
    }
}
