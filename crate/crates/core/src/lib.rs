//! Time-dependent penalized regression: coefficient paths fitted pointwise on a
//! time grid by closed-form coordinate updates, with an Euler–Maruyama error
//! model, a transition-function propagator and independent numerical oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod domain;
pub mod error;
pub mod foc;
pub mod oracle;
pub mod penalty;
pub mod propagator;
pub mod sde;
pub mod solver;

pub use domain::{BasisKind, CoefPath, Family, Panel, PanelRow, PenaltySpec, PointDiagnostics, PointStatus, TimeGrid};
pub use error::{Error, Result};
