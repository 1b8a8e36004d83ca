//! Deterministic thresholds and best-price densities.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::dist::DistError;

pub mod binned;
pub mod lambert;
pub mod ode;
pub mod shooting;

pub use binned::{binned_threshold, solve_binned_pi, threshold_bins, BinnedPi};
pub use lambert::{kappa_uniform_exact, lambert_w_of_inv_e, varpi_a_uniform_exact, varpi_uniform_exact};
pub use shooting::{finiteness_certificate, integrate_varpi, shoot_kappa, ShootOptions, VarpiPath, VarpiSolution};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("singular coefficient at x = {x}: {what}")]
    Singular { x: f64, what: &'static str },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("no finite threshold located")]
    NoThreshold,
    #[error("several sign changes of u(kappa_a): {0:?}")]
    Ambiguous(Vec<(f64, f64)>),
    #[error("no three-bin certificate found; supply a lower bound for F_b(kappa_b)")]
    NoCertificate,
    #[error("no convergence after {iterations} iterations (residual {residual:e}); history {history:?}")]
    NonConvergence { iterations: usize, residual: f64, history: Vec<f64> },
}

fn decimal(v: f64) -> BigRational {
    let s = v.to_string();
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    format!("{int}{frac}/1{}", "0".repeat(frac.len())).parse().expect("decimal")
}

/// Lower bound on `F_b(κ_b)` from a three-bin comparison book with cuts at
/// prices where the bid CDF equals `X` and `Y`.
///
/// Inputs are read as the shortest decimals that round-trip to them and the
/// bound is evaluated exactly on those decimals, then rounded once. So
/// `(0.4, 0.6)` gives exactly `0.1`.
pub fn lower_bound_3bin(x: f64, y: f64) -> Result<f64, AnalyticsError> {
    if !(0.0 < x && x < y && y < 1.0) {
        return Err(AnalyticsError::Domain(format!("need 0 < X < Y < 1, got X = {x}, Y = {y}")));
    }
    let (xq, yq, one) = (decimal(x), decimal(y), decimal(1.0));
    let two = &one + &one;
    let num = &two * &xq * (&one - &xq) - (&one - &yq);
    let den = (&one - &xq) + (&yq - &xq);
    Ok((num / den).to_f64().expect("representable"))
}
