//! Occupation measures of a binned book from its balance equations.
//!
//! For bins `k_b ≤ k ≤ k_a` the long-run rate at which the best bid leaves
//! bin `k` must equal the rate at which bids arriving there go unfilled:
//!
//! ```text
//! π^b(k) Σ_{l≤k} a(l) = (1 − Σ_{k_b≤l≤k} π^a(l)) b(k) − r^b(k)
//! π^a(k) Σ_{l≥k} b(l) = (1 − Σ_{k≤l≤k_a} π^b(l)) a(k) − r^a(k)
//! ```
//!
//! where `r^b` is the bid mass of bin `k_b` below the threshold and `r^a` the
//! ask mass of bin `k_a` above it. The sums of `π^b` and `π^a` are outputs.

use serde::Serialize;

use super::AnalyticsError;
use crate::dist::{ArrivalSpec, BinPartition};

pub const DAMPING: f64 = 0.5;
pub const MAX_ITERATIONS: usize = 100_000;
pub const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinnedPi {
    pub k_b: usize,
    pub k_a: usize,
    pub pi_b: Vec<f64>,
    pub pi_a: Vec<f64>,
    pub fb_kappa: f64,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl BinnedPi {
    pub fn mass_b(&self) -> f64 {
        self.pi_b.iter().sum()
    }

    pub fn mass_a(&self) -> f64 {
        self.pi_a.iter().sum()
    }
}

/// Bins holding `Q_b(fb)` and `Q_a(1 − fb)`.
pub fn threshold_bins(spec: &ArrivalSpec, part: &BinPartition, fb: f64) -> Result<(usize, usize), AnalyticsError> {
    let kb = part.bin_of(spec.bid.quantile(fb)?);
    let ka = part.bin_of(spec.ask.quantile(1.0 - fb)?);
    Ok((kb, ka))
}

/// Solves the balance equations on `[k_b, k_a]` by damped Jacobi iteration.
pub fn solve_binned_pi(spec: &ArrivalSpec, part: &BinPartition, k_b: usize, k_a: usize, fb_kappa: f64) -> Result<BinnedPi, AnalyticsError> {
    let n = part.len();
    if !(k_b < k_a && k_a < n) {
        return Err(AnalyticsError::Domain(format!("need k_b < k_a < {n}, got ({k_b}, {k_a})")));
    }
    if !(fb_kappa > 0.0 && fb_kappa < 1.0) {
        return Err(AnalyticsError::Domain(format!("F_b(kappa_b) = {fb_kappa} outside (0, 1)")));
    }
    let b = part.masses(&spec.bid);
    let a = part.masses(&spec.ask);
    let m = k_a - k_b + 1;
    let bb = &b[k_b..=k_a];
    let aa = &a[k_b..=k_a];
    let mut ca = vec![0.0; m];
    let mut acc: f64 = a[..k_b].iter().sum();
    for j in 0..m {
        acc += aa[j];
        ca[j] = acc;
    }
    let mut cb = vec![0.0; m];
    let mut acc: f64 = b[k_a + 1..].iter().sum();
    for j in (0..m).rev() {
        acc += bb[j];
        cb[j] = acc;
    }
    let mut rb = vec![0.0; m];
    rb[0] = (fb_kappa - spec.bid.cdf(part.bounds(k_b).0)).max(0.0);
    let mut ra = vec![0.0; m];
    let kappa_a = spec.ask.quantile(1.0 - fb_kappa)?;
    ra[m - 1] = (spec.ask.cdf(part.bounds(k_a).1) - spec.ask.cdf(kappa_a)).max(0.0);

    let norm = |v: &[f64]| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let mut x = norm(bb);
    let mut y = norm(aa);
    let mut history = Vec::new();
    let mut nx = vec![0.0; m];
    let mut ny = vec![0.0; m];
    for it in 1..=MAX_ITERATIONS {
        let mut cy = 0.0;
        for j in 0..m {
            cy += y[j];
            nx[j] = ((1.0 - cy) * bb[j] - rb[j]) / ca[j];
        }
        let mut cx = 0.0;
        for j in (0..m).rev() {
            cx += x[j];
            ny[j] = ((1.0 - cx) * aa[j] - ra[j]) / cb[j];
        }
        let mut r: f64 = 0.0;
        for j in 0..m {
            r = r.max((nx[j] - x[j]).abs()).max((ny[j] - y[j]).abs());
            x[j] = (1.0 - DAMPING) * x[j] + DAMPING * nx[j];
            y[j] = (1.0 - DAMPING) * y[j] + DAMPING * ny[j];
        }
        history.push(r);
        if !r.is_finite() {
            break;
        }
        if r <= RESIDUAL_TOL {
            let mut pi_b = vec![0.0; n];
            let mut pi_a = vec![0.0; n];
            pi_b[k_b..=k_a].copy_from_slice(&x);
            pi_a[k_b..=k_a].copy_from_slice(&y);
            return Ok(BinnedPi { k_b, k_a, pi_b, pi_a, fb_kappa, iterations: it, residual: r, residual_history: history });
        }
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    let step = (history.len() / 20).max(1);
    let sampled = history.iter().step_by(step).copied().collect();
    Err(AnalyticsError::NonConvergence { iterations: history.len(), residual, history: sampled })
}

/// Threshold at which the binned solution has `Σ π^b = 1`, found by scan and bisection.
pub fn binned_threshold(spec: &ArrivalSpec, part: &BinPartition) -> Result<BinnedPi, AnalyticsError> {
    let excess = |fb: f64| -> Result<Option<(f64, BinnedPi)>, AnalyticsError> {
        let (kb, ka) = threshold_bins(spec, part, fb)?;
        if kb >= ka {
            return Ok(None);
        }
        let s = solve_binned_pi(spec, part, kb, ka, fb)?;
        Ok(Some((s.mass_b() - 1.0, s)))
    };
    let grid: Vec<f64> = (1..=96).map(|i| 0.5 * i as f64 / 97.0).collect();
    let mut prev: Option<(f64, f64)> = None;
    for &fb in &grid {
        let Some((e, _)) = excess(fb)? else { continue };
        if let Some((pf, pe)) = prev {
            if (pe < 0.0) != (e < 0.0) {
                let (mut lo, mut elo, mut hi) = (pf, pe, fb);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    match excess(mid)? {
                        Some((em, _)) if (em < 0.0) == (elo < 0.0) => {
                            lo = mid;
                            elo = em;
                        }
                        _ => hi = mid,
                    }
                }
                let pick = if excess(lo)?.map_or(f64::INFINITY, |v| v.0.abs()) <= excess(hi)?.map_or(f64::INFINITY, |v| v.0.abs()) { lo } else { hi };
                return excess(pick)?.map(|v| v.1).ok_or(AnalyticsError::NoThreshold);
            }
        }
        prev = Some((fb, e));
    }
    Err(AnalyticsError::NoThreshold)
}
