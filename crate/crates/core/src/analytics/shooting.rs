//! Thresholds and best-price densities for general arrival laws by shooting.
//!
//! With `u = F_a ϖ^b` and `v = ∫_{κ_b}^x ϖ^b f_b` the density equations become
//!
//! ```text
//! u' = −(f_a / (1 − F_b)) v,     v' = (f_b / F_a) u,     u(κ_b) = 1, v(κ_b) = 0,
//! ```
//!
//! and the right threshold is the `κ_b` for which `u` reaches zero exactly at
//! `κ_a = Q_a(1 − F_b(κ_b))`. The ask density is recovered from
//! `ϖ^a (1 − F_b) = v`.

use serde::Serialize;

use super::ode::{Dopri5, OdeError};
use super::{lower_bound_3bin, AnalyticsError};
use crate::dist::ArrivalSpec;

const SINGULAR_TOL: f64 = 1e-14;

/// Solution path of the `(u, v)` system on `[κ_b, κ_a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarpiPath {
    pub kappa_b: f64,
    pub kappa_a: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub u_end: f64,
    pub v_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarpiSolution {
    pub kappa_b: f64,
    pub kappa_a: f64,
    pub fb_kappa: f64,
    pub grid: Vec<f64>,
    pub varpi_b: Vec<f64>,
    pub varpi_a: Vec<f64>,
    /// `∫ ϖ^b f_b`, equal to `v(κ_a)`.
    pub mass_b: f64,
    /// `∫ ϖ^a f_a` by the trapezoid rule on the grid.
    pub mass_a: f64,
    pub u_end: f64,
    pub v_end: f64,
    pub bisection_steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ShootOptions {
    pub tol: f64,
    pub grid_n: usize,
    pub candidates: usize,
    /// Lower bound for `F_b(κ_b)`; if absent a three-bin certificate is searched for.
    pub lower_fb: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { tol: 1e-10, grid_n: 1000, candidates: 64, lower_fb: None }
    }
}

fn rhs(spec: &ArrivalSpec, seg: (f64, f64), x: f64, y: &[f64; 2]) -> Result<[f64; 2], AnalyticsError> {
    // keep density lookups on the segment's own side of a kink
    let d = 1e-13 * (seg.1 - seg.0);
    let xe = x.clamp(seg.0 + d, seg.1 - d);
    let fa_cdf = spec.ask.cdf(x);
    let fb_cdf = spec.bid.cdf(x);
    if fa_cdf <= SINGULAR_TOL {
        return Err(AnalyticsError::Singular { x, what: "ask CDF vanishes" });
    }
    if 1.0 - fb_cdf <= SINGULAR_TOL {
        return Err(AnalyticsError::Singular { x, what: "bid CDF reaches one" });
    }
    let du = -spec.ask.density(xe) / (1.0 - fb_cdf) * y[1];
    let dv = spec.bid.density(xe) / fa_cdf * y[0];
    Ok([du, dv])
}

fn lift(e: OdeError<AnalyticsError>) -> AnalyticsError {
    match e {
        OdeError::Rhs(e) => e,
        OdeError::StepUnderflow(x) => AnalyticsError::Integration(format!("step size underflow at x = {x}")),
        OdeError::TooManySteps(n) => AnalyticsError::Integration(format!("more than {n} steps")),
    }
}

fn kappa_a_for(spec: &ArrivalSpec, kappa_b: f64) -> Result<f64, AnalyticsError> {
    let fb = spec.bid.cdf(kappa_b);
    if !(fb > 0.0 && fb < 0.5) {
        return Err(AnalyticsError::Domain(format!("F_b(kappa_b) = {fb} must lie in (0, 1/2)")));
    }
    let ka = spec.ask.quantile(1.0 - fb)?;
    if !(ka > kappa_b) {
        return Err(AnalyticsError::Domain(format!("kappa_a = {ka} does not exceed kappa_b = {kappa_b}")));
    }
    Ok(ka)
}

fn integrate(spec: &ArrivalSpec, kappa_b: f64, grid_n: usize) -> Result<VarpiPath, AnalyticsError> {
    let ka = kappa_a_for(spec, kappa_b)?;
    let mut knots: Vec<f64> = spec
        .bid
        .breakpoints()
        .into_iter()
        .chain(spec.ask.breakpoints())
        .filter(|&b| b > kappa_b && b < ka)
        .collect();
    knots.push(kappa_b);
    knots.push(ka);
    let grid: Vec<f64> = if grid_n >= 2 {
        (0..grid_n).map(|i| kappa_b + (ka - kappa_b) * i as f64 / (grid_n - 1) as f64).collect()
    } else {
        vec![kappa_b, ka]
    };
    knots.extend_from_slice(&grid);
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);

    let solver = Dopri5::default();
    let mut y = [1.0, 0.0];
    let mut h = 0.0;
    let mut path = VarpiPath { kappa_b, kappa_a: ka, x: Vec::new(), u: Vec::new(), v: Vec::new(), u_end: 0.0, v_end: 0.0 };
    let mut gi = 0;
    let mut record = |x: f64, y: &[f64; 2], path: &mut VarpiPath| {
        while gi < grid.len() && (grid[gi] - x).abs() <= 1e-15 {
            path.x.push(grid[gi]);
            path.u.push(y[0]);
            path.v.push(y[1]);
            gi += 1;
        }
    };
    record(knots[0], &y, &mut path);
    for w in knots.windows(2) {
        let seg = (w[0], w[1]);
        y = solver.integrate(|x, y| rhs(spec, seg, x, y), w[0], y, w[1], &mut h).map_err(lift)?;
        record(w[1], &y, &mut path);
    }
    path.u_end = y[0];
    path.v_end = y[1];
    if grid_n < 2 {
        path.x.clear();
        path.u.clear();
        path.v.clear();
    }
    Ok(path)
}

/// Integrates the `(u, v)` system from `kappa_b` to `Q_a(1 − F_b(kappa_b))`,
/// reporting the path at `grid_n` equally spaced points.
pub fn integrate_varpi(spec: &ArrivalSpec, kappa_b: f64, grid_n: usize) -> Result<VarpiPath, AnalyticsError> {
    integrate(spec, kappa_b, grid_n.max(2))
}

fn u_end(spec: &ArrivalSpec, kappa_b: f64) -> Result<f64, AnalyticsError> {
    integrate(spec, kappa_b, 0).map(|p| p.u_end)
}

/// Best `(X, Y, bound)` over the three-bin certificates available for `spec`.
///
/// A certificate needs prices `x < y` with `F_b(x) = 1 − F_a(y)` and
/// `F_b(y) = 1 − F_a(x)`; the bound then holds for `F_b(κ_b)`.
pub fn finiteness_certificate(spec: &ArrivalSpec) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 1..500 {
        let xx = 0.5 * i as f64 / 500.0;
        let x = spec.bid.quantile_unchecked(xx);
        let yy = 1.0 - spec.ask.cdf(x);
        if !(yy > xx && yy < 1.0) {
            continue;
        }
        let y = spec.bid.quantile_unchecked(yy);
        if !(y > x) || (xx - (1.0 - spec.ask.cdf(y))).abs() > 1e-9 {
            continue;
        }
        if let Ok(b) = lower_bound_3bin(xx, yy) {
            if b > 0.0 && best.map_or(true, |(_, _, bb)| b > bb) {
                best = Some((xx, yy, b));
            }
        }
    }
    best
}

/// Locates `κ_b` by a sign scan of `u(κ_a)` followed by bisection.
pub fn shoot_kappa(spec: &ArrivalSpec, opts: &ShootOptions) -> Result<VarpiSolution, AnalyticsError> {
    if spec.p_bid != 0.5 {
        return Err(AnalyticsError::Domain(format!("density equations need p_bid = 1/2, got {}", spec.p_bid)));
    }
    let lower = match opts.lower_fb {
        Some(l) => l,
        None => finiteness_certificate(spec).map(|c| c.2).ok_or(AnalyticsError::NoCertificate)?,
    };
    if !(lower > 0.0 && lower < 0.5) {
        return Err(AnalyticsError::Domain(format!("lower bound {lower} for F_b(kappa_b) outside (0, 1/2)")));
    }
    let a = spec.bid.quantile(lower)?;
    let b = spec.bid.quantile(0.5)?;
    let n = opts.candidates.max(2);
    let mut scan = Vec::with_capacity(n);
    for j in 1..=n {
        let c = a + (b - a) * j as f64 / (n + 1) as f64;
        if kappa_a_for(spec, c).is_err() {
            continue;
        }
        scan.push((c, u_end(spec, c)?));
    }
    let brackets: Vec<(f64, f64, f64, f64)> = scan
        .windows(2)
        .filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .map(|w| (w[0].0, w[0].1, w[1].0, w[1].1))
        .collect();
    let (mut lo, mut ulo, mut hi, _) = match brackets.as_slice() {
        [] => return Err(AnalyticsError::NoThreshold),
        [one] => *one,
        many => return Err(AnalyticsError::Ambiguous(many.iter().map(|w| (w.0, w.2)).collect())),
    };
    let mut steps = 0;
    let root = loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            break if ulo >= 0.0 { lo } else { hi };
        }
        let um = u_end(spec, mid)?;
        steps += 1;
        if um.abs() <= opts.tol && um >= 0.0 {
            break mid;
        }
        if (um < 0.0) == (ulo < 0.0) {
            lo = mid;
            ulo = um;
        } else {
            hi = mid;
        }
    };
    let path = integrate(spec, root, opts.grid_n.max(2))?;
    let mut varpi_b = Vec::with_capacity(path.x.len());
    let mut varpi_a = Vec::with_capacity(path.x.len());
    for ((&x, &u), &v) in path.x.iter().zip(&path.u).zip(&path.v) {
        varpi_b.push(u / spec.ask.cdf(x));
        varpi_a.push(v / (1.0 - spec.bid.cdf(x)));
    }
    let mut mass_a = 0.0;
    for i in 1..path.x.len() {
        let g = |k: usize| varpi_a[k] * spec.ask.density(path.x[k]);
        mass_a += 0.5 * (g(i - 1) + g(i)) * (path.x[i] - path.x[i - 1]);
    }
    Ok(VarpiSolution {
        kappa_b: root,
        kappa_a: path.kappa_a,
        fb_kappa: spec.bid.cdf(root),
        grid: path.x,
        varpi_b,
        varpi_a,
        mass_b: path.v_end,
        mass_a,
        u_end: path.u_end,
        v_end: path.v_end,
        bisection_steps: steps,
    })
}
