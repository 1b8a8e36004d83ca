//! Closed-form thresholds and densities for uniform arrivals.

use super::AnalyticsError;

/// The `w > 0` with `w e^w = e^{-1}`, by Newton's method kept inside `[0.2, 0.3]`.
pub fn lambert_w_of_inv_e() -> f64 {
    let target = (-1.0f64).exp();
    let g = |w: f64| w * w.exp() - target;
    let (mut lo, mut hi) = (0.2f64, 0.3f64);
    let mut w = 0.25;
    for _ in 0..100 {
        let r = g(w);
        if r.abs() <= 1e-16 {
            break;
        }
        if r < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let step = r / ((1.0 + w) * w.exp());
        let next = w - step;
        w = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if step.abs() <= f64::EPSILON * w {
            break;
        }
    }
    w
}

/// `(κ_b, κ_a)` for uniform bids and asks on [0, 1].
pub fn kappa_uniform_exact() -> (f64, f64) {
    let w = lambert_w_of_inv_e();
    let kb = w / (w + 1.0);
    (kb, 1.0 - kb)
}

/// Density of the best bid against the bid law for uniform arrivals.
pub fn varpi_uniform_exact(x: f64) -> Result<f64, AnalyticsError> {
    let (kb, ka) = kappa_uniform_exact();
    if !(x >= kb && x <= ka) {
        return Err(AnalyticsError::Domain(format!("x = {x} outside [{kb}, {ka}]")));
    }
    Ok(((1.0 - kb) * (1.0 / x + ((1.0 - x) / x).ln())).max(0.0))
}

/// Best-ask counterpart of [`varpi_uniform_exact`], by reflection.
pub fn varpi_a_uniform_exact(x: f64) -> Result<f64, AnalyticsError> {
    varpi_uniform_exact(1.0 - x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defining_equation() {
        let w = lambert_w_of_inv_e();
        assert!((w * w.exp() - (-1.0f64).exp()).abs() <= 1e-14);
        let g = |w: f64| w * w.exp();
        assert!(g(0.2) < (-1.0f64).exp() && (-1.0f64).exp() < g(0.3));
        assert!((w - 0.278465).abs() < 1e-6);
    }

    #[test]
    fn threshold_identities() {
        let (kb, ka) = kappa_uniform_exact();
        assert!((0.2177..=0.2179).contains(&kb));
        assert_eq!(ka, 1.0 - kb);
        assert!((1.0 / (1.0 - kb) + (kb / (1.0 - kb)).ln()).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_values() {
        let (kb, ka) = kappa_uniform_exact();
        assert!((varpi_uniform_exact(kb).unwrap() - 1.0 / kb).abs() < 1e-12);
        assert!((varpi_uniform_exact(0.5).unwrap() - 2.0 * (1.0 - kb)).abs() < 1e-15);
        assert!(varpi_uniform_exact(ka).unwrap().abs() < 1e-12);
        assert!(varpi_uniform_exact(0.1).is_err());
        assert!(varpi_uniform_exact(0.9).is_err());
    }
}
