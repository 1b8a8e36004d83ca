//! Adaptive Dormand–Prince 5(4) integrator for small autonomous-size systems.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError<E> {
    #[error("step size underflow at x = {0}")]
    StepUnderflow(f64),
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
    #[error(transparent)]
    Rhs(E),
}

#[derive(Clone, Copy, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 1_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])], h: f64) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl Dopri5 {
    /// Integrates `y' = f(x, y)` from `x0` to `x1`. `h` is the initial step guess
    /// and is updated to the last accepted step size.
    pub fn integrate<const D: usize, E, F>(&self, mut f: F, x0: f64, y0: [f64; D], x1: f64, h: &mut f64) -> Result<[f64; D], OdeError<E>>
    where
        F: FnMut(f64, &[f64; D]) -> Result<[f64; D], E>,
    {
        let span = x1 - x0;
        if span == 0.0 {
            return Ok(y0);
        }
        let dir = span.signum();
        let mut x = x0;
        let mut y = y0;
        let mut step = if *h > 0.0 { h.min(span.abs()) } else { span.abs() * 1e-3 };
        let mut k1 = f(x, &y).map_err(OdeError::Rhs)?;
        for _ in 0..self.max_steps {
            let remaining = (x1 - x) * dir;
            if remaining <= 0.0 {
                return Ok(y);
            }
            let last = step >= remaining;
            let hs = if last { remaining } else { step } * dir;
            let k2 = f(x + C2 * hs, &axpy(&y, &[(A21, &k1)], hs)).map_err(OdeError::Rhs)?;
            let k3 = f(x + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs)).map_err(OdeError::Rhs)?;
            let k4 = f(x + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs)).map_err(OdeError::Rhs)?;
            let k5 = f(x + C5 * hs, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs)).map_err(OdeError::Rhs)?;
            let xn = if last { x1 } else { x + hs };
            let k6 = f(xn, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs)).map_err(OdeError::Rhs)?;
            let yn = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
            let k7 = f(xn, &yn).map_err(OdeError::Rhs)?;
            let mut err = 0.0;
            for i in 0..D {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(yn[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / D as f64).sqrt();
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                x = xn;
                y = yn;
                k1 = k7;
                if !last {
                    *h = step;
                }
                step *= fac;
            } else {
                step *= fac.min(1.0);
                if step <= 1e-15 * x.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow(x));
                }
            }
        }
        Err(OdeError::TooManySteps(self.max_steps))
    }
}
