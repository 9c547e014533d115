//! Adaptive quadrature on finite and half-infinite intervals.
//!
//! Backed by the double-exponential (tanh-sinh) rule of the `quadrature`
//! crate, which tolerates integrable endpoint singularities. Half-infinite
//! integrals are mapped to the unit interval by `s = s0 / u`.

use crate::error::{Error, Result};

/// Result of a quadrature with its error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

/// `∫_a^b f`, failing when the estimated error exceeds `tol` (absolute).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0 });
    }
    let q = adaptive(&f, a, b, tol, 0);
    if !q.value.is_finite() {
        return Err(Error::NonFinite {
            x: f64::NAN,
            what: "quadrature integrand".into(),
        });
    }
    if q.error > tol {
        return Err(Error::Quadrature {
            achieved: q.error,
            target: tol,
        });
    }
    Ok(q)
}

const MAX_DEPTH: u32 = 40;

/// Bisects panels whose error estimate misses their share of the tolerance.
fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Quad {
    let out = quadrature::integrate(f, a, b, tol);
    if out.error_estimate <= tol || depth >= MAX_DEPTH || !out.integral.is_finite() {
        return Quad {
            value: out.integral,
            error: out.error_estimate,
        };
    }
    let m = 0.5 * (a + b);
    let l = adaptive(f, a, m, 0.5 * tol, depth + 1);
    let r = adaptive(f, m, b, 0.5 * tol, depth + 1);
    Quad {
        value: l.value + r.value,
        error: l.error + r.error,
    }
}

/// `∫_{s0}^∞ f` via `s = s0 / u`; requires `s0 > 0` and `f(s) = o(1/s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, s0: f64, tol: f64) -> Result<Quad> {
    debug_assert!(s0 > 0.0);
    let g = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            let s = s0 / u;
            let v = f(s) * s0 / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let q = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((q.value - 9.0).abs() < 1e-12);
        let q = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn half_infinite_tail() {
        let q = integrate_to_infinity(|s: f64| s.powf(-2.5), 1.0, 1e-12).unwrap();
        assert!((q.value - 2.0 / 3.0).abs() < 1e-10);
        let q = integrate_to_infinity(|s: f64| (-s).exp(), 2.0, 1e-12).unwrap();
        assert!((q.value - (-2f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        let q = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-9);
    }
}
