use serde::{Deserialize, Serialize};

use crate::coeffs::DriftSpec;
use crate::error::{Error, Result};

use super::trajectory::FilterTrajectory;

/// `f(x) = (1 - u²)⁴` with `u = (x - center) / half_width` on `|u| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
}

impl Bump {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        let b = Bump { center, half_width };
        b.validate()?;
        Ok(b)
    }

    /// Support must be a compact subset of `(0, ∞)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite() && self.center.is_finite()) {
            return Err(Error::param("bump", "half width must be positive and finite"));
        }
        if self.center - self.half_width <= 0.0 {
            return Err(Error::param("bump", "support must lie inside (0, ∞)"));
        }
        Ok(())
    }

    /// `(f, f', f'')` at `x`, or `None` off the support.
    #[inline]
    pub fn eval(&self, x: f64) -> Option<(f64, f64, f64)> {
        let w = self.half_width;
        let u = (x - self.center) / w;
        if u.abs() >= 1.0 {
            return None;
        }
        let s = 1.0 - u * u;
        let s2 = s * s;
        let f = s2 * s2;
        let d1 = -8.0 * u * s2 * s / w;
        let d2 = (-8.0 * s2 * s + 48.0 * u * u * s2) / (w * w);
        Some((f, d1, d2))
    }

    /// `(f, Af)` with the generator `A f = a f' + ½ f''`.
    #[inline]
    pub fn eval_with_generator(&self, drift: &DriftSpec, x: f64) -> Option<(f64, f64)> {
        self.eval(x).map(|(f, d1, d2)| (f, drift.eval(x) * d1 + 0.5 * d2))
    }
}

/// Residual of the filtering equation along a trajectory:
///
/// ```text
/// R_t = π_t f - π_0 f - ∫ π(Af) ds - ∫ (π(fb) - π f π b) dβ - ∫ π_{s-} f dL
/// ```
///
/// with `π` conditioned on the enlarged filtration (zero after default).
/// The `ds` integral uses the trapezoid rule up to default, the `dβ`
/// integral left points.
pub fn ks_residual(traj: &FilterTrajectory, f: &Bump) -> Result<Vec<f64>> {
    f.validate()?;
    let tr = traj
        .probes
        .iter()
        .find(|p| p.bump == *f)
        .ok_or_else(|| Error::param("f", "test function was not tracked during the filter run"))?;
    let dt = traj.dt;
    let n = traj.states.len();
    let mut out = Vec::with_capacity(n);
    let mut integral = 0.0;
    for k in 0..n {
        out.push(tr.pi_f[k] - tr.pi_f[0] - integral);
        if k + 1 < n {
            let s = &traj.states[k];
            let next = &traj.states[k + 1];
            let drift = if next.alive {
                0.5 * (tr.pi_af[k] + tr.pi_af[k + 1]) * dt
            } else {
                tr.pi_af[k] * (traj.tau - s.t).clamp(0.0, dt)
            };
            let dl = traj.l[k + 1] - traj.l[k];
            integral += drift + (tr.pi_fb[k] - tr.pi_f[k] * s.bhat_g) * s.d_beta + tr.pi_f[k] * dl;
        }
    }
    Ok(out)
}
