use serde::{Deserialize, Serialize};

use crate::coeffs::InitialLaw;
use crate::error::{Error, Result};
use crate::rng::{Domain, Stream};

pub const MIN_PARTICLES: usize = 100;

/// Weighted, killable particle approximation of the unnormalized
/// conditional law of the stopped firm value.
///
/// Weights are kept in log form relative to `log_norm`. A killed particle
/// no longer changes weight (`b(t, 0) = 0`), so its mass is folded into
/// `dead_mass` and its slot is only refilled at the next resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub x: Vec<f64>,
    pub logw: Vec<f64>,
    pub alive: Vec<bool>,
    /// Mass of killed particles on the scale of `logw`.
    pub dead_mass: f64,
    /// Logarithm of the common scale factor of all weights.
    pub log_norm: f64,
    pub t: f64,
    pub n_resamples: usize,
}

/// I.i.d. positions from `init`, equal weights summing to one.
pub fn init_cloud(init: &InitialLaw, n_particles: usize, seed: u64) -> Result<ParticleCloud> {
    if n_particles < MIN_PARTICLES {
        return Err(Error::param("n_particles", format!("need at least {MIN_PARTICLES}")));
    }
    if n_particles >= 1 << 24 {
        return Err(Error::param("n_particles", "must be below 2^24"));
    }
    init.validate()?;
    let stream = Stream::new(seed, Domain::Init, u32::MAX, 0);
    let x = (0..n_particles)
        .map(|i| {
            let [u0, u1] = stream.uniforms((i / 2) as u64);
            init.sample(if i % 2 == 0 { u0 } else { u1 })
        })
        .collect();
    Ok(ParticleCloud {
        x,
        logw: vec![0.0; n_particles],
        alive: vec![true; n_particles],
        dead_mass: 0.0,
        log_norm: -(n_particles as f64).ln(),
        t: 0.0,
        n_resamples: 0,
    })
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_alive(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn alive_mass(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.logw)
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|((_, lw), _)| lw.exp())
            .sum()
    }

    /// Normalized alive mass `Ẑ`.
    pub fn z(&self) -> f64 {
        let a = self.alive_mass();
        a / (a + self.dead_mass)
    }

    /// Logarithm of the total unnormalized mass.
    pub fn log_mass(&self) -> f64 {
        (self.alive_mass() + self.dead_mass).ln() + self.log_norm
    }

    /// Effective sample size of the alive stratum.
    pub fn ess(&self) -> f64 {
        let (mut s, mut s2) = (0.0, 0.0);
        for (lw, &a) in self.logw.iter().zip(&self.alive) {
            if a {
                let w = lw.exp();
                s += w;
                s2 += w * w;
            }
        }
        if s2 > 0.0 {
            s * s / s2
        } else {
            0.0
        }
    }

    /// Rescales weights so the largest alive log-weight is zero.
    pub(crate) fn renormalize(&mut self) {
        let m = self
            .logw
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(lw, _)| *lw)
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() || m == 0.0 {
            return;
        }
        for lw in self.logw.iter_mut() {
            *lw -= m;
        }
        self.dead_mass *= (-m).exp();
        self.log_norm += m;
    }

    /// Systematic resampling of the alive stratum back to full size.
    /// The alive mass is shared equally, the dead mass is untouched.
    pub(crate) fn resample(&mut self, u: f64) {
        let n = self.len();
        let idx: Vec<usize> = (0..n).filter(|&i| self.alive[i]).collect();
        if idx.is_empty() {
            return;
        }
        let w: Vec<f64> = idx.iter().map(|&i| self.logw[i].exp()).collect();
        let total: f64 = w.iter().sum();
        let mut new_x = Vec::with_capacity(n);
        let mut cum = w[0];
        let mut j = 0;
        for k in 0..n {
            let target = (k as f64 + u) / n as f64 * total;
            while cum < target && j + 1 < w.len() {
                j += 1;
                cum += w[j];
            }
            new_x.push(self.x[idx[j]]);
        }
        let lw = (total / n as f64).ln();
        self.x = new_x;
        self.logw = vec![lw; n];
        self.alive = vec![true; n];
        self.n_resamples += 1;
        self.renormalize();
    }
}

/// `π f`: over all particles with killed ones at the origin, or over the
/// alive stratum only when `alive_only` is set.
pub fn pi_f<F: Fn(f64) -> f64>(cloud: &ParticleCloud, f: F, alive_only: bool) -> Result<f64> {
    let f0 = if alive_only { 0.0 } else { f(0.0) };
    if !f0.is_finite() {
        return Err(Error::NonFinite {
            x: 0.0,
            what: "test function".into(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..cloud.len() {
        if !cloud.alive[i] {
            continue;
        }
        let w = cloud.logw[i].exp();
        let v = f(cloud.x[i]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                x: cloud.x[i],
                what: "test function".into(),
            });
        }
        num += w * v;
        den += w;
    }
    if alive_only {
        if den == 0.0 {
            return Err(Error::Absorbed { time: cloud.t });
        }
        Ok(num / den)
    } else {
        Ok((num + cloud.dead_mass * f0) / (den + cloud.dead_mass))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    #[test]
    fn point_law_cloud() {
        let c = init_cloud(&InitialLaw::Point { x0: 1.0 }, 1000, 1).unwrap();
        assert!(c.x.iter().all(|&x| x == 1.0));
        assert_eq!(c.z(), 1.0);
        assert!((c.log_mass()).abs() < 1e-12);
        assert!((c.ess() - 1000.0).abs() < 1e-9);
        assert!(init_cloud(&InitialLaw::Point { x0: 1.0 }, 10, 1).is_err());
    }

    #[test]
    fn tabulated_law_mean() {
        let law = InitialLaw::Tabulated {
            xs: vec![0.5, 1.0, 3.0],
            ps: vec![0.2, 0.5, 0.3],
        };
        let c = init_cloud(&law, 20_000, 5).unwrap();
        let e = Estimate::from_samples(&c.x);
        assert!((e.mean - law.mean()).abs() < 4.0 * e.stderr);
    }

    #[test]
    fn pi_f_normalization() {
        let mut c = init_cloud(&InitialLaw::Lognormal { m: 0.0, s: 0.3 }, 500, 2).unwrap();
        c.alive[0] = false;
        c.dead_mass = c.logw[0].exp();
        assert_eq!(pi_f(&c, |_| 0.0, false).unwrap(), 0.0);
        assert!((pi_f(&c, |_| 1.0, false).unwrap() - 1.0).abs() < 1e-14);
        assert!((pi_f(&c, |_| 1.0, true).unwrap() - 1.0).abs() < 1e-14);
        assert!((pi_f(&c, |x| x.min(0.0) + 1.0, false).unwrap() - 1.0).abs() < 1e-14);
        assert!(pi_f(&c, |x| if x > 1.0 { f64::NAN } else { x }, false).is_err());
    }

    #[test]
    fn resampling_preserves_mass_split() {
        let mut c = init_cloud(&InitialLaw::Lognormal { m: 0.0, s: 0.5 }, 1000, 3).unwrap();
        for i in 0..1000 {
            c.logw[i] = -(c.x[i] - 1.0).powi(2);
            if i % 7 == 0 {
                c.dead_mass += c.logw[i].exp();
                c.alive[i] = false;
            }
        }
        let (z, m) = (c.z(), c.log_mass());
        c.resample(0.37);
        assert!((c.z() - z).abs() < 1e-12);
        assert!((c.log_mass() - m).abs() < 1e-12);
        assert_eq!(c.n_alive(), 1000);
        assert!((c.ess() - 1000.0).abs() < 1e-6);
    }
}
