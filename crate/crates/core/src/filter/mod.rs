//! Particle filter for the conditional law of the stopped firm value given
//! the observation filtration.
//!
//! Particles move under the signal dynamics with Euler steps and are killed
//! with the Brownian-bridge crossing probability. Weights carry the
//! Girsanov likelihood of the observation increments, so the total mass is
//! the unnormalized (Zakai) measure and the alive fraction of the mass is
//! the conditional survival probability `Z_t`.

mod cloud;
mod intensity;
mod ks;
mod trajectory;

pub use cloud::{init_cloud, pi_f, ParticleCloud, MIN_PARTICLES};
pub use intensity::{default_conditional_cloud, intensity};
pub use ks::{ks_residual, Bump};
pub use trajectory::{
    decomposition_gap, multiplicative_factors, run_filter, FilterState, FilterTrajectory, Observation, ProbeTrack,
};

use serde::{Deserialize, Serialize};

use crate::coeffs::{DriftSpec, ObsSpec};
use crate::error::{Error, Result};
use crate::hitting::{HittingModel, Tail};
use crate::rng::{norm_inv, Domain, Stream};
use crate::simulate::hit_prob;

fn default_particles() -> usize {
    10_000
}

fn default_threshold() -> f64 {
    0.5
}

fn default_eps_factor() -> f64 {
    10.0
}

fn default_richardson() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    /// Resample when the alive ESS drops below this fraction of `n_particles`.
    #[serde(default = "default_threshold")]
    pub resample_threshold: f64,
    /// Intensity window; `None` means `epsilon_factor · dt`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_eps_factor")]
    pub epsilon_factor: f64,
    /// Report `2λ^{ε/2} - λ^ε` instead of `λ^ε`.
    #[serde(default = "default_richardson")]
    pub richardson: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            n_particles: default_particles(),
            resample_threshold: default_threshold(),
            epsilon: None,
            epsilon_factor: default_eps_factor(),
            richardson: true,
            seed: 0,
        }
    }
}

impl FilterParams {
    pub fn epsilon_for(&self, dt: f64) -> f64 {
        self.epsilon.unwrap_or(self.epsilon_factor * dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < MIN_PARTICLES {
            return Err(Error::config(
                "filter.n_particles",
                format!("must be at least {MIN_PARTICLES}"),
            ));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::config("filter.resample_threshold", "must lie in (0, 1]"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(Error::config("filter.epsilon", "must be positive"));
            }
        }
        if !(self.epsilon_factor > 0.0) {
            return Err(Error::config("filter.epsilon_factor", "must be positive"));
        }
        Ok(())
    }
}

/// Everything a filter step needs besides the cloud.
#[derive(Debug, Clone)]
pub struct FilterModel {
    pub drift: DriftSpec,
    pub obs: ObsSpec,
    pub hitting: HittingModel,
    pub dt: f64,
    pub eps: f64,
    pub richardson: bool,
    pub resample_threshold: f64,
    pub n_particles: usize,
    cut: f64,
    cut_half: f64,
    tail: Tail,
    tail_half: Tail,
}

impl FilterModel {
    pub fn new(drift: DriftSpec, obs: ObsSpec, hitting: HittingModel, params: &FilterParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let eps = params.epsilon_for(dt);
        if let Some(tab) = hitting.table() {
            if eps < tab.t_grid[0] {
                return Err(Error::param("epsilon", "below the density-table resolution"));
            }
        }
        let cut = intensity::tail_cutoff(&hitting, eps);
        let cut_half = intensity::tail_cutoff(&hitting, 0.5 * eps);
        Ok(FilterModel {
            drift,
            obs,
            dt,
            eps,
            richardson: params.richardson,
            resample_threshold: params.resample_threshold,
            n_particles: params.n_particles,
            cut,
            cut_half,
            tail: hitting.tail_at(eps),
            tail_half: hitting.tail_at(0.5 * eps),
            hitting,
        })
    }
}

/// Normalized statistics of the current cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub t: f64,
    /// Alive mass over total mass.
    pub z: f64,
    /// `Σ_alive w b / Σ_all w`, an estimate of `E[1_{τ>t} b(t, X_t) | F^Y_t]`.
    pub bhat: f64,
    /// `Σ_alive w b / Σ_alive w`.
    pub theta: f64,
    pub ess: f64,
    pub lambda: f64,
    pub n_alive: usize,
    pub log_mass: f64,
    /// Alive-conditioned `(π f, π Af, π fb)` per probe.
    pub probes: Vec<[f64; 3]>,
}

#[derive(Default)]
struct Sums {
    alive: f64,
    b: f64,
    w2: f64,
    tail: f64,
    tail_half: f64,
    n_alive: usize,
    probes: Vec<[f64; 3]>,
}

impl FilterModel {
    #[inline]
    fn accumulate(&self, s: &mut Sums, probes: &[Bump], t: f64, x: f64, w: f64) {
        let b = self.obs.eval(t, x);
        s.alive += w;
        s.b += w * b;
        s.w2 += w * w;
        s.n_alive += 1;
        if x < self.cut {
            s.tail += w * self.tail.eval(&self.hitting, x);
        }
        if self.richardson && x < self.cut_half {
            s.tail_half += w * self.tail_half.eval(&self.hitting, x);
        }
        for (p, acc) in probes.iter().zip(s.probes.iter_mut()) {
            if let Some((f, af)) = p.eval_with_generator(&self.drift, x) {
                acc[0] += w * f;
                acc[1] += w * af;
                acc[2] += w * f * b;
            }
        }
    }

    fn finish(&self, s: Sums, dead: f64, log_norm: f64, t: f64) -> Moments {
        let total = s.alive + dead;
        let lambda = if s.alive > 0.0 {
            let l = s.tail / s.alive / self.eps;
            if self.richardson {
                (2.0 * s.tail_half / s.alive / (0.5 * self.eps) - l).max(0.0)
            } else {
                l
            }
        } else {
            0.0
        };
        let inv = if s.alive > 0.0 { 1.0 / s.alive } else { 0.0 };
        Moments {
            t,
            z: s.alive / total,
            bhat: s.b / total,
            theta: s.b * inv,
            ess: if s.w2 > 0.0 { s.alive * s.alive / s.w2 } else { 0.0 },
            lambda,
            n_alive: s.n_alive,
            log_mass: total.ln() + log_norm,
            probes: s.probes.iter().map(|p| [p[0] * inv, p[1] * inv, p[2] * inv]).collect(),
        }
    }

    pub fn moments(&self, cloud: &ParticleCloud, probes: &[Bump]) -> Moments {
        let mut s = Sums {
            probes: vec![[0.0; 3]; probes.len()],
            ..Default::default()
        };
        for i in 0..cloud.len() {
            if cloud.alive[i] {
                self.accumulate(&mut s, probes, cloud.t, cloud.x[i], cloud.logw[i].exp());
            }
        }
        self.finish(s, cloud.dead_mass, cloud.log_norm, cloud.t)
    }
}

/// Steps one cloud along an observation record.
#[derive(Debug, Clone)]
pub struct FilterEngine<'m> {
    model: &'m FilterModel,
    cloud: ParticleCloud,
    key: u64,
    k: u64,
    probes: Vec<Bump>,
    moments: Moments,
    absorbed_at: Option<f64>,
}

impl<'m> FilterEngine<'m> {
    /// `key` seeds the particle and resampling streams of this run.
    pub fn new(model: &'m FilterModel, cloud: ParticleCloud, key: u64, probes: Vec<Bump>) -> Self {
        let moments = model.moments(&cloud, &probes);
        let absorbed_at = (moments.n_alive == 0).then_some(cloud.t);
        FilterEngine {
            model,
            cloud,
            key,
            k: 0,
            probes,
            moments,
            absorbed_at,
        }
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> ParticleCloud {
        self.cloud
    }

    pub fn absorbed_at(&self) -> Option<f64> {
        self.absorbed_at
    }

    /// One step with observation increment `dy` over `[t, t + dt]`.
    pub fn advance(&mut self, dy: f64) {
        let m = self.model;
        let dt = m.dt;
        let t = self.cloud.t;
        let t1 = t + dt;
        if self.absorbed_at.is_some() {
            self.cloud.t = t1;
            self.moments.t = t1;
            self.k += 1;
            return;
        }
        let sdt = dt.sqrt();
        let mut s = Sums {
            probes: vec![[0.0; 3]; self.probes.len()],
            ..Default::default()
        };
        let mut dead = 0.0;
        let c = &mut self.cloud;
        for i in 0..c.x.len() {
            if !c.alive[i] {
                continue;
            }
            let x = c.x[i];
            let b = m.obs.eval(t, x);
            let lw = c.logw[i] + b * dy - 0.5 * b * b * dt;
            let w = lw.exp();
            let [u0, u1] = Stream::new(self.key, Domain::Particle, 0, i as u32).uniforms(self.k);
            let xn = x + m.drift.eval(x) * dt + sdt * norm_inv(u0);
            let killed = xn <= 0.0 || {
                let r = 2.0 * x * xn / dt;
                // Uniforms never fall below 2^-54, so e^{-40} is unreachable.
                r < 40.0 && u1 < hit_prob(x, xn, dt)
            };
            if killed {
                c.alive[i] = false;
                c.logw[i] = f64::NEG_INFINITY;
                dead += w;
                continue;
            }
            c.x[i] = xn;
            c.logw[i] = lw;
            m.accumulate(&mut s, &self.probes, t1, xn, w);
        }
        c.dead_mass += dead;
        c.t = t1;
        if s.n_alive == 0 {
            self.absorbed_at = Some(t1);
            self.moments.t = t1;
            self.k += 1;
            return;
        }
        self.moments = m.finish(s, c.dead_mass, c.log_norm, t1);
        c.renormalize();
        if self.moments.ess < m.resample_threshold * c.x.len() as f64 {
            let u = Stream::new(self.key, Domain::Resample, 0, 0).uniform(self.k);
            c.resample(u);
        }
        self.k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::InitialLaw;
    use crate::hitting::{survival_bm, Method};

    fn model(obs: ObsSpec, n: usize, dt: f64) -> FilterModel {
        let p = FilterParams {
            n_particles: n,
            ..Default::default()
        };
        FilterModel::new(DriftSpec::Zero, obs, HittingModel::new(Method::BmClosed), &p, dt).unwrap()
    }

    #[test]
    fn single_step_survival_without_information() {
        let dt = 0.01;
        let m = model(ObsSpec::Zero, 100_000, dt);
        let cloud = init_cloud(&InitialLaw::Point { x0: 0.2 }, 100_000, 1).unwrap();
        let mut e = FilterEngine::new(&m, cloud, 4, vec![]);
        e.advance(0.3);
        let z = e.moments().z;
        let want = survival_bm(dt, 0.2).unwrap();
        let se = (want * (1.0 - want) / 100_000.0).sqrt();
        assert!((z - want).abs() < 4.0 * se, "{z} vs {want}");
        // Without information the weights stay equal.
        let c = e.cloud();
        let w0 = c.logw.iter().zip(&c.alive).find(|(_, &a)| a).unwrap().0;
        assert!(c.logw.iter().zip(&c.alive).all(|(w, &a)| !a || w == w0));
    }

    #[test]
    fn large_observation_tilts_toward_high_values() {
        let dt = 0.01;
        let law = InitialLaw::Lognormal { m: 0.0, s: 0.5 };
        let m0 = model(ObsSpec::Zero, 2000, dt);
        let m1 = model(ObsSpec::Linear { slope: 1.0 }, 2000, dt);
        let cloud = init_cloud(&law, 2000, 3).unwrap();
        let mut e0 = FilterEngine::new(&m0, cloud.clone(), 4, vec![]);
        let mut e1 = FilterEngine::new(&m1, cloud, 4, vec![]);
        e0.advance(0.5);
        e1.advance(0.5);
        let mean = |c: &ParticleCloud| pi_f(c, |x| x, true).unwrap();
        assert!(mean(e1.cloud()) > mean(e0.cloud()));
    }

    #[test]
    fn engine_moments_agree_with_direct_formulas() {
        let dt = 0.01;
        let m = model(ObsSpec::Linear { slope: 0.7 }, 500, dt);
        let cloud = init_cloud(&InitialLaw::Lognormal { m: -0.5, s: 0.6 }, 500, 2).unwrap();
        let mut e = FilterEngine::new(&m, cloud, 9, vec![]);
        for k in 0..20 {
            e.advance(0.05 * (k as f64).sin());
        }
        let c = e.cloud().clone();
        let mom = m.moments(&c, &[]);
        assert!((mom.z - c.z()).abs() < 1e-12);
        assert!((mom.log_mass - c.log_mass()).abs() < 1e-12);
        let l = intensity(&c, &m.hitting, m.eps, m.richardson).unwrap();
        assert!((mom.lambda - l).abs() < 1e-12 * l.max(1.0));
        let th = pi_f(&c, |x| 0.7 * x, true).unwrap();
        assert!((mom.theta - th).abs() < 1e-12);
        assert!((mom.bhat - pi_f(&c, |x| 0.7 * x, false).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let mut p = FilterParams {
            resample_threshold: 0.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config { field, .. }) if field == "filter.resample_threshold"));
        p = FilterParams {
            n_particles: 50,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
