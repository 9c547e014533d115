use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::Scenario;

use super::cloud::ParticleCloud;
use super::ks::Bump;
use super::{FilterEngine, FilterModel};

/// What the filter sees: observation increments, plus the default time for
/// the quantities conditioned on the enlarged filtration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dt: f64,
    pub dy: Vec<f64>,
    /// `+∞` when no default is observed.
    pub tau: f64,
}

impl Observation {
    pub fn from_scenario(s: &Scenario) -> Self {
        Observation {
            dt: if s.t.len() > 1 { s.t[1] - s.t[0] } else { 0.0 },
            dy: s.dy(),
            tau: s.tau,
        }
    }
}

/// Filter output at one grid time; increments refer to `[t, t + dt]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub t: f64,
    pub z: f64,
    pub lambda: f64,
    pub bhat: f64,
    /// Estimate of `E[b(t, X_t) | G_t]`; zero once default is observed.
    pub bhat_g: f64,
    /// Alive-conditioned `b`, `bhat / z`.
    pub theta: f64,
    pub ess: f64,
    pub dy: f64,
    /// Innovation increment `dy - bhat dt`.
    pub d_by: f64,
    /// Enlarged-filtration innovation increment `dy - bhat_g dt`.
    pub d_beta: f64,
    /// `1_{τ > t}`.
    pub alive: bool,
    pub log_mass: f64,
    pub n_alive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrack {
    pub bump: Bump,
    pub pi_f: Vec<f64>,
    pub pi_af: Vec<f64>,
    pub pi_fb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTrajectory {
    pub dt: f64,
    pub tau: f64,
    pub states: Vec<FilterState>,
    pub xi: Vec<f64>,
    pub kappa: Vec<f64>,
    /// `ξ` from the Euler scheme `ξ_{k+1} = ξ_k (1 + bhat_k dy_k)`.
    pub xi_euler: Vec<f64>,
    /// `C_t = ∫_0^t λ Z ds`.
    pub c: Vec<f64>,
    /// `Λ_t = ∫_0^{t∧τ} λ ds`.
    pub lambda_int: Vec<f64>,
    /// Compensated default indicator `D_t + Λ_t - 1`.
    pub l: Vec<f64>,
    pub absorbed_at: Option<f64>,
    pub probes: Vec<ProbeTrack>,
}

/// Runs the filter from `cloud` along `obs`.
pub fn run_filter(
    model: &FilterModel,
    cloud: ParticleCloud,
    key: u64,
    obs: &Observation,
    probes: &[Bump],
) -> Result<FilterTrajectory> {
    if (obs.dt - model.dt).abs() > 1e-12 * model.dt {
        return Err(Error::param("dt", "observation grid differs from the filter step"));
    }
    for p in probes {
        p.validate()?;
    }
    let n = obs.dy.len();
    let mut engine = FilterEngine::new(model, cloud, key, probes.to_vec());
    let mut states = Vec::with_capacity(n + 1);
    let mut tracks: Vec<ProbeTrack> = probes
        .iter()
        .map(|b| ProbeTrack {
            bump: *b,
            pi_f: Vec::with_capacity(n + 1),
            pi_af: Vec::with_capacity(n + 1),
            pi_fb: Vec::with_capacity(n + 1),
        })
        .collect();
    for k in 0..=n {
        let m = engine.moments();
        let dy = if k < n { obs.dy[k] } else { 0.0 };
        let alive = obs.tau > m.t;
        let bhat_g = if alive { m.theta } else { 0.0 };
        states.push(FilterState {
            t: m.t,
            z: m.z,
            lambda: m.lambda,
            bhat: m.bhat,
            bhat_g,
            theta: m.theta,
            ess: m.ess,
            dy,
            d_by: dy - m.bhat * model.dt,
            d_beta: dy - bhat_g * model.dt,
            alive,
            log_mass: m.log_mass,
            n_alive: m.n_alive,
        });
        for (tr, p) in tracks.iter_mut().zip(&m.probes) {
            let on = if alive { 1.0 } else { 0.0 };
            tr.pi_f.push(on * p[0]);
            tr.pi_af.push(on * p[1]);
            tr.pi_fb.push(on * p[2]);
        }
        if k < n {
            engine.advance(dy);
        }
    }
    let mut traj = FilterTrajectory {
        dt: model.dt,
        tau: obs.tau,
        absorbed_at: engine.absorbed_at(),
        xi: Vec::new(),
        kappa: Vec::new(),
        xi_euler: Vec::new(),
        c: Vec::new(),
        lambda_int: Vec::new(),
        l: Vec::new(),
        probes: tracks,
        states,
    };
    traj.fill_integrals();
    if traj.absorbed_at.is_none() {
        let (xi, kappa) = multiplicative_factors(&traj)?;
        traj.xi = xi;
        traj.kappa = kappa;
    }
    Ok(traj)
}

impl FilterTrajectory {
    /// Trapezoid sums for `C` and `Λ`; the step containing `τ` is covered
    /// by its left-point value up to `τ`.
    fn fill_integrals(&mut self) {
        let dt = self.dt;
        let n = self.states.len();
        let (mut c, mut lam, mut xe) = (0.0, 0.0, 1.0);
        self.c = Vec::with_capacity(n);
        self.lambda_int = Vec::with_capacity(n);
        self.l = Vec::with_capacity(n);
        self.xi_euler = Vec::with_capacity(n);
        for k in 0..n {
            let s = &self.states[k];
            self.c.push(c);
            self.lambda_int.push(lam);
            self.l.push(f64::from(u8::from(s.alive)) + lam - 1.0);
            self.xi_euler.push(xe);
            xe *= 1.0 + s.bhat * s.dy;
            let Some(next) = self.states.get(k + 1) else { break };
            c += 0.5 * (s.lambda * s.z + next.lambda * next.z) * dt;
            if self.tau >= next.t {
                lam += 0.5 * (s.lambda + next.lambda) * dt;
            } else if self.tau > s.t {
                lam += s.lambda * (self.tau - s.t);
            }
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Grid index closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.states.len() - 1)
    }

    /// `∫_0^t λ ds` on the whole path (not stopped at default), trapezoid rule.
    pub fn lambda_cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.states.len());
        for (k, s) in self.states.iter().enumerate() {
            if k > 0 {
                acc += 0.5 * (self.states[k - 1].lambda + s.lambda) * self.dt;
            }
            out.push(acc);
        }
        out
    }

    /// Columns `t, Z, lambda, bhat, bhat_G, ESS, xi, kappa, C, Lambda, D`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,Z,lambda,bhat,bhat_G,ESS,xi,kappa,C,Lambda,D\n");
        for (k, s) in self.states.iter().enumerate() {
            let xi = self.xi.get(k).copied().unwrap_or(f64::NAN);
            let kappa = self.kappa.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.z,
                s.lambda,
                s.bhat,
                s.bhat_g,
                s.ess,
                xi,
                kappa,
                self.c[k],
                self.lambda_int[k],
                u8::from(s.alive)
            );
        }
        out
    }
}

/// `ξ = exp(∫ bhat dY - ½ ∫ bhat² ds)` and `κ = exp(∫ θ dY - ½ ∫ θ² ds)`
/// with left-point sums on the filter grid.
pub fn multiplicative_factors(traj: &FilterTrajectory) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(t) = traj.absorbed_at {
        return Err(Error::Absorbed { time: t });
    }
    let dt = traj.dt;
    let (mut lx, mut lk) = (0.0f64, 0.0f64);
    let mut xi = Vec::with_capacity(traj.states.len());
    let mut kappa = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        xi.push(lx.exp());
        kappa.push(lk.exp());
        lx += s.bhat * s.dy - 0.5 * s.bhat * s.bhat * dt;
        lk += s.theta * s.dy - 0.5 * s.theta * s.theta * dt;
    }
    Ok((xi, kappa))
}

/// `max_t |Z_t - e^{-∫λ} κ_t / ξ_t| / Z_t`.
pub fn decomposition_gap(traj: &FilterTrajectory) -> Result<f64> {
    let (xi, kappa) = multiplicative_factors(traj)?;
    let lam = traj.lambda_cumulative();
    Ok(traj
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| (s.z - (-lam[k]).exp() * kappa[k] / xi[k]).abs() / s.z)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{InitialLaw, ObsSpec};
    use crate::filter::{init_cloud, FilterParams};
    use crate::hitting::{HittingModel, Method};
    use crate::simulate::{simulate_scenario, SimConfig};

    fn setup(obs: ObsSpec) -> (SimConfig, FilterModel) {
        let mut cfg = SimConfig::standard();
        cfg.dt = 0.01;
        cfg.obs = obs;
        let p = FilterParams {
            n_particles: 1000,
            ..Default::default()
        };
        let m = FilterModel::new(
            cfg.drift.clone(),
            obs,
            HittingModel::new(Method::OuClosed { k: 1.0 }),
            &p,
            cfg.step(),
        )
        .unwrap();
        (cfg, m)
    }

    #[test]
    fn zero_observation_gives_unit_factors() {
        let (cfg, m) = setup(ObsSpec::Zero);
        let s = simulate_scenario(&cfg, 0).unwrap();
        let cloud = init_cloud(&InitialLaw::Point { x0: 1.0 }, 1000, 1).unwrap();
        let tr = run_filter(&m, cloud, 1, &Observation::from_scenario(&s), &[]).unwrap();
        assert!(tr.xi.iter().all(|&v| v == 1.0));
        assert!(tr.kappa.iter().all(|&v| v == 1.0));
        assert_eq!(tr.states.len(), 101);
        assert!(tr.c.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(tr.l[0], 0.0);
        assert!(tr
            .to_csv()
            .starts_with("t,Z,lambda,bhat,bhat_G,ESS,xi,kappa,C,Lambda,D\n0,1,"));
    }

    #[test]
    fn zakai_mass_is_xi_and_alive_mass_is_product() {
        let (cfg, m) = setup(ObsSpec::Clipped { slope: 0.5, cap: 2.0 });
        let s = simulate_scenario(&cfg, 2).unwrap();
        let cloud = init_cloud(&cfg.init, 1000, 1).unwrap();
        let tr = run_filter(&m, cloud, 5, &Observation::from_scenario(&s), &[]).unwrap();
        for (k, st) in tr.states.iter().enumerate() {
            assert!(st.z > 0.0 && st.z <= 1.0);
            assert!(tr.xi[k] > 0.0 && tr.kappa[k] > 0.0);
            // Total unnormalized mass tracks the exponential formula for ξ.
            assert!((st.log_mass - tr.xi[k].ln()).abs() < 0.05);
        }
        let gap = decomposition_gap(&tr).unwrap();
        assert!(gap < 0.2, "{gap}");
        let last = tr.states.len() - 1;
        let rel = (tr.xi[last] - tr.xi_euler[last]).abs() / tr.xi[last];
        assert!(rel < 0.05, "{rel}");
    }
}
