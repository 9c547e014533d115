//! Joint simulation of the firm value `X`, the observation `Y` and the
//! default time `τ` by Euler steps with Brownian-bridge hit detection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::{DriftSpec, InitialLaw, ObsSpec};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{Domain, Stream};
use crate::stats::{mean, quantile};

/// Probability that a Brownian bridge from `x0` to `x1` over `dt` touches zero.
pub fn bridge_hit_prob(x0: f64, x1: f64, dt: f64) -> Result<f64> {
    if !(x0 > 0.0) {
        return Err(Error::param(
            "x0",
            "must be positive; default should already be declared",
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    Ok(hit_prob(x0, x1, dt))
}

#[inline]
pub(crate) fn hit_prob(x0: f64, x1: f64, dt: f64) -> f64 {
    if x1 <= 0.0 {
        1.0
    } else {
        (-2.0 * x0 * x1 / dt).exp()
    }
}

/// Default cap on stored cells `n_paths × n_steps`.
pub const DEFAULT_CELL_BUDGET: u64 = 50_000_000;

/// Missing fields take the values of [`SimConfig::standard`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub drift: DriftSpec,
    pub obs: ObsSpec,
    pub init: InitialLaw,
    pub bridge_correction: bool,
    pub exec: Exec,
    pub cell_budget: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::standard()
    }
}

impl SimConfig {
    /// The standard scenario: `a(x) = -x`, `b(x) = 0.5x` clipped at 2, `X_0 = 1`, `T = 1`.
    pub fn standard() -> Self {
        SimConfig {
            horizon: 1.0,
            dt: 1e-3,
            n_paths: 400,
            seed: 20_240_601,
            drift: DriftSpec::ou(1.0),
            obs: ObsSpec::Clipped { slope: 0.5, cap: 2.0 },
            init: InitialLaw::Point { x0: 1.0 },
            bridge_correction: true,
            exec: Exec::Parallel,
            cell_budget: DEFAULT_CELL_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("scenario.horizon", "must be positive and finite"));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(Error::config("scenario.dt", "must satisfy 0 < dt <= horizon"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("scenario.n_paths", "must be at least 1"));
        }
        if self.n_paths > u32::MAX as usize {
            return Err(Error::config("scenario.n_paths", "exceeds 2^32"));
        }
        self.init.validate()?;
        self.obs.validate(self.horizon, &[0.0, 0.5, 1.0, 2.0, 5.0, 10.0])?;
        Ok(())
    }

    /// Number of Euler steps; the step is shrunk so the grid ends at the horizon.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }
}

/// One simulated path bundle on the grid `t_k = k·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub path_id: usize,
    pub t: Vec<f64>,
    /// Stopped firm value; zero from the first grid point after default.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub defaulted: bool,
    /// `+∞` when no default before the horizon.
    pub tau: f64,
    /// First grid index `k` with `τ ≤ t_k`.
    pub default_index: Option<usize>,
}

impl Scenario {
    /// Observation increments `Y_{k+1} - Y_k`.
    pub fn dy(&self) -> Vec<f64> {
        self.y.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `D_k = 1_{τ > t_k}`.
    pub fn alive_at(&self, k: usize) -> bool {
        self.default_index.is_none_or(|d| k < d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,X,Y,D\n");
        for k in 0..self.t.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.t[k],
                self.x[k],
                self.y[k],
                u8::from(self.alive_at(k))
            );
        }
        s
    }
}

/// Streams for path `id`: `(W, B)` normals, crossing uniforms, initial draw.
pub(crate) struct PathStreams {
    noise: Stream,
    cross: Stream,
    init: Stream,
}

impl PathStreams {
    /// Streams of a continuation path started from a given state.
    pub(crate) fn inner(seed: u64, id: usize) -> Self {
        let a = id as u32;
        PathStreams {
            noise: Stream::new(seed, Domain::InnerPath, a, 0),
            cross: Stream::new(seed, Domain::InnerPath, a, 1),
            init: Stream::new(seed, Domain::InnerPath, a, 2),
        }
    }

    pub(crate) fn init_uniform(&self) -> f64 {
        self.init.uniform(0)
    }

    pub(crate) fn new(seed: u64, id: usize) -> Self {
        let a = id as u32;
        PathStreams {
            noise: Stream::new(seed, Domain::Scenario, a, 0),
            cross: Stream::new(seed, Domain::Scenario, a, 1),
            init: Stream::new(seed, Domain::Init, a, 0),
        }
    }
}

/// Euler step with bridge-corrected killing; `None` when the path defaults.
#[inline]
fn advance(cfg: &SimConfig, st: &PathStreams, k: usize, x: f64, dt: f64, zw: f64) -> Option<f64> {
    let next = x + cfg.drift.eval(x) * dt + dt.sqrt() * zw;
    if next <= 0.0 {
        return None;
    }
    if cfg.bridge_correction && st.cross.uniform(k as u64) < hit_prob(x, next, dt) {
        return None;
    }
    Some(next)
}

pub fn simulate_scenario(cfg: &SimConfig, path_id: usize) -> Result<Scenario> {
    cfg.validate()?;
    Ok(simulate_unchecked(cfg, path_id))
}

fn simulate_unchecked(cfg: &SimConfig, path_id: usize) -> Scenario {
    let st = PathStreams::new(cfg.seed, path_id);
    let x0 = cfg.init.sample(st.init.uniform(0));
    run_path(cfg, &st, path_id, 0.0, x0, cfg.n_steps())
}

/// `n` steps of the signal and observation from `x0 > 0` at time `t0`; the
/// observation starts at zero.
pub(crate) fn run_path(cfg: &SimConfig, st: &PathStreams, path_id: usize, t0: f64, x0: f64, n: usize) -> Scenario {
    let dt = cfg.step();
    let sdt = dt.sqrt();
    let mut t = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    let mut x = x0;
    let mut y = 0.0;
    let mut alive = true;
    let mut tau = f64::INFINITY;
    let mut default_index = None;
    t.push(t0);
    xs.push(x);
    ys.push(y);
    for k in 0..n {
        let tk = t0 + k as f64 * dt;
        let [zw, zb] = st.noise.normals(k as u64);
        let b = if alive { cfg.obs.eval(tk, x) } else { 0.0 };
        y += b * dt + sdt * zb;
        if alive {
            match advance(cfg, st, k, x, dt, zw) {
                Some(next) => x = next,
                None => {
                    alive = false;
                    x = 0.0;
                    tau = tk + 0.5 * dt;
                    default_index = Some(k + 1);
                }
            }
        }
        t.push(t0 + (k + 1) as f64 * dt);
        xs.push(x);
        ys.push(y);
    }
    Scenario {
        path_id,
        t,
        x: xs,
        y: ys,
        defaulted: default_index.is_some(),
        tau,
        default_index,
    }
}

/// Default time and terminal stopped value without storing the path.
pub fn simulate_terminal(cfg: &SimConfig, path_id: usize) -> (f64, f64) {
    let n = cfg.n_steps();
    let dt = cfg.step();
    let st = PathStreams::new(cfg.seed, path_id);
    let mut x = cfg.init.sample(st.init.uniform(0));
    for k in 0..n {
        let [zw, _] = st.noise.normals(k as u64);
        match advance(cfg, &st, k, x, dt, zw) {
            Some(next) => x = next,
            None => return (k as f64 * dt + 0.5 * dt, 0.0),
        }
    }
    (f64::INFINITY, x)
}

pub const TAU_QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_paths: usize,
    pub default_freq: f64,
    /// Quantiles of `τ`; `null` where the level falls in the survival mass.
    pub tau_quantiles: BTreeMap<String, Option<f64>>,
    pub mean_x_t: f64,
    pub second_moment_x_t: f64,
}

impl BatchSummary {
    pub fn from_terminal(taus: &[f64], x_t: &[f64]) -> Self {
        let n = taus.len();
        let mut sorted: Vec<f64> = taus.to_vec();
        sorted.sort_by(f64::total_cmp);
        let defaults = sorted.iter().filter(|t| t.is_finite()).count();
        let mut tau_quantiles = BTreeMap::new();
        for q in TAU_QUANTILE_LEVELS {
            let v = quantile(&sorted, q);
            tau_quantiles.insert(format!("{q}"), v.is_finite().then_some(v));
        }
        let sq: Vec<f64> = x_t.iter().map(|x| x * x).collect();
        BatchSummary {
            n_paths: n,
            default_freq: defaults as f64 / n as f64,
            tau_quantiles,
            mean_x_t: mean(x_t),
            second_moment_x_t: mean(&sq),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub summary: BatchSummary,
}

pub fn simulate_batch(cfg: &SimConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let cells = cfg.n_paths as u64 * (cfg.n_steps() as u64 + 1);
    if cells > cfg.cell_budget {
        return Err(Error::ResourceGuard(format!(
            "{} paths × {} steps = {cells} cells exceeds budget {}",
            cfg.n_paths,
            cfg.n_steps(),
            cfg.cell_budget
        )));
    }
    let scenarios = par::map_indexed(cfg.exec, cfg.n_paths, |i| simulate_unchecked(cfg, i));
    let taus: Vec<f64> = scenarios.iter().map(|s| s.tau).collect();
    let x_t: Vec<f64> = scenarios.iter().map(|s| *s.x.last().expect("nonempty path")).collect();
    Ok(ScenarioSet {
        summary: BatchSummary::from_terminal(&taus, &x_t),
        scenarios,
    })
}

/// Batch summary from terminal values only; no cell budget applies.
pub fn simulate_summary(cfg: &SimConfig) -> Result<BatchSummary> {
    cfg.validate()?;
    let out = par::map_indexed(cfg.exec, cfg.n_paths, |i| simulate_terminal(cfg, i));
    let (taus, x_t): (Vec<f64>, Vec<f64>) = out.into_iter().unzip();
    Ok(BatchSummary::from_terminal(&taus, &x_t))
}

impl ScenarioSet {
    /// Writes `path_<i>.csv` per scenario and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for s in &self.scenarios {
            std::fs::write(dir.join(format!("path_{:05}.csv", s.path_id)), s.to_csv())?;
        }
        std::fs::write(dir.join("summary.json"), self.summary.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    fn bm(n: usize, dt: f64, bridge: bool) -> SimConfig {
        SimConfig {
            horizon: 1.0,
            dt,
            n_paths: n,
            seed: 7,
            drift: DriftSpec::Zero,
            obs: ObsSpec::Zero,
            init: InitialLaw::Point { x0: 1.0 },
            bridge_correction: bridge,
            exec: Exec::Parallel,
            cell_budget: DEFAULT_CELL_BUDGET,
        }
    }

    #[test]
    fn bridge_prob_examples() {
        assert_eq!(bridge_hit_prob(1.0, -0.5, 0.01).unwrap(), 1.0);
        assert!((bridge_hit_prob(0.1, 0.1, 0.02).unwrap() - 0.367_879_441_171_442_33).abs() < 1e-15);
        assert!(bridge_hit_prob(1.0, 1.0, 0.01).unwrap() < 1e-80);
        assert!(bridge_hit_prob(0.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn scenario_shape() {
        let cfg = bm(1, 0.01, true);
        let s = simulate_scenario(&cfg, 3).unwrap();
        assert_eq!(s.t.len(), 101);
        assert!(s.tau > 0.0);
        for k in 0..s.t.len() {
            if s.alive_at(k) {
                assert!(s.x[k] > 0.0);
            } else {
                assert_eq!(s.x[k], 0.0);
            }
        }
        assert!(s.to_csv().starts_with("t,X,Y,D\n0,1,0,1\n"));
    }

    #[test]
    fn default_frequency_matches_closed_form() {
        let s = simulate_summary(&bm(20_000, 0.01, true)).unwrap();
        let p = s.default_freq;
        let se = (p * (1.0 - p) / 20_000.0).sqrt();
        assert!((p - 0.317_310_507_862_914_1).abs() < 4.0 * se, "{p}");
    }

    #[test]
    fn driftless_mean_is_preserved() {
        let s = simulate_summary(&bm(20_000, 0.01, true)).unwrap();
        let se = ((s.second_moment_x_t - s.mean_x_t.powi(2)) / 20_000.0).sqrt();
        assert!((s.mean_x_t - 1.0).abs() < 4.0 * se);
    }

    #[test]
    fn workers_do_not_change_paths() {
        let cfg = bm(64, 0.01, true);
        let a = crate::par::with_threads(1, || simulate_batch(&cfg).unwrap());
        let b = crate::par::with_threads(3, || simulate_batch(&cfg).unwrap());
        let c = simulate_batch(&SimConfig {
            exec: Exec::Sequential,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn guards() {
        assert!(simulate_batch(&bm(0, 0.01, true)).is_err());
        let mut cfg = bm(10, 0.01, true);
        cfg.cell_budget = 100;
        assert!(matches!(simulate_batch(&cfg), Err(Error::ResourceGuard(_))));
        cfg.dt = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "scenario.dt"));
    }

    #[test]
    fn observation_noise_is_standard() {
        let mut cfg = bm(200, 0.01, true);
        cfg.obs = ObsSpec::Linear { slope: 0.5 };
        let set = simulate_batch(&cfg).unwrap();
        let dt = cfg.step();
        let mut resid = Vec::new();
        for s in &set.scenarios {
            for k in 0..s.t.len() - 1 {
                resid.push((s.y[k + 1] - s.y[k] - cfg.obs.eval(s.t[k], s.x[k]) * dt) / dt.sqrt());
            }
        }
        let e = Estimate::from_samples(&resid);
        assert!(e.mean.abs() < 4.0 * e.stderr);
        let var = crate::stats::variance(&resid);
        assert!((var - 1.0).abs() < 4.0 * (2.0 / resid.len() as f64).sqrt());
    }
}
