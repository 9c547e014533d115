//! Defaultable zero-coupon bond prices from the filter output, and
//! independent nested Monte Carlo representations of the same price.
//!
//! Interest rates are zero throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterEngine, FilterModel, ParticleCloud};
use crate::hitting::HittingModel;
use crate::par::{self, Exec};
use crate::quad;
use crate::rng::{derive_seed, Domain, Stream};
use crate::simulate::{run_path, simulate_scenario, PathStreams, SimConfig};
use crate::stats::Estimate;

/// Payment at default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RebateSpec {
    #[default]
    None,
    Constant {
        value: f64,
    },
    /// `R(s) = intercept + slope · s`.
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// `g(s, Y_s) = clamp(intercept + slope · Y_s, 0, cap)`, paid at default.
    Observation {
        intercept: f64,
        slope: f64,
        cap: f64,
    },
}

impl RebateSpec {
    pub fn validate(&self, maturity: f64) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(&format!("pricing.rebate.{name}"), "must be finite"))
            }
        };
        match *self {
            RebateSpec::None => Ok(()),
            RebateSpec::Constant { value } => finite(value, "value"),
            RebateSpec::Linear { intercept, slope } => {
                finite(intercept, "intercept")?;
                finite(slope, "slope")?;
                finite(intercept + slope * maturity, "slope")
            }
            RebateSpec::Observation { intercept, slope, cap } => {
                finite(intercept, "intercept")?;
                finite(slope, "slope")?;
                if !(cap >= 0.0 && cap.is_finite()) {
                    return Err(Error::config("pricing.rebate.cap", "must be finite and nonnegative"));
                }
                Ok(())
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, RebateSpec::Observation { .. })
    }

    /// `R(s)` for the deterministic kinds.
    pub fn at(&self, s: f64) -> Option<f64> {
        match *self {
            RebateSpec::None => Some(0.0),
            RebateSpec::Constant { value } => Some(value),
            RebateSpec::Linear { intercept, slope } => Some(intercept + slope * s),
            RebateSpec::Observation { .. } => None,
        }
    }

    /// `g(s, y)`; deterministic kinds ignore `y`.
    pub fn payoff(&self, s: f64, y: f64) -> f64 {
        match *self {
            RebateSpec::Observation { intercept, slope, cap } => (intercept + slope * y).clamp(0.0, cap),
            _ => self.at(s).unwrap_or(0.0),
        }
    }

    /// The observation-driven rebate with the observation frozen at `y_t`.
    pub fn frozen(&self, y_t: f64) -> RebateSpec {
        match *self {
            RebateSpec::Observation { .. } => RebateSpec::Constant {
                value: self.payoff(0.0, y_t),
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondSpec {
    pub maturity: f64,
    #[serde(default = "unit_face")]
    pub face: f64,
    #[serde(default)]
    pub rebate: RebateSpec,
}

fn unit_face() -> f64 {
    1.0
}

impl BondSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::config("pricing.maturity", "must be positive and finite"));
        }
        if !(self.face >= 0.0 && self.face.is_finite()) {
            return Err(Error::config("pricing.face", "must be finite and nonnegative"));
        }
        self.rebate.validate(self.maturity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingReport {
    pub t: f64,
    pub method: String,
    pub survival_price: f64,
    pub rebate_value: f64,
    pub total: f64,
    pub stderr: f64,
}

impl PricingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_times(cloud: &ParticleCloud, t: f64, maturity: f64) -> Result<()> {
    if (cloud.t - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::param("t", format!("cloud is at time {}, not {t}", cloud.t)));
    }
    if !(t <= maturity) {
        return Err(Error::param(
            "maturity",
            format!("{maturity} precedes the pricing time {t}"),
        ));
    }
    Ok(())
}

/// Normalized alive weights with positions.
fn alive_weights(cloud: &ParticleCloud) -> Result<Vec<(f64, f64)>> {
    let mut out: Vec<(f64, f64)> = (0..cloud.len())
        .filter(|&i| cloud.alive[i])
        .map(|i| (cloud.x[i], cloud.logw[i].exp()))
        .collect();
    let total: f64 = out.iter().map(|p| p.1).sum();
    if out.is_empty() || !(total > 0.0) {
        return Err(Error::Absorbed { time: cloud.t });
    }
    for p in out.iter_mut() {
        p.1 /= total;
    }
    Ok(out)
}

/// Weighted mean of `f` over the alive stratum with its particle standard
/// error `sqrt(Σ w² (f - mean)²)`.
fn weighted<F: Fn(f64) -> Result<f64>>(cloud: &ParticleCloud, f: F) -> Result<(f64, f64)> {
    let ws = alive_weights(cloud)?;
    let vals = ws.iter().map(|&(x, _)| f(x)).collect::<Result<Vec<_>>>()?;
    let m: f64 = ws.iter().zip(&vals).map(|(p, v)| p.1 * v).sum();
    let var: f64 = ws.iter().zip(&vals).map(|(p, v)| p.1 * p.1 * (v - m).powi(2)).sum();
    Ok((m, var.sqrt()))
}

/// `Σ_alive w H^a(T - t, x) / Σ_alive w`, the conditional survival
/// probability to maturity on the survival branch.
pub fn survival_price(cloud: &ParticleCloud, hitting: &HittingModel, t: f64, maturity: f64) -> Result<f64> {
    check_times(cloud, t, maturity)?;
    Ok(survival_with_error(cloud, hitting, maturity)?.0)
}

fn survival_with_error(cloud: &ParticleCloud, hitting: &HittingModel, maturity: f64) -> Result<(f64, f64)> {
    let h = maturity - cloud.t;
    if h <= 0.0 {
        alive_weights(cloud)?;
        return Ok((1.0, 0.0));
    }
    weighted(cloud, |x| hitting.survival(h, x))
}

/// `∫_0^h ℓ^a(u, x) R(t + u) du`, split where the density peaks.
fn rebate_integral(hitting: &HittingModel, rebate: &RebateSpec, t: f64, h: f64, x: f64) -> Result<f64> {
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        hitting.density(u, x).unwrap_or(f64::NAN) * rebate.at(t + u).unwrap_or(0.0)
    };
    let split = (x * x).min(h);
    let tol = 1e-11;
    Ok(quad::integrate(f, 0.0, split, tol)?.value + quad::integrate(f, split, h, tol)?.value)
}

/// Value of the deterministic rebate `R(τ) 1_{t < τ ≤ T}` on the survival
/// branch, by quadrature of the hitting density per distinct particle.
pub fn rebate_value(
    cloud: &ParticleCloud,
    hitting: &HittingModel,
    t: f64,
    rebate: &RebateSpec,
    maturity: f64,
) -> Result<f64> {
    check_times(cloud, t, maturity)?;
    rebate.validate(maturity)?;
    if !rebate.is_deterministic() {
        return Err(Error::param(
            "rebate",
            "observation-driven rebates need the nested estimator or a frozen forecast",
        ));
    }
    let mut ws = alive_weights(cloud)?;
    let h = maturity - t;
    if h <= 0.0 || matches!(rebate, RebateSpec::None) {
        return Ok(0.0);
    }
    // Resampled clouds repeat positions; integrate each distinct one once.
    ws.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut i = 0;
    while i < ws.len() {
        let x = ws[i].0;
        let mut w = 0.0;
        while i < ws.len() && ws[i].0 == x {
            w += ws[i].1;
            i += 1;
        }
        total += w * rebate_integral(hitting, rebate, t, h, x)?;
    }
    Ok(total)
}

/// Bond price at time `t`. On the default branch the rebate has already been
/// settled and the report carries zeros.
pub fn bond_price(
    cloud: &ParticleCloud,
    hitting: &HittingModel,
    t: f64,
    spec: &BondSpec,
    defaulted: bool,
) -> Result<PricingReport> {
    spec.validate()?;
    if defaulted {
        return Ok(PricingReport {
            t,
            method: "defaulted".into(),
            survival_price: 0.0,
            rebate_value: 0.0,
            total: 0.0,
            stderr: 0.0,
        });
    }
    check_times(cloud, t, spec.maturity)?;
    let (s, se) = survival_with_error(cloud, hitting, spec.maturity)?;
    let r = rebate_value(cloud, hitting, t, &spec.rebate, spec.maturity)?;
    Ok(PricingReport {
        t,
        method: "filter_projection".into(),
        survival_price: s,
        rebate_value: r,
        total: spec.face * s + r,
        stderr: spec.face * se,
    })
}

/// Controls for the nested estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedSpec {
    pub n_inner: usize,
    /// Inner runs restarted from each simulated pre-default state.
    #[serde(default = "default_reinner")]
    pub n_reinner: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

fn default_reinner() -> usize {
    4
}

impl NestedSpec {
    fn validate(&self) -> Result<()> {
        if self.n_inner < 2 {
            return Err(Error::param("n_inner", "need at least two inner paths"));
        }
        if self.n_reinner == 0 {
            return Err(Error::param("n_reinner", "must be positive"));
        }
        Ok(())
    }
}

fn steps_between(t: f64, maturity: f64, dt: f64) -> Result<usize> {
    let n = (maturity - t) / dt;
    let r = n.round();
    if (n - r).abs() > 1e-6 || r < 0.0 {
        return Err(Error::param(
            "maturity",
            "maturity - t must be a whole number of filter steps",
        ));
    }
    Ok(r as usize)
}

/// What an inner filter run accumulates.
struct InnerRun {
    /// `∫ λ ds` up to the end of the run or to the default time.
    int_lambda: f64,
    /// `ln(κ_end / κ_start)`.
    log_kappa: f64,
    absorbed: bool,
    /// Filter cloud at the start of the step containing the default.
    pre_default: Option<ParticleCloud>,
}

/// Runs the filter from `cloud` along `dy`, stopping at `tau` (absolute time).
fn run_inner(model: &FilterModel, cloud: &ParticleCloud, key: u64, dy: &[f64], tau: f64, capture: bool) -> InnerRun {
    let dt = model.dt;
    let mut engine = FilterEngine::new(model, cloud.clone(), key, Vec::new());
    let mut out = InnerRun {
        int_lambda: 0.0,
        log_kappa: 0.0,
        absorbed: engine.absorbed_at().is_some(),
        pre_default: None,
    };
    if out.absorbed {
        return out;
    }
    let mut lam = engine.moments().lambda;
    for &d in dy {
        let (tk, theta) = (engine.moments().t, engine.moments().theta);
        if tau <= tk + 0.5 * dt + 1e-12 * dt.max(tk) {
            out.int_lambda += lam * (tau - tk).max(0.0);
            if capture {
                out.pre_default = Some(engine.cloud().clone());
            }
            return out;
        }
        out.log_kappa += theta * d - 0.5 * theta * theta * dt;
        engine.advance(d);
        if engine.absorbed_at().is_some() {
            out.absorbed = true;
            return out;
        }
        let next = engine.moments().lambda;
        out.int_lambda += 0.5 * (lam + next) * dt;
        lam = next;
    }
    out
}

/// Nested estimate of `S_t` from the intensity-discount representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountReport {
    pub t: f64,
    pub maturity: f64,
    pub estimate: Estimate,
    /// Mean of `κ_T / κ_t` under the reference measure; one for a true martingale.
    pub kappa_ratio: Estimate,
    pub max_log_kappa: f64,
    pub n_absorbed: usize,
    /// Set when `κ` exploded on some inner path.
    pub flagged: bool,
}

const KAPPA_BLOWUP: f64 = 50.0;

/// Averages `exp(-∫_t^T λ ds) κ_T / κ_t` over inner observation paths that
/// are Brownian motions (the reference measure), each filtered from `cloud`.
pub fn price_via_intensity_discount(
    model: &FilterModel,
    cloud: &ParticleCloud,
    maturity: f64,
    nested: &NestedSpec,
) -> Result<DiscountReport> {
    nested.validate()?;
    let t = cloud.t;
    alive_weights(cloud)?;
    let n = steps_between(t, maturity, model.dt)?;
    let sdt = model.dt.sqrt();
    let runs = par::map_indexed(nested.exec, nested.n_inner, |i| {
        let noise = Stream::new(nested.seed, Domain::InnerPath, i as u32, 0);
        let dy: Vec<f64> = (0..n)
            .map(|k| {
                let [z, _] = noise.normals(k as u64);
                sdt * z
            })
            .collect();
        let key = derive_seed(nested.seed, Domain::InnerPath as u64, i as u64, 1);
        run_inner(model, cloud, key, &dy, f64::INFINITY, false)
    });
    let samples: Vec<f64> = runs
        .iter()
        .map(|r| {
            if r.absorbed {
                0.0
            } else {
                (r.log_kappa - r.int_lambda).exp()
            }
        })
        .collect();
    let ratios: Vec<f64> = runs.iter().map(|r| r.log_kappa.exp()).collect();
    let max_log_kappa = runs.iter().map(|r| r.log_kappa).fold(f64::NEG_INFINITY, f64::max);
    let flagged = !(max_log_kappa.is_finite() && max_log_kappa < KAPPA_BLOWUP);
    Ok(DiscountReport {
        t,
        maturity,
        estimate: Estimate::from_samples(&samples),
        kappa_ratio: Estimate::from_samples(&ratios),
        max_log_kappa,
        n_absorbed: runs.iter().filter(|r| r.absorbed).count(),
        flagged,
    })
}

/// Nested estimate of the stochastic-discounting price with its jump term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuffieReport {
    pub t: f64,
    pub maturity: f64,
    /// `E[exp(-∫_t^{T∧τ} λ ds) | G_t]`.
    pub j: Estimate,
    /// `E[1_{t<τ≤T} ΔJ_τ | G_t]`.
    pub jump: Estimate,
    /// `J_t` minus the jump term, path by path.
    pub difference: Estimate,
    pub survival_price: f64,
    /// Combined standard errors between `difference` and `survival_price`.
    pub z: f64,
}

/// Draws a position from the alive stratum by inverse CDF.
fn draw_position(cum: &[(f64, f64)], u: f64) -> f64 {
    let i = cum.partition_point(|p| p.1 < u).min(cum.len() - 1);
    cum[i].0
}

fn cumulative(cloud: &ParticleCloud) -> Result<Vec<(f64, f64)>> {
    let mut ws = alive_weights(cloud)?;
    let mut acc = 0.0;
    for p in ws.iter_mut() {
        acc += p.1;
        p.1 = acc;
    }
    Ok(ws)
}

/// One draw of `exp(-∫_t^{T∧τ} λ)` under the enlarged filtration: the firm
/// value is drawn from the alive cloud and signal and observation are
/// simulated jointly, so default happens at its true conditional rate.
fn discount_sample(
    sim: &SimConfig,
    model: &FilterModel,
    cloud: &ParticleCloud,
    n: usize,
    seed: u64,
    capture: bool,
) -> Result<(f64, InnerRun)> {
    let cum = cumulative(cloud)?;
    let st = PathStreams::inner(seed, 0);
    let x0 = draw_position(&cum, st.init_uniform());
    let path = run_path(sim, &st, 0, cloud.t, x0, n);
    let key = derive_seed(seed, Domain::Particle as u64, 0, 0);
    let run = run_inner(model, cloud, key, &path.dy(), path.tau, capture);
    let value = if run.absorbed { 0.0 } else { (-run.int_lambda).exp() };
    Ok((value, run))
}

/// `J_t` and the jump term by nested simulation. On each inner path that
/// defaults before maturity, `J_{τ-}` is estimated without bias from
/// `n_reinner` fresh runs started from the pre-default filter state.
pub fn duffie_diagnostic(
    sim: &SimConfig,
    model: &FilterModel,
    cloud: &ParticleCloud,
    maturity: f64,
    nested: &NestedSpec,
) -> Result<DuffieReport> {
    nested.validate()?;
    if (sim.step() - model.dt).abs() > 1e-12 * model.dt {
        return Err(Error::param("dt", "scenario and filter steps differ"));
    }
    if nested.n_inner > 100_000 {
        return Err(Error::ResourceGuard(format!(
            "{} inner paths requested; the diagnostic is meant for small runs",
            nested.n_inner
        )));
    }
    let t = cloud.t;
    let n = steps_between(t, maturity, model.dt)?;
    let s = survival_price(cloud, &model.hitting, t, maturity)?;
    let pairs = par::try_map_indexed(nested.exec, nested.n_inner, |i| -> Result<(f64, f64)> {
        let seed = derive_seed(nested.seed, Domain::InnerPath as u64, i as u64, 0);
        let (j, run) = discount_sample(sim, model, cloud, n, seed, true)?;
        let Some(pre) = run.pre_default else {
            return Ok((j, 0.0));
        };
        let remaining = steps_between(pre.t, maturity, model.dt)?;
        let mut acc = 0.0;
        for r in 0..nested.n_reinner {
            let s2 = derive_seed(seed, Domain::InnerPath as u64, r as u64, 1);
            acc += discount_sample(sim, model, &pre, remaining, s2, false)?.0;
        }
        Ok((j, 1.0 - acc / nested.n_reinner as f64))
    })?;
    let js: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let jumps: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let difference = Estimate::from_samples(&diffs);
    Ok(DuffieReport {
        t,
        maturity,
        j: Estimate::from_samples(&js),
        jump: Estimate::from_samples(&jumps),
        z: difference.z_against_value(s),
        difference,
        survival_price: s,
    })
}

/// Iterated-expectation check of the time-`t` survival price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerReport {
    pub t: f64,
    pub maturity: f64,
    /// Mean of `1_{τ>t} S_t` over scenarios.
    pub mean_price: Estimate,
    /// Direct frequency of `τ > T` on the same scenarios.
    pub survival_freq: Estimate,
    /// Paired differences `1_{τ>t} S_t - 1_{τ>T}`.
    pub paired: Estimate,
    /// Time-zero price from the initial cloud.
    pub price_at_zero: f64,
}

/// Filters `n_paths` scenarios of `sim` up to `t` and compares the mean
/// price with the realized survival frequency.
pub fn tower_check(
    sim: &SimConfig,
    model: &FilterModel,
    t: f64,
    n_paths: usize,
    filter_seed: u64,
) -> Result<TowerReport> {
    sim.validate()?;
    let maturity = sim.horizon;
    let k_stop = steps_between(0.0, t, model.dt)?;
    if k_stop > sim.n_steps() {
        return Err(Error::param("t", "beyond the scenario horizon"));
    }
    let init = crate::filter::init_cloud(&sim.init, model.n_particles, filter_seed)?;
    let price_at_zero = survival_price(&init, &model.hitting, 0.0, maturity)?;
    let rows = par::try_map_indexed(sim.exec, n_paths, |i| -> Result<(f64, f64)> {
        let sc = simulate_scenario(sim, i)?;
        let survived = if sc.tau > maturity { 1.0 } else { 0.0 };
        if !sc.alive_at(k_stop) {
            return Ok((0.0, survived));
        }
        let cloud = crate::filter::init_cloud(&sim.init, model.n_particles, derive_seed(filter_seed, 0, i as u64, 0))?;
        let key = derive_seed(filter_seed, Domain::Particle as u64, i as u64, 0);
        let mut engine = FilterEngine::new(model, cloud, key, Vec::new());
        let dy = sc.dy();
        for &d in &dy[..k_stop] {
            engine.advance(d);
        }
        if let Some(at) = engine.absorbed_at() {
            return Err(Error::Absorbed { time: at });
        }
        let c = engine.into_cloud();
        Ok((survival_price(&c, &model.hitting, c.t, maturity)?, survived))
    })?;
    let prices: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let surv: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let paired: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    Ok(TowerReport {
        t,
        maturity,
        mean_price: Estimate::from_samples(&prices),
        survival_freq: Estimate::from_samples(&surv),
        paired: Estimate::from_samples(&paired),
        price_at_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{DriftSpec, InitialLaw, ObsSpec};
    use crate::filter::{init_cloud, FilterParams};
    use crate::hitting::{survival_bm, survival_ou, Method};

    fn bm() -> HittingModel {
        HittingModel::new(Method::BmClosed)
    }

    #[test]
    fn survival_price_at_time_zero_is_survival_function() {
        let c = init_cloud(&InitialLaw::Point { x0: 1.0 }, 100, 0).unwrap();
        let s = survival_price(&c, &bm(), 0.0, 1.0).unwrap();
        assert!((s - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert_eq!(survival_price(&c, &bm(), 0.0, 0.0).unwrap(), 1.0);
        assert!(survival_price(&c, &bm(), 0.5, 1.0).is_err());
        let ou = HittingModel::new(Method::OuClosed { k: 1.0 });
        let s = survival_price(&c, &ou, 0.0, 1.0).unwrap();
        assert!((s - survival_ou(1.0, 1.0, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn survival_price_monotone_in_maturity() {
        let c = init_cloud(&InitialLaw::Lognormal { m: 0.0, s: 0.5 }, 500, 1).unwrap();
        let mut prev = 1.0;
        for k in 1..20 {
            let s = survival_price(&c, &bm(), 0.0, 0.25 * k as f64).unwrap();
            assert!((0.0..=prev).contains(&s));
            prev = s;
        }
    }

    #[test]
    fn unit_rebate_complements_survival() {
        let c = init_cloud(&InitialLaw::Lognormal { m: -0.3, s: 0.4 }, 300, 2).unwrap();
        for model in [bm(), HittingModel::new(Method::OuClosed { k: 1.0 })] {
            let s = survival_price(&c, &model, 0.0, 1.0).unwrap();
            let r = rebate_value(&c, &model, 0.0, &RebateSpec::Constant { value: 1.0 }, 1.0).unwrap();
            assert!((s + r - 1.0).abs() < 1e-8, "{}", s + r - 1.0);
            assert_eq!(rebate_value(&c, &model, 0.0, &RebateSpec::None, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn bond_price_is_affine_in_rebate() {
        let c = init_cloud(&InitialLaw::Point { x0: 1.0 }, 100, 0).unwrap();
        let ou = HittingModel::new(Method::OuClosed { k: 1.0 });
        let spec = |r: f64| BondSpec {
            maturity: 1.0,
            face: 1.0,
            rebate: RebateSpec::Constant { value: r },
        };
        let sure = bond_price(&c, &ou, 0.0, &spec(1.0), false).unwrap();
        assert!((sure.total - 1.0).abs() < 1e-8);
        let p = bond_price(&c, &ou, 0.0, &spec(0.4), false).unwrap();
        assert!((p.total - (0.4 + 0.6 * p.survival_price)).abs() < 1e-8);
        let d = bond_price(&c, &ou, 0.0, &spec(0.4), true).unwrap();
        assert_eq!(d.total, 0.0);
        assert_eq!(d.method, "defaulted");
        let json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        for key in ["t", "method", "survival_price", "rebate_value", "total", "stderr"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn observation_rebate_needs_forecast() {
        let c = init_cloud(&InitialLaw::Point { x0: 1.0 }, 100, 0).unwrap();
        let g = RebateSpec::Observation {
            intercept: 0.3,
            slope: 0.1,
            cap: 1.0,
        };
        assert!(rebate_value(&c, &bm(), 0.0, &g, 1.0).is_err());
        let frozen = g.frozen(2.0);
        assert_eq!(frozen, RebateSpec::Constant { value: 0.5 });
        assert!(rebate_value(&c, &bm(), 0.0, &frozen, 1.0).is_ok());
    }

    fn zero_obs_setup(np: usize, dt: f64) -> (SimConfig, FilterModel) {
        let mut sim = SimConfig::standard();
        sim.drift = DriftSpec::Zero;
        sim.obs = ObsSpec::Zero;
        sim.dt = dt;
        let p = FilterParams {
            n_particles: np,
            ..Default::default()
        };
        let m = FilterModel::new(DriftSpec::Zero, ObsSpec::Zero, bm(), &p, sim.step()).unwrap();
        (sim, m)
    }

    #[test]
    fn intensity_discount_without_information() {
        let (_, m) = zero_obs_setup(1000, 0.01);
        let c = init_cloud(&InitialLaw::Point { x0: 1.0 }, 1000, 3).unwrap();
        let nested = NestedSpec {
            n_inner: 40,
            n_reinner: 1,
            seed: 5,
            exec: Exec::Sequential,
        };
        let r = price_via_intensity_discount(&m, &c, 1.0, &nested).unwrap();
        assert!(!r.flagged);
        assert_eq!(r.kappa_ratio.mean, 1.0);
        let want = survival_bm(1.0, 1.0).unwrap();
        // ε-bias and particle bias only; the band covers both.
        assert!((r.estimate.mean - want).abs() < 0.02, "{:?}", r.estimate);
        let empty = price_via_intensity_discount(&m, &c, 0.0, &nested).unwrap();
        assert_eq!(empty.estimate.mean, 1.0);
    }

    #[test]
    fn duffie_terms_at_maturity() {
        let (sim, m) = zero_obs_setup(200, 0.01);
        let c = init_cloud(&InitialLaw::Point { x0: 1.0 }, 200, 3).unwrap();
        let nested = NestedSpec {
            n_inner: 10,
            n_reinner: 2,
            seed: 1,
            exec: Exec::Sequential,
        };
        let r = duffie_diagnostic(&sim, &m, &c, 0.0, &nested).unwrap();
        assert_eq!(r.j.mean, 1.0);
        assert_eq!(r.jump.mean, 0.0);
    }
}
