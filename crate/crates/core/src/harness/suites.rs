use crate::coeffs::{DriftSpec, ObsSpec};
use crate::error::{Error, Result};
use crate::filter::{
    decomposition_gap, init_cloud, ks_residual, run_filter, Bump, FilterEngine, FilterModel, FilterParams,
    FilterTrajectory, Observation, ParticleCloud,
};
use crate::hitting::{check_bounds, delta_constant, ell_bridge_mc, BridgeMc, HittingModel};
use crate::par;
use crate::pricing::{
    bond_price, duffie_diagnostic, price_via_intensity_discount, rebate_value, survival_price, tower_check, BondSpec,
    RebateSpec,
};
use crate::rng::{derive_seed, Domain};
use crate::simulate::{simulate_scenario, simulate_terminal, SimConfig};
use crate::stats::{mean, Estimate};

use super::{report_json, run_suite, ExperimentConfig, Measure, Suite, Verdict};

const P_DRIFT: &str = "drift satisfies the standing regularity and growth assumptions";
const P_OBS: &str = "observation coefficient vanishes at zero and grows at most linearly";
const P_INIT: &str = "initial law is a valid law on (0, inf)";
const P_DENSITY: &str = "closed-form first-passage density agrees with the Bessel-bridge estimate";
const P_BOUND: &str = "inverse-time moment of the hitting density is below its explicit bound";
const P_BM_MOMENT: &str = "for Brownian motion the inverse-time moment equals 1/x^2";
const P_DELTA: &str = "bound constant agrees with an independent root-finding oracle";
const P_SUP: &str = "sup over t of t times the density is finite and grid-stable";
const P_ID_A: &str = "Z_t plus the integral of lambda Z has mean one";
const P_ID_B: &str = "default indicator plus the stopped integral of lambda has mean one";
const P_HALVING: &str = "identity gap with the Z-weighted innovation control variate shrinks when the step halves";
const P_WHITE: &str = "innovation increments are uncorrelated at lag one";
const P_INNOV_VAR: &str = "innovation increments have variance dt";
const P_DEGENERATE: &str = "without observation signal Z_t equals the averaged survival function";
const P_DECOMP: &str = "relative gap of the multiplicative decomposition of Z halves with dt and 4x particles";
const P_KS: &str = "residual of the filtering equation with default jumps has mean zero";
const P_DISCOUNT: &str = "projected survival price matches the intensity-discount representation";
const P_KAPPA: &str = "alive-conditioned likelihood ratio is a mean-one martingale";
const P_KAPPA_BOUND: &str = "alive-conditioned likelihood ratio stays bounded on inner paths";
const P_DUFFIE: &str = "stochastic discounting minus its jump term recovers the survival price";
const P_TOWER: &str = "mean projected price equals the realized survival frequency";
const P_TOWER0: &str = "mean projected price equals the time-zero price";
const P_REBATE: &str = "rebate value R(s) = s matches direct simulation of tau on default before maturity";
const P_COMPLEMENT: &str = "unit rebate and survival price sum to one";
const P_AFFINE: &str = "bond price is affine in face value and constant rebate";
const P_DETERMINISM: &str = "report bytes do not depend on the worker count";

pub(crate) fn measure(cfg: &ExperimentConfig, suite: Suite, scale: usize) -> Result<Vec<Measure>> {
    match suite {
        Suite::Coeffs => coeffs(cfg),
        Suite::Hitting => hitting(cfg, scale),
        Suite::Bounds => bounds(cfg),
        Suite::Identities => identities(cfg, scale),
        Suite::Degenerate => degenerate(cfg, scale),
        Suite::Decomposition => decomposition(cfg, scale),
        Suite::Ks => ks(cfg, scale),
        Suite::Pricing => pricing(cfg, scale),
        Suite::Rebate => rebate(cfg, scale),
        Suite::Determinism => determinism(cfg),
    }
}

fn est_detail(e: &Estimate, target: f64) -> String {
    format!("mean {:.6e} stderr {:.3e} target {target} n {}", e.mean, e.stderr, e.n)
}

fn z_measure(name: impl Into<String>, property: &'static str, samples: &[f64], target: f64) -> Measure {
    let e = Estimate::from_samples(samples);
    Measure::new(
        name,
        property,
        Verdict::Z(e.z_against_value(target)),
        est_detail(&e, target),
    )
}

fn coeffs(cfg: &ExperimentConfig) -> Result<Vec<Measure>> {
    let sc = &cfg.scenario;
    let report = crate::coeffs::validate_drift(&sc.drift, &cfg.coeffs.grid)?;
    let mut out: Vec<Measure> = report
        .clauses
        .iter()
        .map(|c| {
            Measure::new(
                format!("drift.{}", c.name),
                P_DRIFT,
                Verdict::Flag(c.pass),
                c.detail.clone(),
            )
        })
        .collect();
    let obs = sc.obs.validate(sc.horizon, &cfg.coeffs.grid);
    out.push(Measure::new(
        "observation",
        P_OBS,
        Verdict::Flag(obs.is_ok()),
        obs.err().map(|e| e.to_string()).unwrap_or_default(),
    ));
    let init = sc.init.validate();
    out.push(Measure::new(
        "initial_law",
        P_INIT,
        Verdict::Flag(init.is_ok()),
        init.err().map(|e| e.to_string()).unwrap_or_default(),
    ));
    Ok(out)
}

fn test_drifts() -> [(&'static str, DriftSpec); 3] {
    [
        ("zero", DriftSpec::Zero),
        ("ou", DriftSpec::ou(1.0)),
        ("plus_one", DriftSpec::Constant { c: 1.0 }),
    ]
}

fn hitting(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let h = &cfg.hitting;
    let mut zs = Vec::new();
    let mut worst = (0.0f64, String::new());
    for (d, (label, drift)) in test_drifts().into_iter().enumerate() {
        let closed = HittingModel::for_drift(&drift, h.mc);
        if !closed.is_closed_form() {
            return Err(Error::param("drift", "test drift lacks a closed form"));
        }
        for (i, &t) in h.density_ts.iter().enumerate() {
            for (j, &x) in h.density_xs.iter().enumerate() {
                let cell = (i * h.density_xs.len() + j) as u64;
                let mc = BridgeMc {
                    n_bridges: h.mc.n_bridges * scale,
                    seed: derive_seed(h.mc.seed, Domain::Bridge as u64, d as u64, cell),
                    ..h.mc
                };
                let exact = closed.density(t, x)?;
                let est = ell_bridge_mc(&drift, t, x, &mc)?;
                // Deterministic bridge functionals leave only rounding.
                let sigma = est.stderr + 1e-10 * exact.abs() + 1e-300;
                let z = (est.mean - exact).abs() / sigma;
                if z >= worst.0 {
                    worst = (z, format!("{label} t={t} x={x} exact {exact:.6e} mc {:.6e}", est.mean));
                }
                zs.push(z);
            }
        }
    }
    let detail = format!("{} cells; worst z {:.3} at {}", zs.len(), worst.0, worst.1);
    Ok(vec![Measure::new(
        "density_cross_validation",
        P_DENSITY,
        Verdict::Fraction {
            zs,
            min: h.min_cell_fraction,
        },
        detail,
    )])
}

/// Root of `d/dx ln(x e^{5x/6} / (e^x - 1)) = 1/x + 5/6 - e^x / (e^x - 1)` by bisection.
fn delta_oracle() -> f64 {
    let slope = |x: f64| 1.0 / x + 5.0 / 6.0 - 1.0 / (-(-x).exp_m1());
    let (mut lo, mut hi) = (0.1, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    x * (5.0 * x / 6.0).exp() / x.exp_m1()
}

fn bounds(cfg: &ExperimentConfig) -> Result<Vec<Measure>> {
    let h = &cfg.hitting;
    let mut out = Vec::new();
    for (label, drift) in [("zero", DriftSpec::Zero), ("ou", DriftSpec::ou(1.0))] {
        let model = HittingModel::for_drift(&drift, h.mc);
        let rep = check_bounds(&model, &h.bound_xs, h.t_max)?;
        let worst = rep.rows.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
        out.push(Measure::new(
            format!("inverse_moment_bound.{label}"),
            P_BOUND,
            Verdict::Flag(rep.pass),
            format!("max lhs/rhs {worst:.6}"),
        ));
        let drift_sup = rep
            .rows
            .iter()
            .map(|r| {
                if r.sup_t_ell.is_finite() && r.sup_t_ell > 0.0 {
                    (r.sup_t_ell_refined / r.sup_t_ell - 1.0).abs()
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        out.push(Measure::new(
            format!("sup_t_density.{label}"),
            P_SUP,
            Verdict::Below {
                value: drift_sup,
                tol: 0.01,
            },
            format!("max relative change under grid doubling {drift_sup:.3e}"),
        ));
        if label == "zero" {
            let err = rep
                .rows
                .iter()
                .map(|r| (r.lhs - 1.0 / (r.x * r.x)).abs())
                .fold(0.0, f64::max);
            out.push(Measure::new(
                "inverse_moment.bm",
                P_BM_MOMENT,
                Verdict::Below { value: err, tol: 1e-8 },
                format!("max |lhs - 1/x^2| {err:.3e}"),
            ));
        }
    }
    let (d, o) = (delta_constant(), delta_oracle());
    out.push(Measure::new(
        "delta_constant",
        P_DELTA,
        Verdict::Below {
            value: (d - o).abs(),
            tol: 1e-8,
        },
        format!("maximizer {d:.12} oracle {o:.12}"),
    ));
    Ok(out)
}

fn path_seeds(seed: u64, i: usize) -> (u64, u64) {
    (
        derive_seed(seed, Domain::Init as u64, i as u64, 0),
        derive_seed(seed, Domain::Particle as u64, i as u64, 0),
    )
}

/// Filters scenario path `i`; absorption is an error.
pub(crate) fn filter_path(
    sim: &SimConfig,
    model: &FilterModel,
    seed: u64,
    i: usize,
    probes: &[Bump],
) -> Result<FilterTrajectory> {
    let sc = simulate_scenario(sim, i)?;
    let (s_init, key) = path_seeds(seed, i);
    let cloud = init_cloud(&sim.init, model.n_particles, s_init)?;
    let tr = run_filter(model, cloud, key, &Observation::from_scenario(&sc), probes)?;
    match tr.absorbed_at {
        Some(t) => Err(Error::Absorbed { time: t }),
        None => Ok(tr),
    }
}

/// Per-path ingredients of the martingale identities.
pub(crate) struct IdentityPath {
    pub a: Vec<f64>,
    /// `a` minus the stochastic integral of `(1 - Z) bhat` against the innovation.
    pub cv: Vec<f64>,
    pub b: Vec<f64>,
    pub lag1: f64,
    pub nu2: f64,
}

pub(crate) fn identity_paths(
    cfg: &ExperimentConfig,
    dt: f64,
    params: &FilterParams,
    n_paths: usize,
) -> Result<Vec<IdentityPath>> {
    let mut sim = cfg.scenario.clone();
    sim.dt = dt;
    let model = cfg.filter_model(params, sim.step(), sim.horizon)?;
    let times = &cfg.harness.identity_times;
    par::try_map_indexed(sim.exec, n_paths, |i| -> Result<IdentityPath> {
        let tr = filter_path(&sim, &model, params.seed, i, &[])?;
        let n = tr.states.len() - 1;
        let mut cv = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        for (k, s) in tr.states.iter().enumerate() {
            cv.push(s.z + tr.c[k] - acc);
            acc += (1.0 - s.z) * s.bhat * s.d_by;
        }
        let nu: Vec<f64> = tr.states[..n].iter().map(|s| s.d_by / tr.dt.sqrt()).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for w in nu.windows(2) {
            num += w[0] * w[1];
        }
        for v in &nu {
            den += v * v;
        }
        let idx: Vec<usize> = times.iter().map(|&t| tr.index_of(t)).collect();
        Ok(IdentityPath {
            a: idx.iter().map(|&k| tr.states[k].z + tr.c[k]).collect(),
            cv: idx.iter().map(|&k| cv[k]).collect(),
            b: idx
                .iter()
                .map(|&k| f64::from(u8::from(tr.states[k].alive)) + tr.lambda_int[k])
                .collect(),
            lag1: if den > 0.0 { num / den } else { 0.0 },
            nu2: den / n as f64,
        })
    })
}

/// Mean over the identity times of `|mean(cv) - 1|`.
pub(crate) fn cv_gap(paths: &[IdentityPath]) -> f64 {
    let m = paths.first().map_or(0, |p| p.cv.len());
    let gaps: Vec<f64> = (0..m)
        .map(|j| {
            let xs: Vec<f64> = paths.iter().map(|p| p.cv[j]).collect();
            (mean(&xs) - 1.0).abs()
        })
        .collect();
    mean(&gaps)
}

fn identities(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let sc = &cfg.scenario;
    let fine = identity_paths(cfg, sc.dt, &cfg.filter, sc.n_paths * scale)?;
    let mut out = Vec::new();
    for (j, t) in cfg.harness.identity_times.iter().enumerate() {
        let a: Vec<f64> = fine.iter().map(|p| p.a[j]).collect();
        out.push(z_measure(format!("martingale_a.t={t}"), P_ID_A, &a, 1.0));
    }
    for (j, t) in cfg.harness.identity_times.iter().enumerate() {
        let b: Vec<f64> = fine.iter().map(|p| p.b[j]).collect();
        out.push(z_measure(format!("martingale_b.t={t}"), P_ID_B, &b, 1.0));
    }
    let lag: Vec<f64> = fine.iter().map(|p| p.lag1).collect();
    out.push(z_measure("innovation_lag1", P_WHITE, &lag, 0.0));
    let nu2: Vec<f64> = fine.iter().map(|p| p.nu2).collect();
    out.push(z_measure("innovation_variance", P_INNOV_VAR, &nu2, 1.0));

    let coarse = identity_paths(cfg, 2.0 * sc.dt, &cfg.filter, cfg.harness.coarse_paths * scale)?;
    let (g_fine, g_coarse) = (cv_gap(&fine), cv_gap(&coarse));
    let ratio = if g_coarse > 0.0 {
        g_fine / g_coarse
    } else {
        f64::INFINITY
    };
    out.push(Measure::new(
        "martingale_a.step_halving",
        P_HALVING,
        Verdict::Range {
            value: ratio,
            lo: 0.0,
            hi: 1.0,
        },
        format!(
            "gap {g_coarse:.4e} at dt {} over {} paths, {g_fine:.4e} at dt {} over {} paths",
            2.0 * sc.dt,
            coarse.len(),
            sc.dt,
            fine.len()
        ),
    ));
    Ok(out)
}

fn degenerate(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let sc = &cfg.scenario;
    let params = FilterParams {
        n_particles: cfg.harness.degenerate_particles * scale,
        ..cfg.filter.clone()
    };
    let n_p = params.n_particles as f64;
    let drifts = test_drifts();
    let rows = par::try_map_indexed(sc.exec, drifts.len(), |d| -> Result<Measure> {
        let (label, drift) = &drifts[d];
        let hitting = HittingModel::for_drift(drift, cfg.hitting.mc);
        let model = FilterModel::new(drift.clone(), ObsSpec::Zero, hitting, &params, sc.step())?;
        let obs = Observation {
            dt: sc.step(),
            dy: vec![0.0; sc.n_steps()],
            tau: f64::INFINITY,
        };
        let (s_init, key) = path_seeds(params.seed, d);
        let tr = run_filter(
            &model,
            init_cloud(&sc.init, params.n_particles, s_init)?,
            key,
            &obs,
            &[],
        )?;
        let (mut dev, mut sig) = (0.0f64, 0.0f64);
        for s in &tr.states {
            let h = sc
                .init
                .expectation(|x| model.hitting.survival(s.t, x).unwrap_or(f64::NAN))?;
            dev = dev.max((s.z - h).abs());
            sig = sig.max((h * (1.0 - h) / n_p).sqrt());
        }
        let z = if sig > 0.0 { dev / sig } else { f64::INFINITY };
        Ok(Measure::new(
            format!("zero_signal.{label}"),
            P_DEGENERATE,
            Verdict::Z(z),
            format!("max |Z - H| {dev:.3e}, max particle sigma {sig:.3e}"),
        ))
    })?;
    Ok(rows)
}

fn mean_gap(cfg: &ExperimentConfig, dt: f64, n_particles: usize, n_paths: usize) -> Result<f64> {
    let mut sim = cfg.scenario.clone();
    sim.dt = dt;
    let params = FilterParams {
        n_particles,
        ..cfg.filter.clone()
    };
    let model = cfg.filter_model(&params, sim.step(), sim.horizon)?;
    let gaps = par::try_map_indexed(sim.exec, n_paths, |i| {
        decomposition_gap(&filter_path(&sim, &model, params.seed, i, &[])?)
    })?;
    Ok(mean(&gaps))
}

fn decomposition(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let h = &cfg.harness;
    let paths = h.decomposition_paths * scale;
    let coarse = mean_gap(cfg, h.decomposition_dt, h.decomposition_particles, paths)?;
    let fine = mean_gap(cfg, 0.5 * h.decomposition_dt, 4 * h.decomposition_particles, paths)?;
    let [lo, hi] = h.decomposition_ratio;
    Ok(vec![Measure::new(
        "multiplicative_gap.refinement",
        P_DECOMP,
        Verdict::Range {
            value: fine / coarse,
            lo,
            hi,
        },
        format!("mean max relative gap {coarse:.4e} coarse, {fine:.4e} fine over {paths} paths"),
    )])
}

pub(crate) fn ks_bumps() -> [Bump; 2] {
    [
        Bump {
            center: 1.0,
            half_width: 0.6,
        },
        Bump {
            center: 0.6,
            half_width: 0.4,
        },
    ]
}

fn ks(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let h = &cfg.harness;
    let mut sim = cfg.scenario.clone();
    sim.dt = h.ks_dt;
    let params = FilterParams {
        n_particles: h.ks_particles,
        ..cfg.filter.clone()
    };
    let model = cfg.filter_model(&params, sim.step(), sim.horizon)?;
    let bumps = ks_bumps();
    let rows = par::try_map_indexed(sim.exec, h.ks_paths * scale, |i| -> Result<Vec<f64>> {
        let tr = filter_path(&sim, &model, params.seed, i, &bumps)?;
        bumps
            .iter()
            .map(|f| Ok(*ks_residual(&tr, f)?.last().expect("nonempty residual")))
            .collect()
    })?;
    Ok(bumps
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let r: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            z_measure(format!("ks_residual.c{}_w{}", f.center, f.half_width), P_KS, &r, 0.0)
        })
        .collect())
}

/// Filter state at the valuation time.
#[derive(Debug, Clone)]
pub struct PricingState {
    /// The scenario on the pricing grid, ending at maturity.
    pub sim: SimConfig,
    pub model: FilterModel,
    pub cloud: ParticleCloud,
    pub path_id: usize,
    /// Default observed at or before the valuation time.
    pub defaulted: bool,
}

/// Filters scenario path `path` (or the first path still alive at the
/// valuation time) up to that time on the pricing grid.
pub fn pricing_state(cfg: &ExperimentConfig, path: Option<usize>) -> Result<PricingState> {
    let p = &cfg.pricing;
    let maturity = cfg.maturity();
    let mut sim = cfg.scenario.clone();
    sim.dt = p.dt;
    sim.horizon = maturity;
    let params = FilterParams {
        n_particles: p.n_particles,
        ..cfg.filter.clone()
    };
    let model = cfg.filter_model(&params, sim.step(), maturity)?;
    let k = (p.t / model.dt).round() as usize;
    let candidates = match path {
        Some(i) => i..i + 1,
        None => 0..10_000,
    };
    for i in candidates {
        let sc = simulate_scenario(&sim, i)?;
        let defaulted = !sc.alive_at(k);
        if defaulted && path.is_none() {
            continue;
        }
        let (s_init, key) = path_seeds(params.seed, i);
        let mut engine = FilterEngine::new(&model, init_cloud(&sim.init, p.n_particles, s_init)?, key, Vec::new());
        for d in &sc.dy()[..k] {
            engine.advance(*d);
        }
        if let Some(t) = engine.absorbed_at() {
            if path.is_some() {
                return Err(Error::Absorbed { time: t });
            }
            continue;
        }
        let cloud = engine.into_cloud();
        return Ok(PricingState {
            sim,
            model,
            cloud,
            path_id: i,
            defaulted,
        });
    }
    Err(Error::Degenerate(
        "no scenario path survives to the valuation time".into(),
    ))
}

fn pricing(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let p = &cfg.pricing;
    let maturity = cfg.maturity();
    let PricingState { sim, model, cloud, .. } = pricing_state(cfg, None)?;
    let s = survival_price(&cloud, &model.hitting, cloud.t, maturity)?;
    let nested = cfg.nested(p.n_inner * scale);
    let disc = price_via_intensity_discount(&model, &cloud, maturity, &nested)?;
    let mut out = vec![
        Measure::new(
            "intensity_discount",
            P_DISCOUNT,
            Verdict::Z(disc.estimate.z_against_value(s)),
            format!("{} against projection {s:.6e}", est_detail(&disc.estimate, s)),
        ),
        Measure::new(
            "kappa_mean",
            P_KAPPA,
            Verdict::Z(disc.kappa_ratio.z_against_value(1.0)),
            est_detail(&disc.kappa_ratio, 1.0),
        ),
        Measure::new(
            "kappa_bounded",
            P_KAPPA_BOUND,
            Verdict::Flag(!disc.flagged),
            format!("max log kappa {:.3}, absorbed {}", disc.max_log_kappa, disc.n_absorbed),
        ),
    ];
    let duffie = duffie_diagnostic(&sim, &model, &cloud, maturity, &nested)?;
    out.push(Measure::new(
        "stochastic_discount_jump",
        P_DUFFIE,
        Verdict::Z(duffie.z),
        format!(
            "J {:.6e} jump {:.6e} difference {}",
            duffie.j.mean,
            duffie.jump.mean,
            est_detail(&duffie.difference, s)
        ),
    ));
    let tower = tower_check(&sim, &model, p.t, p.tower_paths * scale, cfg.filter.seed)?;
    out.push(Measure::new(
        "tower_survival_frequency",
        P_TOWER,
        Verdict::Z(tower.paired.z_against_value(0.0)),
        format!(
            "mean price {:.6e} survival frequency {:.6e} paired stderr {:.3e}",
            tower.mean_price.mean, tower.survival_freq.mean, tower.paired.stderr
        ),
    ));
    out.push(Measure::new(
        "tower_time_zero",
        P_TOWER0,
        Verdict::Z(tower.mean_price.z_against_value(tower.price_at_zero)),
        est_detail(&tower.mean_price, tower.price_at_zero),
    ));
    Ok(out)
}

fn rebate(cfg: &ExperimentConfig, scale: usize) -> Result<Vec<Measure>> {
    let p = &cfg.pricing;
    let maturity = cfg.maturity();
    let PricingState {
        model, cloud: cloud_t, ..
    } = pricing_state(cfg, None)?;
    let hitting = &model.hitting;
    let cloud_0 = init_cloud(
        &cfg.scenario.init,
        p.n_particles,
        derive_seed(p.seed, Domain::Init as u64, 0, 0),
    )?;

    let linear = RebateSpec::Linear {
        intercept: 0.0,
        slope: 1.0,
    };
    let value = rebate_value(&cloud_0, hitting, 0.0, &linear, maturity)?;
    let mut sim = cfg.scenario.clone();
    sim.dt = p.rebate_dt;
    sim.horizon = maturity;
    sim.seed = derive_seed(p.seed, Domain::Scenario as u64, 0, 0);
    let taus = par::map_indexed(sim.exec, p.rebate_paths * scale, |i| {
        let tau = simulate_terminal(&sim, i).0;
        if tau <= maturity {
            tau
        } else {
            0.0
        }
    });
    let mut out = vec![z_measure("linear_rebate", P_REBATE, &taus, value)];

    let unit = RebateSpec::Constant { value: 1.0 };
    let mut err = 0.0f64;
    for c in [&cloud_0, &cloud_t] {
        let s = survival_price(c, hitting, c.t, maturity)?;
        let r = rebate_value(c, hitting, c.t, &unit, maturity)?;
        err = err.max((s + r - 1.0).abs());
    }
    out.push(Measure::new(
        "unit_rebate_complement",
        P_COMPLEMENT,
        Verdict::Below { value: err, tol: 1e-6 },
        format!("max |S + R - 1| {err:.3e}"),
    ));

    let (face, r) = (2.5, 0.4);
    let spec = BondSpec {
        maturity,
        face,
        rebate: RebateSpec::Constant { value: r },
    };
    let rep = bond_price(&cloud_t, hitting, cloud_t.t, &spec, false)?;
    let expected = face * rep.survival_price + r * (1.0 - rep.survival_price);
    let err = (rep.total - expected).abs();
    out.push(Measure::new(
        "bond_affine",
        P_AFFINE,
        Verdict::Below { value: err, tol: 1e-8 },
        format!("total {:.9e} expected {expected:.9e}", rep.total),
    ));
    Ok(out)
}

fn determinism(cfg: &ExperimentConfig) -> Result<Vec<Measure>> {
    let smoke = cfg.smoke();
    let threads = cfg.harness.determinism_threads;
    let mut out = Vec::new();
    for s in Suite::ALL {
        if s == Suite::Determinism {
            continue;
        }
        let mut c = smoke.clone();
        c.harness.suites = vec![s];
        let one = par::with_threads(1, || run_suite(&c))?;
        let many = par::with_threads(threads, || run_suite(&c))?;
        let (a, b) = (report_json(&one), report_json(&many));
        out.push(Measure::new(
            format!("byte_identical.{s}"),
            P_DETERMINISM,
            Verdict::Flag(a == b),
            format!("1 vs {threads} workers, {} bytes", a.len()),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hitting::delta_argmax;

    #[test]
    fn delta_oracle_matches_search() {
        let (x, d) = delta_argmax();
        assert!((delta_oracle() - d).abs() < 1e-10);
        assert!(x > 0.0);
    }
}
