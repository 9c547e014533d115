//! First-passage-to-zero densities `ℓ^a(t, x)` and survival functions
//! `H^a(t, x) = P_x[τ > t]`.
//!
//! Closed forms cover Brownian motion, Brownian motion with constant drift
//! and the Ornstein–Uhlenbeck drift `a(x) = -Kx`. Any other drift goes
//! through the Bessel-bridge representation
//!
//! ```text
//! ℓ^a(t, x) = e^{-A(x)} E_x[exp(-½ ∫_0^t (a² + a')(R_s) ds) | R_t = 0] ℓ(t, x)
//! ```
//!
//! where `R` is a three-dimensional Bessel bridge from `x` to `0`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use libm::{erf, erfc};
use serde::{Deserialize, Serialize};

use crate::coeffs::{potential_a, DriftSpec};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::quad;
use crate::rng::{derive_seed, Domain, Stream};
use crate::stats::{mean, variance, Estimate};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn check_tx(t: f64, x: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be positive and finite, got {t}")));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::param("x", format!("must be positive and finite, got {x}")));
    }
    Ok(())
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[inline]
fn ell_bm_raw(t: f64, x: f64) -> f64 {
    (x.ln() - 1.5 * t.ln() - LN_SQRT_2PI - x * x / (2.0 * t)).exp()
}

/// Driftless density `x / √(2πt³) · exp(-x²/2t)`.
pub fn ell_bm(t: f64, x: f64) -> Result<f64> {
    check_tx(t, x)?;
    Ok(ell_bm_raw(t, x))
}

/// `2Φ(x/√t) - 1`, and `1` at `t = 0`.
pub fn survival_bm(t: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::param("x", format!("must be positive, got {x}")));
    }
    if t < 0.0 {
        return Err(Error::param("t", "must be nonnegative"));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(erf(x / (2.0 * t).sqrt()))
}

/// Density for constant drift `a ≡ c`.
pub fn ell_drifted_bm(t: f64, x: f64, c: f64) -> Result<f64> {
    check_tx(t, x)?;
    Ok((x.ln() - 1.5 * t.ln() - LN_SQRT_2PI - x * x / (2.0 * t) - c * x - 0.5 * c * c * t).exp())
}

/// Survival for constant drift `a ≡ c`.
pub fn survival_drifted_bm(t: f64, x: f64, c: f64) -> Result<f64> {
    if t == 0.0 && x > 0.0 {
        return Ok(1.0);
    }
    check_tx(t, x)?;
    Ok((1.0 - tail_drifted(t, x, c)).clamp(0.0, 1.0))
}

fn tail_drifted(t: f64, x: f64, c: f64) -> f64 {
    let st = t.sqrt();
    let first = norm_cdf(-(x + c * t) / st);
    let phi = norm_cdf((c * t - x) / st);
    let second = if phi > 0.0 {
        (-2.0 * c * x + phi.ln()).exp()
    } else {
        0.0
    };
    (first + second).min(1.0)
}

/// `ln(K / sinh(Kt))` for any real `K`, `t > 0`.
fn ln_k_over_sinh(k: f64, t: f64) -> f64 {
    let ka = k.abs();
    if ka * t < 1e-8 {
        return -t.ln() - (ka * t).powi(2) / 6.0;
    }
    ka.ln() - ka * t + std::f64::consts::LN_2 - (-(-2.0 * ka * t).exp_m1()).ln()
}

/// `K (coth(Kt) - 1)` for any real `K`.
fn k_coth_minus_one(k: f64, t: f64) -> f64 {
    if (k * t).abs() < 1e-8 {
        return 1.0 / t - k;
    }
    2.0 * k / (2.0 * k * t).exp_m1()
}

fn ell_linear(t: f64, x: f64, k: f64) -> f64 {
    let ln = x.ln() + 1.5 * ln_k_over_sinh(k, t) - LN_SQRT_2PI + 0.5 * k * t - 0.5 * x * x * k_coth_minus_one(k, t);
    ln.exp()
}

/// `1 - H` for `a(x) = -Kx`, any real `K`.
fn linear_variance(t: f64, k: f64) -> f64 {
    if (k * t).abs() < 1e-10 {
        t * (1.0 + k * t)
    } else {
        (2.0 * k * t).exp_m1() / (2.0 * k)
    }
}

fn tail_linear(t: f64, x: f64, k: f64) -> f64 {
    erfc(x / (2.0 * linear_variance(t, k)).sqrt())
}

const ERFC_STEP: f64 = 1.0 / 512.0;
const ERFC_END: f64 = 6.5;

/// Values and slopes of `erfc` on a uniform grid over `[0, ERFC_END]`.
fn erfc_nodes() -> &'static [[f64; 2]] {
    static NODES: OnceLock<Vec<[f64; 2]>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = (ERFC_END / ERFC_STEP).round() as usize;
        (0..=n)
            .map(|i| {
                let x = i as f64 * ERFC_STEP;
                [erfc(x), -std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp()]
            })
            .collect()
    })
}

/// Cubic Hermite interpolation of `erfc` on a fine grid for `x >= 0`:
/// absolute error below 1e-12, several times cheaper than the full
/// evaluation.
#[inline(always)]
fn erfc_on(nodes: &[[f64; 2]], x: f64) -> f64 {
    if !(x < ERFC_END) {
        return erfc(x);
    }
    let s = x * (1.0 / ERFC_STEP);
    let i = s as usize;
    let u = s - i as f64;
    let ([f0, d0], [f1, d1]) = (nodes[i], nodes[i + 1]);
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = 3.0 * u2 - 2.0 * u3;
    let h11 = u3 - u2;
    h00 * f0 + h01 * f1 + ERFC_STEP * (h10 * d0 + h11 * d1)
}

/// `1 - H^a(t, ·)` at a fixed horizon with the `t`-dependent constants
/// evaluated once.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Tail {
    /// `erfc(x · scale)` for `x >= 0`.
    Scaled(f64, &'static [[f64; 2]]),
    Drifted {
        t: f64,
        c: f64,
    },
    General {
        t: f64,
    },
}

impl Tail {
    #[inline]
    pub(crate) fn eval(&self, model: &HittingModel, x: f64) -> f64 {
        match *self {
            Tail::Scaled(s, nodes) => erfc_on(nodes, x * s),
            Tail::Drifted { t, c } => tail_drifted(t, x, c),
            Tail::General { t } => model.default_prob_unchecked(t, x),
        }
    }
}

/// Density for the Ornstein–Uhlenbeck drift `a(x) = -Kx`, evaluated in log space.
pub fn ell_ou(t: f64, x: f64, k: f64) -> Result<f64> {
    check_tx(t, x)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("K", format!("must be positive, got {k}")));
    }
    Ok(ell_linear(t, x, k))
}

/// Survival for `a(x) = -Kx`, by reflection of the centred Gaussian transition.
pub fn survival_ou(t: f64, x: f64, k: f64) -> Result<f64> {
    if t == 0.0 && x > 0.0 {
        return Ok(1.0);
    }
    check_tx(t, x)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("K", format!("must be positive, got {k}")));
    }
    Ok(1.0 - tail_linear(t, x, k))
}

/// Bessel-bridge Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeMc {
    pub n_bridges: usize,
    pub bridge_steps: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for BridgeMc {
    fn default() -> Self {
        BridgeMc {
            n_bridges: 10_000,
            bridge_steps: 256,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

pub const MIN_BRIDGES: usize = 1_000;

/// Log of `exp(-½ ∫_0^t V(R_s) ds)` along one bridge, trapezoid rule.
fn bridge_log_weight(spec: &DriftSpec, t: f64, x: f64, steps: usize, stream: &Stream) -> Result<f64> {
    let h = t / steps as f64;
    let mut pos = [x, 0.0, 0.0];
    let v0 = spec.bridge_potential(x);
    let mut acc = 0.5 * v0;
    let mut draw = 0u64;
    let mut spare: Option<f64> = None;
    let mut normal = |draw: &mut u64| -> f64 {
        if let Some(z) = spare.take() {
            return z;
        }
        let [z0, z1] = stream.normals(*draw);
        *draw += 1;
        spare = Some(z1);
        z0
    };
    for k in 0..steps {
        let rem = t - k as f64 * h;
        let rem_next = rem - h;
        // Sequential bridge step toward the origin.
        let sd = (h * rem_next / rem).max(0.0).sqrt();
        for c in pos.iter_mut() {
            let z = normal(&mut draw);
            *c += -*c * h / rem + sd * z;
        }
        let r = if k + 1 == steps {
            0.0
        } else {
            (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt()
        };
        let v = spec.bridge_potential(r);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                x: r,
                what: format!("a² + a' along bridge at s = {}", (k + 1) as f64 * h),
            });
        }
        acc += if k + 1 == steps { 0.5 * v } else { v };
    }
    Ok(-0.5 * acc * h)
}

/// Monte Carlo estimate of `ℓ^a(t, x)` over `cfg.n_bridges` Bessel bridges.
pub fn ell_bridge_mc(spec: &DriftSpec, t: f64, x: f64, cfg: &BridgeMc) -> Result<Estimate> {
    check_tx(t, x)?;
    if cfg.n_bridges < MIN_BRIDGES {
        return Err(Error::param("n_bridges", format!("need at least {MIN_BRIDGES}")));
    }
    if cfg.bridge_steps < 2 {
        return Err(Error::param("bridge_steps", "need at least 2"));
    }
    let scale = (-potential_a(spec, x)?).exp() * ell_bm_raw(t, x);
    if !scale.is_finite() {
        return Err(Error::NonFinite {
            x,
            what: "e^{-A(x)} ℓ(t, x)".into(),
        });
    }
    // a² + a' constant: the bridge functional is deterministic.
    let constant = match spec {
        DriftSpec::Zero => Some(0.0),
        DriftSpec::Constant { c } => Some(c * c),
        _ => None,
    };
    if let Some(v) = constant {
        return Ok(Estimate {
            mean: scale * (-0.5 * v * t).exp(),
            stderr: 0.0,
            n: cfg.n_bridges,
        });
    }
    let key = derive_seed(cfg.seed, Domain::Bridge as u64, t.to_bits(), x.to_bits());
    let logs = par::try_map_indexed(cfg.exec, cfg.n_bridges, |i| {
        let stream = Stream::new(key, Domain::Bridge, (i >> 24) as u32, (i & 0xFF_FFFF) as u32);
        bridge_log_weight(spec, t, x, cfg.bridge_steps, &stream)
    })?;
    let w: Vec<f64> = logs.into_iter().map(|l| scale * l.exp()).collect();
    Ok(Estimate {
        mean: mean(&w),
        stderr: (variance(&w) / w.len() as f64).sqrt(),
        n: w.len(),
    })
}

/// `x ↦ x / (e^{x/6} - e^{-5x/6})`, with value 1 at 0.
pub fn delta_integrand(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        return 1.0 + x / 6.0;
    }
    // e^{x/6} - e^{-5x/6} = e^{-5x/6} (e^x - 1)
    x * (5.0 * x / 6.0).exp() / x.exp_m1()
}

/// Location and value of the maximum of [`delta_integrand`] on `(0, ∞)`.
pub fn delta_argmax() -> (f64, f64) {
    let n = 50_000;
    let mut best = (0.0, 1.0);
    for i in 1..=n {
        let x = 50.0 * i as f64 / n as f64;
        let v = delta_integrand(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let h = 50.0 / n as f64;
    let (mut a, mut b) = ((best.0 - h).max(0.0), best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > 1e-12 {
        if delta_integrand(c) > delta_integrand(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let x = 0.5 * (a + b);
    (x, delta_integrand(x))
}

/// `δ = sup_{x>0} x / (e^{x/6} - e^{-5x/6})`.
pub fn delta_constant() -> f64 {
    delta_argmax().1
}

/// Closed-form or Monte Carlo evaluator for `ℓ^a` and `H^a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    BmClosed,
    DriftedBmClosed {
        c: f64,
    },
    OuClosed {
        k: f64,
    },
    BesselBridgeMc {
        drift: DriftSpec,
        #[serde(flatten)]
        mc: BridgeMc,
    },
}

#[derive(Debug, Clone)]
pub struct HittingModel {
    pub method: Method,
    table: Option<Arc<DensityTable>>,
}

impl HittingModel {
    pub fn new(method: Method) -> Self {
        HittingModel { method, table: None }
    }

    /// Closed form when the drift admits one, bridge MC otherwise.
    pub fn for_drift(drift: &DriftSpec, mc: BridgeMc) -> Self {
        let method = match *drift {
            DriftSpec::Zero => Method::BmClosed,
            DriftSpec::Constant { c: 0.0 } => Method::BmClosed,
            DriftSpec::Constant { c } => Method::DriftedBmClosed { c },
            DriftSpec::Affine { alpha: 0.0, beta: 0.0 } => Method::BmClosed,
            DriftSpec::Affine { alpha, beta } if alpha == 0.0 && beta < 0.0 => Method::OuClosed { k: -beta },
            DriftSpec::Affine { alpha, beta: 0.0 } => Method::DriftedBmClosed { c: alpha },
            _ => Method::BesselBridgeMc {
                drift: drift.clone(),
                mc,
            },
        };
        HittingModel::new(method)
    }

    /// Attaches a density table used for every Monte Carlo query.
    pub fn with_table(mut self, table: DensityTable) -> Self {
        self.table = Some(Arc::new(table));
        self
    }

    pub fn table(&self) -> Option<&DensityTable> {
        self.table.as_deref()
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self.method, Method::BesselBridgeMc { .. })
    }

    /// Growth constant `K_g` of the underlying drift.
    pub fn growth_constant(&self) -> f64 {
        match &self.method {
            Method::BmClosed => 0.0,
            Method::DriftedBmClosed { c } => c.abs(),
            Method::OuClosed { k } => k.abs(),
            Method::BesselBridgeMc { drift, .. } => drift.growth_constant(),
        }
    }

    pub fn drift(&self) -> DriftSpec {
        match &self.method {
            Method::BmClosed => DriftSpec::Zero,
            Method::DriftedBmClosed { c } => DriftSpec::Constant { c: *c },
            Method::OuClosed { k } => DriftSpec::ou(*k),
            Method::BesselBridgeMc { drift, .. } => drift.clone(),
        }
    }

    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        check_tx(t, x)?;
        Ok(match &self.method {
            Method::BmClosed => ell_bm_raw(t, x),
            Method::DriftedBmClosed { c } => ell_drifted_bm(t, x, *c)?,
            Method::OuClosed { k } => ell_linear(t, x, *k),
            Method::BesselBridgeMc { drift, mc } => match &self.table {
                Some(tab) => tab.density(t, x),
                None => ell_bridge_mc(drift, t, x, mc)?.mean,
            },
        })
    }

    /// `1 - H^a(t, x)` without cancellation for small values.
    pub fn default_prob(&self, t: f64, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(1.0);
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        check_tx(t, x)?;
        Ok(self.default_prob_unchecked(t, x))
    }

    #[inline]
    pub(crate) fn tail_at(&self, t: f64) -> Tail {
        match self.method {
            Method::BmClosed => Tail::Scaled(1.0 / (2.0 * t).sqrt(), erfc_nodes()),
            Method::OuClosed { k } => Tail::Scaled(1.0 / (2.0 * linear_variance(t, k)).sqrt(), erfc_nodes()),
            Method::DriftedBmClosed { c } => Tail::Drifted { t, c },
            Method::BesselBridgeMc { .. } => Tail::General { t },
        }
    }

    pub(crate) fn default_prob_unchecked(&self, t: f64, x: f64) -> f64 {
        match &self.method {
            Method::BmClosed => erfc(x / (2.0 * t).sqrt()),
            Method::DriftedBmClosed { c } => tail_drifted(t, x, *c),
            Method::OuClosed { k } => tail_linear(t, x, *k),
            Method::BesselBridgeMc { .. } => match &self.table {
                Some(tab) => 1.0 - tab.survival(t, x),
                None => f64::NAN,
            },
        }
    }

    /// `H^a(t, x)`; Monte Carlo models need an attached table.
    pub fn survival(&self, t: f64, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        check_tx(t, x)?;
        if matches!(self.method, Method::BesselBridgeMc { .. }) && self.table.is_none() {
            return Err(Error::param(
                "hitting",
                "bridge Monte Carlo survival needs a density table",
            ));
        }
        Ok((1.0 - self.default_prob_unchecked(t, x)).clamp(0.0, 1.0))
    }

    /// `∫_0^∞ ℓ^a(s, x) ds`.
    pub fn total_mass(&self, x: f64) -> Result<f64> {
        let f = |s: f64| {
            if s > 0.0 {
                self.density(s, x).unwrap_or(0.0)
            } else {
                0.0
            }
        };
        let s0 = x * x;
        let head = quad::integrate(f, 0.0, s0, 1e-11)?.value;
        let tail = quad::integrate_to_infinity(f, s0, 1e-11)?.value;
        Ok(head + tail)
    }
}

/// Per-`x` outcome of the bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub x: f64,
    /// `∫_0^∞ s^{-1} ℓ^a(s, x) ds`
    pub lhs: f64,
    /// `2 δ^{3/2} (1 + K_g x) / x²`
    pub rhs: f64,
    pub sup_t_ell: f64,
    /// Same supremum on a grid twice as fine.
    pub sup_t_ell_refined: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub k_g: f64,
    pub t_max: f64,
    pub rows: Vec<BoundRow>,
    pub pass: bool,
}

fn sup_t_ell(model: &HittingModel, x: f64, t_max: f64, n: usize) -> Result<f64> {
    let lo = (1e-6f64).min(t_max).ln();
    let hi = t_max.ln();
    let mut best = 0.0f64;
    for i in 0..=n {
        let t = (lo + (hi - lo) * i as f64 / n as f64).exp();
        best = best.max(t * model.density(t, x)?);
    }
    Ok(best)
}

const SUP_GRID: usize = 2_000;

/// Checks `∫ s^{-1} ℓ^a ≤ 2δ^{3/2}(1 + K_g x)/x²` and measures `sup_{t ≤ t_max} t ℓ^a`.
pub fn check_bounds(model: &HittingModel, xs: &[f64], t_max: f64) -> Result<BoundReport> {
    if let Some(&x) = xs.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::param("xs", format!("points must lie in (0, ∞), got {x}")));
    }
    if !(t_max > 0.0) {
        return Err(Error::param("t_max", "must be positive"));
    }
    let delta = delta_constant();
    let k_g = model.growth_constant();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let f = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let v = model.density(s, x).unwrap_or(f64::NAN) / s;
            if v < 1e-300 {
                0.0
            } else {
                v
            }
        };
        let s0 = x * x;
        let head = quad::integrate(f, 0.0, s0, 1e-12)?.value;
        let tail = quad::integrate_to_infinity(f, s0, 1e-12)?.value;
        let lhs = head + tail;
        let rhs = 2.0 * delta.powf(1.5) * (1.0 + k_g * x) / (x * x);
        rows.push(BoundRow {
            x,
            lhs,
            rhs,
            sup_t_ell: sup_t_ell(model, x, t_max, SUP_GRID)?,
            sup_t_ell_refined: sup_t_ell(model, x, t_max, 2 * SUP_GRID)?,
            holds: lhs <= rhs,
        });
    }
    Ok(BoundReport {
        delta,
        k_g,
        t_max,
        pass: rows.iter().all(|r| r.holds && r.sup_t_ell.is_finite()),
        rows,
    })
}

impl BoundReport {
    /// First violating row as an error.
    pub fn violation(&self) -> Option<Error> {
        self.rows.iter().find(|r| !r.holds).map(|r| Error::BoundViolation {
            x: r.x,
            lhs: r.lhs,
            rhs: r.rhs,
        })
    }
}

/// Density values on a `t × x` grid, with cumulative survival in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// Row-major, one row per `t`.
    pub values: Vec<f64>,
    survival: Vec<f64>,
}

/// Log-spaced grid on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl DensityTable {
    pub fn new(t_grid: Vec<f64>, x_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let (nt, nx) = (t_grid.len(), x_grid.len());
        if nt < 2 || nx < 2 {
            return Err(Error::param("table", "need at least two points per axis"));
        }
        if values.len() != nt * nx {
            return Err(Error::param(
                "table",
                format!("expected {} values, got {}", nt * nx, values.len()),
            ));
        }
        if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
            return Err(Error::param("table.t_grid", "must be positive and strictly ascending"));
        }
        if x_grid.windows(2).any(|w| w[1] <= w[0]) || x_grid[0] <= 0.0 {
            return Err(Error::param("table.x_grid", "must be positive and strictly ascending"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("table.values", "must be finite and nonnegative"));
        }
        // Trapezoid in t, with ℓ(0, x) = 0.
        let mut survival = vec![0.0; nt * nx];
        for j in 0..nx {
            let mut acc = 0.5 * t_grid[0] * values[j];
            survival[j] = 1.0 - acc;
            for i in 1..nt {
                let h = t_grid[i] - t_grid[i - 1];
                acc += 0.5 * h * (values[(i - 1) * nx + j] + values[i * nx + j]);
                survival[i * nx + j] = (1.0 - acc).max(0.0);
            }
        }
        Ok(DensityTable {
            t_grid,
            x_grid,
            values,
            survival,
        })
    }

    /// Tabulates `model.density` on the grid, cells in parallel.
    pub fn build(model: &HittingModel, t_grid: Vec<f64>, x_grid: Vec<f64>, exec: Exec) -> Result<Self> {
        let nx = x_grid.len();
        let n = t_grid.len() * nx;
        let values = par::try_map_indexed(exec, n, |c| model.density(t_grid[c / nx], x_grid[c % nx]))?;
        Self::new(t_grid, x_grid, values)
    }

    fn locate(grid: &[f64], v: f64) -> (usize, f64) {
        if v <= grid[0] {
            return (0, 0.0);
        }
        let n = grid.len();
        if v >= grid[n - 1] {
            return (n - 2, 1.0);
        }
        let i = grid.partition_point(|&g| g <= v) - 1;
        (i, (v - grid[i]) / (grid[i + 1] - grid[i]))
    }

    fn interp(&self, data: &[f64], t: f64, x: f64) -> f64 {
        let nx = self.x_grid.len();
        let (i, u) = Self::locate(&self.t_grid, t);
        let (j, v) = Self::locate(&self.x_grid, x);
        let at = |a: usize, b: usize| data[a * nx + b];
        (1.0 - u) * ((1.0 - v) * at(i, j) + v * at(i, j + 1)) + u * ((1.0 - v) * at(i + 1, j) + v * at(i + 1, j + 1))
    }

    pub fn density(&self, t: f64, x: f64) -> f64 {
        self.interp(&self.values, t, x)
    }

    pub fn survival(&self, t: f64, x: f64) -> f64 {
        if t < self.t_grid[0] {
            // Linear from H(0) = 1.
            let s0 = self.interp(&self.survival, self.t_grid[0], x);
            return 1.0 - (1.0 - s0) * t / self.t_grid[0];
        }
        self.interp(&self.survival, t, x)
    }

    /// Text dump: header `t_grid n_t x_grid n_x`, the two grids, then rows.
    pub fn dump(&self) -> String {
        let mut s = format!("t_grid {} x_grid {}\n", self.t_grid.len(), self.x_grid.len());
        let line = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{}", line(&self.t_grid));
        let _ = writeln!(s, "{}", line(&self.x_grid));
        for row in self.values.chunks(self.x_grid.len()) {
            let _ = writeln!(s, "{}", line(row));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty density table".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 4 || header[0] != "t_grid" || header[2] != "x_grid" {
            return Err(Error::Parse("header must read `t_grid n_t x_grid n_x`".into()));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("header: {e}")));
        let (nt, nx) = (count(header[1])?, count(header[3])?);
        let nums = |l: Option<&str>| -> Result<Vec<f64>> {
            l.ok_or_else(|| Error::Parse("truncated density table".into()))?
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}"))))
                .collect()
        };
        let t_grid = nums(lines.next())?;
        let x_grid = nums(lines.next())?;
        if t_grid.len() != nt || x_grid.len() != nx {
            return Err(Error::Parse("grid lengths disagree with header".into()));
        }
        let mut values = Vec::with_capacity(nt * nx);
        for _ in 0..nt {
            let row = nums(lines.next())?;
            if row.len() != nx {
                return Err(Error::Parse(format!("row of length {} where {nx} expected", row.len())));
            }
            values.extend(row);
        }
        Self::new(t_grid, x_grid, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
