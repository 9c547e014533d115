//! Coefficient models: the firm-value drift `a`, its potential `A`, the
//! observation coefficient `b(t, x)` and the initial law of `X_0`.
//!
//! The standing assumptions on `a` (bounded derivative, existence of the
//! limits of `A` and `a` at infinity, the mean-reverting tail decomposition
//! `a(x) = -K_a x + f_a(x)`) and on `b` (`b(t, 0) = 0`, linear growth in `x`)
//! are checked by [`validate_drift`] and [`ObsSpec::validate`]. Closed-form
//! kinds are checked symbolically; tabulated drifts on a finite grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::norm_inv;
use crate::stats::linear_fit;

/// Monotone cubic (Fritsch–Carlson) interpolant with affine tails.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    left: (f64, f64),
    right: (f64, f64),
}

/// Points used for each affine tail fit.
const TAIL_POINTS: usize = 10;

impl Tabulated {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::param("tabulated", "x and value columns differ in length"));
        }
        if xs.len() < 3 {
            return Err(Error::param("tabulated", "need at least 3 points"));
        }
        if let Some(i) = xs.iter().chain(&ys).position(|v| !v.is_finite()) {
            return Err(Error::param("tabulated", format!("non-finite entry at index {i}")));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("tabulated", "x column must be strictly ascending"));
        }
        let slopes = pchip_slopes(&xs, &ys);
        let n = xs.len();
        let k = TAIL_POINTS.min(n);
        let right = {
            let (s, c) = linear_fit(&xs[n - k..], &ys[n - k..]);
            (c, s)
        };
        let left = {
            let (s, c) = linear_fit(&xs[..k], &ys[..k]);
            (c, s)
        };
        Ok(Tabulated {
            xs,
            ys,
            slopes,
            left,
            right,
        })
    }

    /// Reads whitespace-separated `(x, value)` rows; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64> {
                tok.ok_or_else(|| Error::Parse(format!("line {}: expected two columns", lineno + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            xs.push(parse(it.next())?);
            ys.push(parse(it.next())?);
            if it.next().is_some() {
                return Err(Error::Parse(format!("line {}: expected two columns", lineno + 1)));
            }
        }
        Self::new(xs, ys)
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    /// Affine tail `(intercept, slope)` used beyond the last knot.
    pub fn right_tail(&self) -> (f64, f64) {
        self.right
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.left.0 + self.left.1 * x;
        }
        if x > self.xs[n - 1] {
            return self.right.0 + self.right.1 * x;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.left.1;
        }
        if x > self.xs[n - 1] {
            return self.right.1;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[i] + d10 * self.slopes[i] + d01 * self.ys[i + 1] + d11 * self.slopes[i + 1]
    }
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
    } else {
        m[0] = end(h[0], h[1], delta[0], delta[1]);
        m[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    m
}

/// Drift `a(x)` of the firm value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    Constant {
        c: f64,
    },
    /// `a(x) = alpha + beta x`
    Affine {
        alpha: f64,
        beta: f64,
    },
    Tabulated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        xs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        values: Vec<f64>,
        #[serde(skip)]
        table: Option<Box<Tabulated>>,
    },
}

impl DriftSpec {
    pub fn ou(k: f64) -> Self {
        DriftSpec::Affine { alpha: 0.0, beta: -k }
    }

    pub fn tabulated(table: Tabulated) -> Self {
        DriftSpec::Tabulated {
            path: None,
            xs: table.xs.clone(),
            values: table.ys.clone(),
            table: Some(Box::new(table)),
        }
    }

    /// Builds the interpolant of a deserialized tabulated spec.
    pub fn resolve(self, base: Option<&Path>) -> Result<Self> {
        match self {
            DriftSpec::Tabulated {
                path,
                xs,
                values,
                table: None,
            } => {
                let table = match &path {
                    Some(p) => {
                        let full = match base {
                            Some(b) => b.join(p),
                            None => p.into(),
                        };
                        Tabulated::load(&full)?
                    }
                    None => Tabulated::new(xs.clone(), values.clone())?,
                };
                Ok(DriftSpec::Tabulated {
                    path,
                    xs: table.xs.clone(),
                    values: table.ys.clone(),
                    table: Some(Box::new(table)),
                })
            }
            other => Ok(other),
        }
    }

    fn table(&self) -> &Tabulated {
        match self {
            DriftSpec::Tabulated { table: Some(t), .. } => t,
            _ => panic!("tabulated drift used before resolve()"),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { c } => *c,
            DriftSpec::Affine { alpha, beta } => alpha + beta * x,
            DriftSpec::Tabulated { .. } => self.table().eval(x),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Zero | DriftSpec::Constant { .. } => 0.0,
            DriftSpec::Affine { beta, .. } => *beta,
            DriftSpec::Tabulated { .. } => self.table().deriv(x),
        }
    }

    /// `a(x)^2 + a'(x)`, the killing rate of the bridge representation.
    #[inline]
    pub fn bridge_potential(&self, x: f64) -> f64 {
        let a = self.eval(x);
        a * a + self.deriv(x)
    }

    /// Smallest `K` with `|a(x)| <= K (1 + |x|)` on the whole line.
    pub fn growth_constant(&self) -> f64 {
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { c } => c.abs(),
            DriftSpec::Affine { alpha, beta } => alpha.abs().max(beta.abs()),
            DriftSpec::Tabulated { .. } => {
                let t = self.table();
                let lo = t.xs[0];
                let hi = *t.xs.last().unwrap_or(&lo);
                let grid = uniform_grid(lo.min(0.0) - 1.0, hi + 1.0, 20_000);
                let k = linear_growth_over(self, &grid);
                k.max(t.right.1.abs()).max(t.left.1.abs())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DriftSpec::Zero)
            || matches!(self, DriftSpec::Constant { c } if *c == 0.0)
            || matches!(self, DriftSpec::Affine { alpha, beta } if *alpha == 0.0 && *beta == 0.0)
    }
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Default validation grid: `[0, 50]` with `10^4` points.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(0.0, 50.0, 10_000)
}

/// `A(x) = ∫_0^x a(y) dy`.
pub fn potential_a(spec: &DriftSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::param("x", "must be finite"));
    }
    match spec {
        DriftSpec::Zero => Ok(0.0),
        DriftSpec::Constant { c } => Ok(c * x),
        DriftSpec::Affine { alpha, beta } => Ok(alpha * x + 0.5 * beta * x * x),
        DriftSpec::Tabulated { .. } => {
            let t = spec.table();
            let (lo, hi, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
            // Split at knots so every piece is a single cubic or affine segment.
            let mut cuts = vec![lo];
            cuts.extend(t.xs.iter().copied().filter(|&k| k > lo && k < hi));
            cuts.push(hi);
            let pieces = (cuts.len() - 1).max(1) as f64;
            let tol = 1e-10 / pieces;
            let mut total = 0.0;
            for w in cuts.windows(2) {
                total += quad::integrate(|y| t.eval(y), w[0], w[1], tol)?.value;
            }
            Ok(sign * total)
        }
    }
}

/// `sup_{x in grid} |a(x)| / (1 + |x|)`.
pub fn linear_growth_k(spec: &DriftSpec, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::param("grid", "empty grid"));
    }
    Ok(linear_growth_over(spec, grid))
}

fn linear_growth_over(spec: &DriftSpec, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&x| spec.eval(x).abs() / (1.0 + x.abs()))
        .fold(0.0, f64::max)
}

/// Limit of `a` or `A` at `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sup_abs_derivative: f64,
    pub a_at_infinity: Limit,
    pub potential_at_infinity: Limit,
    /// Mean-reversion constant `K_a` of the `a(∞) = -∞` branch.
    pub k_a: Option<f64>,
    pub g_a: Option<f64>,
    pub c_f: Option<f64>,
    pub p: Option<f64>,
    /// Whether `f_a = a + K_a x` is nonpositive beyond `g_a`.
    pub f_a_nonpositive: Option<bool>,
    pub clauses: Vec<ClauseResult>,
    pub pass: bool,
}

/// Exponent threshold for the fitted `-∫ f_a <= c_f x^p` tail bound.
pub const P_FAIL_THRESHOLD: f64 = 1.95;

/// Checks the standing assumptions on the drift.
pub fn validate_drift(spec: &DriftSpec, grid: &[f64]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(Error::param("grid", "empty grid"));
    }
    if let Some(&x) = grid.iter().find(|x| !x.is_finite()) {
        return Err(Error::param("grid", format!("non-finite grid point {x}")));
    }
    for &x in grid {
        let (a, d) = (spec.eval(x), spec.deriv(x));
        if !a.is_finite() || !d.is_finite() {
            return Err(Error::NonFinite {
                x,
                what: "drift or its derivative".into(),
            });
        }
    }
    match spec {
        DriftSpec::Zero => Ok(symbolic_report(0.0, 0.0)),
        DriftSpec::Constant { c } => Ok(symbolic_report(*c, 0.0)),
        DriftSpec::Affine { alpha, beta } => Ok(symbolic_report(*alpha, *beta)),
        DriftSpec::Tabulated { .. } => Ok(grid_report(spec, grid)),
    }
}

fn clause(name: &str, pass: bool, detail: impl Into<String>) -> ClauseResult {
    ClauseResult {
        name: name.to_string(),
        pass,
        detail: detail.into(),
    }
}

fn sign_limit(v: f64) -> Limit {
    if v > 0.0 {
        Limit::PlusInfinity
    } else {
        Limit::MinusInfinity
    }
}

/// Affine family `a(x) = alpha + beta x` (covers zero and constant drifts).
fn symbolic_report(alpha: f64, beta: f64) -> ValidationReport {
    let a_inf = if beta != 0.0 {
        sign_limit(beta)
    } else if alpha != 0.0 {
        Limit::Finite(alpha)
    } else {
        Limit::Finite(0.0)
    };
    // A(x) = alpha x + beta x^2 / 2
    let pot_inf = if beta != 0.0 {
        sign_limit(beta)
    } else if alpha != 0.0 {
        sign_limit(alpha)
    } else {
        Limit::Finite(0.0)
    };
    let mut clauses = vec![
        clause("bounded_derivative", true, format!("a' = {beta} everywhere")),
        clause("potential_limit", true, format!("A(x) = {alpha} x + {beta} x^2 / 2")),
        clause("drift_limit", true, format!("a(∞) = {a_inf:?}")),
    ];
    let (mut k_a, mut g_a, mut c_f, mut p, mut neg) = (None, None, None, None, None);
    if beta < 0.0 {
        // f_a ≡ alpha; -∫_0^x f_a = -alpha x, bounded by max(-alpha, 0) x^1.
        k_a = Some(-beta);
        g_a = Some(0.0);
        c_f = Some((-alpha).max(0.0));
        p = Some(if alpha < 0.0 { 1.0 } else { 0.0 });
        neg = Some(alpha <= 0.0);
        clauses.push(clause(
            "mean_reverting_tail",
            true,
            format!("K_a = {}, f_a ≡ {alpha}", -beta),
        ));
    }
    ValidationReport {
        sup_abs_derivative: beta.abs(),
        a_at_infinity: a_inf,
        potential_at_infinity: pot_inf,
        k_a,
        g_a,
        c_f,
        p,
        f_a_nonpositive: neg,
        pass: clauses.iter().all(|c| c.pass),
        clauses,
    }
}

fn grid_report(spec: &DriftSpec, grid: &[f64]) -> ValidationReport {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let n = sorted.len();
    let x_max = sorted[n - 1];
    let x_min = sorted[0];
    let sup_on = |limit: f64| {
        sorted
            .iter()
            .filter(|&&x| x <= limit)
            .map(|&x| spec.deriv(x).abs())
            .fold(0.0, f64::max)
    };
    let sup_full = sup_on(x_max);
    let half = x_min + 0.5 * (x_max - x_min);
    let sup_half = sup_on(half);
    // A derivative that keeps growing as the grid extends is treated as unbounded.
    let growing = sup_full > 1.5 * sup_half.max(1e-12) && sup_full - sup_half > 1e-8;
    let mut clauses = vec![clause(
        "bounded_derivative",
        !growing,
        format!("sup|a'| = {sup_full:.6e} on grid, {sup_half:.6e} on its lower half"),
    )];

    // Tail behaviour from the last 10% of the grid.
    let tail_start = n - (n / 10).max(2).min(n);
    let tx = &sorted[tail_start..];
    let ta: Vec<f64> = tx.iter().map(|&x| spec.eval(x)).collect();
    let (slope, intercept) = if tx.len() >= 2 {
        linear_fit(tx, &ta)
    } else {
        (0.0, ta[0])
    };
    let scale = ta.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let flat = slope.abs() * (x_max - tx[0]).max(1e-12) <= 1e-6 * scale;
    let a_inf = if flat {
        Limit::Finite(intercept + slope * x_max)
    } else {
        sign_limit(slope)
    };
    clauses.push(clause(
        "drift_limit",
        true,
        format!("a(∞) ≈ {a_inf:?} (tail slope {slope:.4e})"),
    ));

    let a_end = spec.eval(x_max);
    let pot_inf = match a_inf {
        Limit::Finite(v) if v.abs() <= 1e-10 * scale => {
            let a_tail = potential_a(spec, x_max).unwrap_or(f64::NAN);
            Limit::Finite(a_tail)
        }
        Limit::Finite(v) => sign_limit(v),
        other => other,
    };
    let tail_sign_constant = ta.iter().all(|v| v.signum() == a_end.signum() || *v == 0.0);
    clauses.push(clause(
        "potential_limit",
        tail_sign_constant,
        format!("A(∞) ≈ {pot_inf:?}; tail sign of a constant: {tail_sign_constant}"),
    ));

    let (mut k_a, mut g_a, mut c_f, mut p, mut neg) = (None, None, None, None, None);
    if a_inf == Limit::MinusInfinity {
        let k = -slope;
        k_a = Some(k);
        let f = |x: f64| spec.eval(x) + k * x;
        // g_a: first grid point after which f_a stays nonpositive.
        let mut g = None;
        for (i, &x) in sorted.iter().enumerate().rev() {
            if f(x) > 1e-12 * scale {
                g = sorted.get(i + 1).copied();
                break;
            }
            if i == 0 {
                g = Some(x);
            }
        }
        neg = Some(g.is_some());
        g_a = g;
        // -∫_0^x f_a on the tail grid, log-log regression for p.
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        let mut acc = 0.0;
        let mut prev = 0.0f64;
        let mut prev_f = f(0.0);
        for &x in sorted.iter().filter(|&&x| x > 0.0) {
            let fx = f(x);
            acc += 0.5 * (fx + prev_f) * (x - prev);
            prev = x;
            prev_f = fx;
            if x >= tx[0] && -acc > 1e-12 {
                lx.push(x.ln());
                ly.push((-acc).ln());
            }
        }
        let (pp, cc) = if lx.len() >= 2 {
            let (s, c) = linear_fit(&lx, &ly);
            (s, c.exp())
        } else {
            // -∫ f_a is nonpositive on the tail: bound holds with c_f = 0.
            (0.0, 0.0)
        };
        p = Some(pp);
        c_f = Some(cc);
        clauses.push(clause(
            "mean_reverting_tail",
            pp < P_FAIL_THRESHOLD,
            format!("K_a = {k:.6}, g_a = {g:?}, fitted p = {pp:.4}, c_f = {cc:.4e}"),
        ));
    }

    ValidationReport {
        sup_abs_derivative: sup_full,
        a_at_infinity: a_inf,
        potential_at_infinity: pot_inf,
        k_a,
        g_a,
        c_f,
        p,
        f_a_nonpositive: neg,
        pass: clauses.iter().all(|c| c.pass),
        clauses,
    }
}

/// Observation coefficient `b(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObsSpec {
    Zero,
    /// `b(t, x) = slope x`
    Linear {
        slope: f64,
    },
    /// `b(t, x) = clamp(slope x, -cap, cap)`, bounded and Lipschitz.
    Clipped {
        slope: f64,
        cap: f64,
    },
}

impl ObsSpec {
    #[inline]
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            ObsSpec::Zero => 0.0,
            ObsSpec::Linear { slope } => slope * x,
            ObsSpec::Clipped { slope, cap } => (slope * x).clamp(-cap, cap),
        }
    }

    /// `K_b(T)`: `|b(t, x)| <= K_b |x|` for `t <= T`.
    pub fn lipschitz(&self, _horizon: f64) -> f64 {
        match *self {
            ObsSpec::Zero => 0.0,
            ObsSpec::Linear { slope } | ObsSpec::Clipped { slope, .. } => slope.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ObsSpec::Zero => true,
            ObsSpec::Linear { slope } => slope == 0.0,
            ObsSpec::Clipped { slope, cap } => slope == 0.0 || cap == 0.0,
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, ObsSpec::Linear { slope } if *slope != 0.0)
    }

    /// Grid check of `b(t, 0) = 0` and `|b(t, x)| <= K_b |x|` on `[0, T]`.
    pub fn validate(&self, horizon: f64, xs: &[f64]) -> Result<()> {
        if let ObsSpec::Clipped { cap, .. } = self {
            if *cap < 0.0 {
                return Err(Error::param("obs.cap", "must be nonnegative"));
            }
        }
        let kb = self.lipschitz(horizon);
        for i in 0..=20 {
            let t = horizon * i as f64 / 20.0;
            if self.eval(t, 0.0) != 0.0 {
                return Err(Error::param("obs", format!("b({t}, 0) != 0")));
            }
            for &x in xs {
                let v = self.eval(t, x);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        x,
                        what: "observation coefficient".into(),
                    });
                }
                if v.abs() > kb * x.abs() * (1.0 + 1e-12) {
                    return Err(Error::param("obs", format!("|b({t}, {x})| exceeds K_b |x|")));
                }
            }
        }
        Ok(())
    }
}

/// Law of `X_0`, supported on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Point {
        x0: f64,
    },
    /// `log X_0 ~ N(m, s^2)`
    Lognormal {
        m: f64,
        s: f64,
    },
    Tabulated {
        xs: Vec<f64>,
        ps: Vec<f64>,
    },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Point { x0 } => {
                if !(x0.is_finite() && *x0 > 0.0) {
                    return Err(Error::param("init.x0", "must be finite and positive"));
                }
            }
            InitialLaw::Lognormal { m, s } => {
                if !m.is_finite() || !(s.is_finite() && *s >= 0.0) {
                    return Err(Error::param("init", "lognormal needs finite m and s >= 0"));
                }
            }
            InitialLaw::Tabulated { xs, ps } => {
                if xs.is_empty() || xs.len() != ps.len() {
                    return Err(Error::param("init", "tabulated law needs matching nonempty xs and ps"));
                }
                if xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::param("init.xs", "support must lie in (0, ∞)"));
                }
                if ps.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::param("init.ps", "probabilities must be nonnegative"));
                }
                let total: f64 = ps.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::param("init.ps", format!("probabilities sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Inverse-CDF sample from a uniform on (0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            InitialLaw::Point { x0 } => *x0,
            InitialLaw::Lognormal { m, s } => (m + s * norm_inv(u)).exp(),
            InitialLaw::Tabulated { xs, ps } => {
                let mut acc = 0.0;
                for (x, p) in xs.iter().zip(ps) {
                    acc += p;
                    if u < acc {
                        return *x;
                    }
                }
                *xs.last().expect("validated nonempty")
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::Point { x0 } => *x0,
            InitialLaw::Lognormal { m, s } => (m + 0.5 * s * s).exp(),
            InitialLaw::Tabulated { xs, ps } => xs.iter().zip(ps).map(|(x, p)| x * p).sum(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            InitialLaw::Point { x0 } => x0 * x0,
            InitialLaw::Lognormal { m, s } => (2.0 * m + 2.0 * s * s).exp(),
            InitialLaw::Tabulated { xs, ps } => xs.iter().zip(ps).map(|(x, p)| x * x * p).sum(),
        }
    }

    /// `∫ g dμ`; quadrature over normal quantiles for the lognormal kind.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        match self {
            InitialLaw::Point { x0 } => Ok(g(*x0)),
            InitialLaw::Tabulated { xs, ps } => Ok(xs.iter().zip(ps).map(|(x, p)| g(*x) * p).sum()),
            InitialLaw::Lognormal { m, s } => {
                if *s == 0.0 {
                    return Ok(g(m.exp()));
                }
                let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                Ok(quad::integrate(|z| g((m + s * z).exp()) * phi(z), -12.0, 12.0, 1e-10)?.value)
            }
        }
    }
}
