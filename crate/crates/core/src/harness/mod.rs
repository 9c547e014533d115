//! Configuration, verification suites, convergence studies and report
//! emission.
//!
//! A suite produces a list of checks. Statistical checks are judged against
//! `sigma` standard errors; any that fail are recomputed once with doubled
//! samples (a superset of the original draws) and judged against
//! `rerun_sigma`. Everything except wall-clock time is a deterministic
//! function of the configuration.

mod config;
mod emit;
mod study;
mod suites;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{CoeffsSection, ExperimentConfig, HarnessSection, HittingSection, PricingSection};
pub use emit::{emit, emit_study, report_csv, report_json, study_csv, timings_csv, Format};
pub use study::{convergence_study, StudyAxis, StudyRow, StudyTable};
pub use suites::{pricing_state, PricingState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Coeffs,
    Hitting,
    Bounds,
    Identities,
    Degenerate,
    Decomposition,
    Ks,
    Pricing,
    Rebate,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Coeffs,
        Suite::Hitting,
        Suite::Bounds,
        Suite::Identities,
        Suite::Degenerate,
        Suite::Decomposition,
        Suite::Ks,
        Suite::Pricing,
        Suite::Rebate,
        Suite::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Coeffs => "coeffs",
            Suite::Hitting => "hitting",
            Suite::Bounds => "bounds",
            Suite::Identities => "identities",
            Suite::Degenerate => "degenerate",
            Suite::Decomposition => "decomposition",
            Suite::Ks => "ks",
            Suite::Pricing => "pricing",
            Suite::Rebate => "rebate",
            Suite::Determinism => "determinism",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config("harness.suites", format!("unknown suite `{s}`")))
    }
}

/// How a measured quantity is judged.
#[derive(Debug, Clone)]
pub(crate) enum Verdict {
    /// A z-score, within the band.
    Z(f64),
    /// Share of z-scores within the band must reach `min`.
    Fraction {
        zs: Vec<f64>,
        min: f64,
    },
    /// Statistical ratio inside `[lo, hi]`.
    Range {
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// Deterministic error at most `tol`.
    Below {
        value: f64,
        tol: f64,
    },
    Flag(bool),
}

#[derive(Debug, Clone)]
pub(crate) struct Measure {
    pub name: String,
    pub property: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

impl Measure {
    pub fn new(name: impl Into<String>, property: &'static str, verdict: Verdict, detail: impl Into<String>) -> Self {
        Measure {
            name: name.into(),
            property,
            verdict,
            detail: detail.into(),
        }
    }

    fn statistical(&self) -> bool {
        matches!(
            self.verdict,
            Verdict::Z(_) | Verdict::Fraction { .. } | Verdict::Range { .. }
        )
    }

    /// `(statistic, lower, upper, pass)` at band `sigma`.
    fn judge(&self, sigma: f64) -> (f64, Option<f64>, f64, bool) {
        match &self.verdict {
            Verdict::Z(z) => (*z, None, sigma, z.abs() <= sigma),
            Verdict::Fraction { zs, min } => {
                let inside = zs.iter().filter(|z| z.abs() <= sigma).count();
                let frac = if zs.is_empty() {
                    0.0
                } else {
                    inside as f64 / zs.len() as f64
                };
                (frac, Some(*min), 1.0, frac >= *min)
            }
            Verdict::Range { value, lo, hi } => (*value, Some(*lo), *hi, *value >= *lo && *value <= *hi),
            Verdict::Below { value, tol } => (*value, None, *tol, value.abs() <= *tol),
            Verdict::Flag(b) => (f64::from(u8::from(*b)), Some(1.0), 1.0, *b),
        }
    }
}

/// One judged check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    /// What the check verifies.
    pub property: String,
    pub statistic: f64,
    /// Pass iff `lower <= statistic <= upper`; a missing lower bound means
    /// `|statistic| <= upper`.
    pub lower: Option<f64>,
    pub upper: f64,
    pub pass: bool,
    /// 2 when the check was rerun with doubled samples.
    pub attempts: u32,
    pub detail: String,
    /// Wall-clock seconds of the owning suite; never serialized.
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn suite_pass(&self, suite: Suite) -> bool {
        self.checks.iter().filter(|c| c.suite == suite).all(|c| c.pass)
    }
}

fn result(suite: Suite, m: &Measure, sigma: f64, attempts: u32) -> CheckResult {
    let (statistic, lower, upper, pass) = m.judge(sigma);
    // Keep JSON numeric: non-finite values would serialize as null.
    let statistic = if statistic.is_finite() { statistic } else { f64::MAX };
    CheckResult {
        suite,
        name: m.name.clone(),
        property: m.property.to_string(),
        statistic,
        lower,
        upper,
        pass,
        attempts,
        detail: m.detail.clone(),
        runtime_s: 0.0,
    }
}

fn error_check(suite: Suite, e: &Error, attempts: u32) -> CheckResult {
    CheckResult {
        suite,
        name: "error".into(),
        property: "suite runs to completion".into(),
        statistic: 0.0,
        lower: None,
        upper: 0.0,
        pass: false,
        attempts,
        detail: e.to_string(),
        runtime_s: 0.0,
    }
}

/// Runs one suite with the rerun rule.
pub fn run_one(cfg: &ExperimentConfig, suite: Suite) -> Vec<CheckResult> {
    let started = Instant::now();
    let (sigma, rerun) = (cfg.harness.sigma, cfg.harness.rerun_sigma);
    let mut out = match suites::measure(cfg, suite, 1) {
        Err(e) => vec![error_check(suite, &e, 1)],
        Ok(first) => {
            let mut out: Vec<CheckResult> = first.iter().map(|m| result(suite, m, sigma, 1)).collect();
            let retry: Vec<usize> = (0..first.len())
                .filter(|&i| first[i].statistical() && !out[i].pass)
                .collect();
            if !retry.is_empty() {
                match suites::measure(cfg, suite, 2) {
                    Ok(second) => {
                        for i in retry {
                            if let Some(m) = second.iter().find(|m| m.name == first[i].name) {
                                out[i] = result(suite, m, rerun, 2);
                            }
                        }
                    }
                    Err(e) => out.push(error_check(suite, &e, 2)),
                }
            }
            out
        }
    };
    let secs = started.elapsed().as_secs_f64();
    for c in &mut out {
        c.runtime_s = secs;
    }
    out
}

/// Runs every selected suite in order.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut seen = Vec::new();
    let mut checks = Vec::new();
    for &s in &cfg.harness.suites {
        if seen.contains(&s) {
            continue;
        }
        seen.push(s);
        checks.extend(run_one(cfg, s));
    }
    Ok(SuiteReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn judging() {
        let m = Measure::new("a", "p", Verdict::Z(3.5), "");
        assert!(!m.judge(3.0).3);
        assert!(m.judge(4.0).3);
        let f = Measure::new(
            "f",
            "p",
            Verdict::Fraction {
                zs: vec![0.0, 1.0, 5.0, 0.5],
                min: 0.75,
            },
            "",
        );
        assert_eq!(f.judge(3.0).0, 0.75);
        assert!(f.judge(3.0).3);
        let b = Measure::new("b", "p", Verdict::Below { value: 2e-9, tol: 1e-8 }, "");
        assert!(b.judge(3.0).3 && !b.statistical());
    }
}
