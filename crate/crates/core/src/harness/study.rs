use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{init_cloud, run_filter, FilterParams, Observation};
use crate::par;
use crate::rng::{derive_seed, Domain};
use crate::simulate::simulate_scenario;
use crate::stats::{linear_fit, mean, variance, Estimate};

use super::suites::{cv_gap, identity_paths};
use super::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyAxis {
    /// Identity gap (control-variate estimator) against the step.
    Dt,
    /// Replicate variance of `Z_T` on one observation path against the particle count.
    NParticles,
    /// Standard error of the identity mean at the horizon against the path count.
    NPaths,
    /// Time-averaged intensity on one observation path against the window.
    Epsilon,
}

impl StudyAxis {
    pub fn name(self) -> &'static str {
        match self {
            StudyAxis::Dt => "dt",
            StudyAxis::NParticles => "n_particles",
            StudyAxis::NPaths => "n_paths",
            StudyAxis::Epsilon => "epsilon",
        }
    }

    fn statistic(self) -> &'static str {
        match self {
            StudyAxis::Dt => "identity_gap",
            StudyAxis::NParticles => "z_variance",
            StudyAxis::NPaths => "identity_stderr",
            StudyAxis::Epsilon => "mean_lambda",
        }
    }

    /// Whether a larger level is the finer one.
    fn finer_is_larger(self) -> bool {
        matches!(self, StudyAxis::NParticles | StudyAxis::NPaths)
    }
}

impl fmt::Display for StudyAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt" => Ok(StudyAxis::Dt),
            "n_particles" | "N_p" | "np" => Ok(StudyAxis::NParticles),
            "n_paths" => Ok(StudyAxis::NPaths),
            "epsilon" | "eps" => Ok(StudyAxis::Epsilon),
            _ => Err(Error::param("axis", format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub level: f64,
    pub statistic: f64,
    pub stderr: f64,
    /// Gap, variance or standard error itself on the first three axes;
    /// distance to the finest level on the window axis.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub axis: StudyAxis,
    pub statistic: String,
    /// Coarse to fine.
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `ln error` on `ln level`.
    pub order: f64,
    /// Errors strictly decrease from coarse to fine.
    pub monotone: bool,
}

/// Particle-steps above which a study is refused.
pub const STUDY_BUDGET: f64 = 5e11;

fn cost(cfg: &ExperimentConfig, axis: StudyAxis, level: f64) -> f64 {
    let sc = &cfg.scenario;
    let steps = sc.horizon / sc.dt;
    let np = cfg.filter.n_particles as f64;
    let paths = sc.n_paths as f64;
    match axis {
        StudyAxis::Dt => paths * np * sc.horizon / level,
        StudyAxis::NParticles => cfg.harness.study_replicates as f64 * level * steps,
        StudyAxis::NPaths => level * np * steps,
        StudyAxis::Epsilon => np * steps,
    }
}

fn run_level(cfg: &ExperimentConfig, axis: StudyAxis, level: f64) -> Result<(f64, f64)> {
    let sc = &cfg.scenario;
    match axis {
        StudyAxis::Dt => {
            let paths = identity_paths(cfg, level, &cfg.filter, sc.n_paths)?;
            let last = paths.first().map_or(0, |p| p.cv.len().saturating_sub(1));
            let at_t: Vec<f64> = paths.iter().map(|p| p.cv[last]).collect();
            Ok((cv_gap(&paths), Estimate::from_samples(&at_t).stderr))
        }
        StudyAxis::NPaths => {
            let paths = identity_paths(cfg, sc.dt, &cfg.filter, level as usize)?;
            let last = paths.first().map_or(0, |p| p.a.len().saturating_sub(1));
            let at_t: Vec<f64> = paths.iter().map(|p| p.a[last]).collect();
            let e = Estimate::from_samples(&at_t);
            Ok((e.stderr, 0.0))
        }
        StudyAxis::NParticles => {
            let params = FilterParams {
                n_particles: level as usize,
                ..cfg.filter.clone()
            };
            let model = cfg.filter_model(&params, sc.step(), sc.horizon)?;
            let obs = Observation::from_scenario(&simulate_scenario(sc, 0)?);
            let r = cfg.harness.study_replicates;
            let zs = par::try_map_indexed(sc.exec, r, |j| -> Result<f64> {
                let cloud = init_cloud(
                    &sc.init,
                    params.n_particles,
                    derive_seed(params.seed, Domain::Init as u64, 0, j as u64),
                )?;
                let key = derive_seed(params.seed, Domain::Particle as u64, 0, j as u64);
                let tr = run_filter(&model, cloud, key, &obs, &[])?;
                Ok(tr.states.last().expect("nonempty trajectory").z)
            })?;
            let v = variance(&zs);
            // Standard error of a normal-sample variance.
            Ok((v, v * (2.0 / (r as f64 - 1.0)).sqrt()))
        }
        StudyAxis::Epsilon => {
            let params = FilterParams {
                epsilon: Some(level),
                ..cfg.filter.clone()
            };
            let model = cfg.filter_model(&params, sc.step(), sc.horizon)?;
            let obs = Observation::from_scenario(&simulate_scenario(sc, 0)?);
            let cloud = init_cloud(
                &sc.init,
                params.n_particles,
                derive_seed(params.seed, Domain::Init as u64, 0, 0),
            )?;
            let key = derive_seed(params.seed, Domain::Particle as u64, 0, 0);
            let tr = run_filter(&model, cloud, key, &obs, &[])?;
            let lam: Vec<f64> = tr.states.iter().map(|s| s.lambda).collect();
            Ok((mean(&lam), 0.0))
        }
    }
}

/// Runs one statistic at each level and fits the empirical order.
pub fn convergence_study(cfg: &ExperimentConfig, axis: StudyAxis, levels: &[f64]) -> Result<StudyTable> {
    cfg.validate()?;
    if levels.len() < 3 {
        return Err(Error::param("levels", "a study needs at least three levels"));
    }
    if levels.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::param("levels", "levels must be positive and finite"));
    }
    if matches!(axis, StudyAxis::NParticles | StudyAxis::NPaths) && levels.iter().any(|l| l.fract() != 0.0) {
        return Err(Error::param("levels", "counts must be whole numbers"));
    }
    let total: f64 = levels.iter().map(|&l| cost(cfg, axis, l)).sum();
    if total > STUDY_BUDGET {
        return Err(Error::ResourceGuard(format!(
            "study needs about {total:.2e} particle-steps, budget {STUDY_BUDGET:.0e}"
        )));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    if !axis.finer_is_larger() {
        sorted.reverse();
    }
    sorted.dedup();
    if sorted.len() < 3 {
        return Err(Error::param("levels", "need at least three distinct levels"));
    }
    let mut rows = Vec::with_capacity(sorted.len());
    for &level in &sorted {
        let (statistic, stderr) = run_level(cfg, axis, level)?;
        rows.push(StudyRow {
            level,
            statistic,
            stderr,
            error: statistic.abs(),
        });
    }
    if axis == StudyAxis::Epsilon {
        let finest = rows.last().expect("three rows").statistic;
        for r in &mut rows {
            r.error = (r.statistic - finest).abs();
        }
    }
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.level.ln(), r.error.ln()))
        .collect();
    let order = if fit.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        linear_fit(&x, &y).0
    } else {
        f64::NAN
    };
    let considered = if axis == StudyAxis::Epsilon {
        &rows[..rows.len() - 1]
    } else {
        &rows[..]
    };
    let monotone = considered.windows(2).all(|w| w[1].error < w[0].error);
    Ok(StudyTable {
        axis,
        statistic: axis.statistic().to_string(),
        rows,
        order,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_levels_is_an_error() {
        let cfg = ExperimentConfig::default();
        assert!(convergence_study(&cfg, StudyAxis::Dt, &[1e-3]).is_err());
        assert!(convergence_study(&cfg, StudyAxis::Dt, &[1e-3, 5e-4]).is_err());
        assert!(convergence_study(&cfg, StudyAxis::NParticles, &[100.0, 100.0, 200.0]).is_err());
        assert!(convergence_study(&cfg, StudyAxis::NParticles, &[100.5, 200.0, 400.0]).is_err());
    }

    #[test]
    fn oversized_study_is_refused() {
        let cfg = ExperimentConfig::default();
        let err = convergence_study(&cfg, StudyAxis::Dt, &[1e-5, 1e-6, 1e-7]).unwrap_err();
        assert!(matches!(err, Error::ResourceGuard(_)));
    }

    #[test]
    fn axis_names_parse() {
        for a in [
            StudyAxis::Dt,
            StudyAxis::NParticles,
            StudyAxis::NPaths,
            StudyAxis::Epsilon,
        ] {
            assert_eq!(a.name().parse::<StudyAxis>().unwrap(), a);
        }
    }
}
