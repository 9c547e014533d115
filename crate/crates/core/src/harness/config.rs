use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coeffs::{default_grid, validate_drift, DriftSpec};
use crate::error::{Error, Result};
use crate::filter::{FilterModel, FilterParams};
use crate::hitting::{log_grid, BridgeMc, DensityTable, HittingModel, Method, MIN_BRIDGES};
use crate::pricing::{BondSpec, NestedSpec, RebateSpec};
use crate::rng::derive_seed;
use crate::simulate::SimConfig;

use super::Suite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoeffsSection {
    /// Grid for the drift assumption checks.
    pub grid: Vec<f64>,
}

impl Default for CoeffsSection {
    fn default() -> Self {
        CoeffsSection { grid: default_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HittingSection {
    /// Overrides the automatic choice between closed form and bridge MC.
    pub method: Option<Method>,
    pub mc: BridgeMc,
    pub bound_xs: Vec<f64>,
    pub t_max: f64,
    pub density_ts: Vec<f64>,
    pub density_xs: Vec<f64>,
    /// Cell fraction that must agree within the band.
    pub min_cell_fraction: f64,
    /// Density table used when the filter drift has no closed form.
    pub table_nt: usize,
    pub table_nx: usize,
    pub table_x_max: f64,
}

impl Default for HittingSection {
    fn default() -> Self {
        HittingSection {
            method: None,
            mc: BridgeMc::default(),
            bound_xs: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            t_max: 10.0,
            density_ts: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            density_xs: vec![0.25, 0.5, 1.0, 1.5, 2.0],
            min_cell_fraction: 0.99,
            table_nt: 64,
            table_nx: 64,
            table_x_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingSection {
    pub t: f64,
    /// Defaults to the scenario horizon.
    pub maturity: Option<f64>,
    pub face: f64,
    pub rebate: RebateSpec,
    pub n_particles: usize,
    pub dt: f64,
    pub n_inner: usize,
    pub n_reinner: usize,
    pub tower_paths: usize,
    /// Direct Monte Carlo paths for the rebate check.
    pub rebate_paths: usize,
    pub rebate_dt: f64,
    pub seed: u64,
}

impl Default for PricingSection {
    fn default() -> Self {
        PricingSection {
            t: 0.5,
            maturity: None,
            face: 1.0,
            rebate: RebateSpec::None,
            n_particles: 500,
            dt: 5e-3,
            n_inner: 1000,
            n_reinner: 4,
            tower_paths: 400,
            rebate_paths: 100_000,
            rebate_dt: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub suites: Vec<Suite>,
    pub out_dir: Option<PathBuf>,
    /// Band for the first attempt, in standard errors.
    pub sigma: f64,
    /// Band after the rerun with doubled samples.
    pub rerun_sigma: f64,
    pub identity_times: Vec<f64>,
    /// Paths for the identity run at twice the scenario step.
    pub coarse_paths: usize,
    pub degenerate_particles: usize,
    pub decomposition_paths: usize,
    pub decomposition_dt: f64,
    pub decomposition_particles: usize,
    /// Accepted range of the fine-to-coarse gap ratio.
    pub decomposition_ratio: [f64; 2],
    pub ks_paths: usize,
    pub ks_particles: usize,
    pub ks_dt: f64,
    pub determinism_threads: usize,
    pub study_replicates: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            suites: Suite::ALL.to_vec(),
            out_dir: None,
            sigma: 3.0,
            rerun_sigma: 4.0,
            identity_times: vec![0.25, 0.5, 1.0],
            coarse_paths: 200,
            degenerate_particles: 10_000,
            decomposition_paths: 64,
            decomposition_dt: 4e-3,
            decomposition_particles: 1000,
            decomposition_ratio: [0.35, 0.65],
            ks_paths: 1000,
            ks_particles: 1000,
            ks_dt: 2e-3,
            determinism_threads: 4,
            study_replicates: 32,
        }
    }
}

/// One run of the tool: every section is optional and falls back to the
/// standard scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub coeffs: CoeffsSection,
    pub hitting: HittingSection,
    #[serde(alias = "simulate")]
    pub scenario: SimConfig,
    pub filter: FilterParams,
    pub pricing: PricingSection,
    pub harness: HarnessSection,
}

/// `section.key` at the byte offset of a TOML error.
fn field_at(text: &str, offset: usize) -> String {
    let mut section = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            section = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        let end = pos + line.len();
        if offset <= end {
            let key = trimmed.split('=').next().unwrap_or("").trim();
            return match (section.is_empty(), trimmed.contains('=')) {
                (true, _) => key.to_string(),
                (false, true) => format!("{section}.{key}"),
                (false, false) => section,
            };
        }
        pos = end + 1;
    }
    section
}

fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::Config {
            field: format!("{section}.{name}"),
            reason,
        },
        Error::Config { .. } => e,
        other => Error::Config {
            field: section.to_string(),
            reason: other.to_string(),
        },
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn nonzero(field: &str, n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::config(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

fn whole_steps(field: &str, span: f64, dt: f64) -> Result<()> {
    let n = span / dt;
    if (n - n.round()).abs() > 1e-6 {
        return Err(Error::config(
            field,
            format!("{span} is not a whole number of steps of {dt}"),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates; tabulated drift paths resolve against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: e.span().map(|s| field_at(text, s.start)).unwrap_or_default(),
            reason: e.message().to_string(),
        })?;
        cfg.scenario.drift = cfg
            .scenario
            .drift
            .resolve(base)
            .map_err(|e| in_section("scenario.drift", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    /// Fails only for integers beyond the TOML range, such as seeds above `i64::MAX`.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn maturity(&self) -> f64 {
        self.pricing.maturity.unwrap_or(self.scenario.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| in_section("scenario", e))?;
        let report = validate_drift(&self.scenario.drift, &self.coeffs.grid).map_err(|e| in_section("coeffs", e))?;
        if !report.pass {
            let failed: Vec<&str> = report
                .clauses
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.as_str())
                .collect();
            return Err(Error::config(
                "scenario.drift",
                format!("standing assumptions fail: {}", failed.join(", ")),
            ));
        }
        self.filter.validate().map_err(|e| in_section("filter", e))?;

        let h = &self.hitting;
        if h.mc.n_bridges < MIN_BRIDGES {
            return Err(Error::config(
                "hitting.mc.n_bridges",
                format!("must be at least {MIN_BRIDGES}"),
            ));
        }
        if h.mc.bridge_steps < 2 {
            return Err(Error::config("hitting.mc.bridge_steps", "must be at least 2"));
        }
        for (name, v) in [
            ("hitting.bound_xs", &h.bound_xs),
            ("hitting.density_ts", &h.density_ts),
            ("hitting.density_xs", &h.density_xs),
        ] {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::config(name, "must be a nonempty list of positive numbers"));
            }
        }
        positive("hitting.t_max", h.t_max)?;
        if !(h.min_cell_fraction > 0.0 && h.min_cell_fraction <= 1.0) {
            return Err(Error::config("hitting.min_cell_fraction", "must lie in (0, 1]"));
        }
        if h.table_nt < 2 || h.table_nx < 2 {
            return Err(Error::config(
                "hitting.table_nt",
                "density tables need at least two points per axis",
            ));
        }
        positive("hitting.table_x_max", h.table_x_max)?;

        let p = &self.pricing;
        let maturity = self.maturity();
        positive("pricing.maturity", maturity)?;
        if !(p.t >= 0.0 && p.t < maturity) {
            return Err(Error::config("pricing.t", "must satisfy 0 <= t < maturity"));
        }
        positive("pricing.dt", p.dt)?;
        whole_steps("pricing.t", p.t, p.dt)?;
        whole_steps("pricing.maturity", maturity, p.dt)?;
        self.bond().validate().map_err(|e| in_section("pricing", e))?;
        if p.n_particles < crate::filter::MIN_PARTICLES {
            return Err(Error::config(
                "pricing.n_particles",
                format!("must be at least {}", crate::filter::MIN_PARTICLES),
            ));
        }
        if p.n_inner < 2 {
            return Err(Error::config("pricing.n_inner", "need at least two inner paths"));
        }
        nonzero("pricing.n_reinner", p.n_reinner)?;
        nonzero("pricing.tower_paths", p.tower_paths)?;
        if p.rebate_paths < 2 {
            return Err(Error::config("pricing.rebate_paths", "need at least two paths"));
        }
        positive("pricing.rebate_dt", p.rebate_dt)?;

        let hs = &self.harness;
        if hs.suites.is_empty() {
            return Err(Error::config("harness.suites", "select at least one suite"));
        }
        positive("harness.sigma", hs.sigma)?;
        if !(hs.rerun_sigma >= hs.sigma && hs.rerun_sigma.is_finite()) {
            return Err(Error::config(
                "harness.rerun_sigma",
                "must be finite and at least `sigma`",
            ));
        }
        if hs.identity_times.is_empty()
            || hs
                .identity_times
                .iter()
                .any(|&t| !(t > 0.0 && t <= self.scenario.horizon))
        {
            return Err(Error::config(
                "harness.identity_times",
                "times must lie in (0, horizon]",
            ));
        }
        for (name, n) in [
            ("harness.coarse_paths", hs.coarse_paths),
            ("harness.decomposition_paths", hs.decomposition_paths),
            ("harness.ks_paths", hs.ks_paths),
            ("harness.determinism_threads", hs.determinism_threads),
        ] {
            nonzero(name, n)?;
        }
        if hs.study_replicates < 2 {
            return Err(Error::config(
                "harness.study_replicates",
                "need at least two replicates",
            ));
        }
        for (name, n) in [
            ("harness.degenerate_particles", hs.degenerate_particles),
            ("harness.decomposition_particles", hs.decomposition_particles),
            ("harness.ks_particles", hs.ks_particles),
        ] {
            if n < crate::filter::MIN_PARTICLES {
                return Err(Error::config(
                    name,
                    format!("must be at least {}", crate::filter::MIN_PARTICLES),
                ));
            }
        }
        positive("harness.decomposition_dt", hs.decomposition_dt)?;
        positive("harness.ks_dt", hs.ks_dt)?;
        let [lo, hi] = hs.decomposition_ratio;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::config("harness.decomposition_ratio", "need 0 <= lo < hi"));
        }
        Ok(())
    }

    /// Reseeds every random component from one master seed. Derived seeds
    /// keep 63 bits so the result still serializes to TOML.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let sub = |tag| derive_seed(seed, tag, 0, 0) >> 1;
        self.scenario.seed = sub(1);
        self.filter.seed = sub(2);
        self.hitting.mc.seed = sub(3);
        self.pricing.seed = sub(4);
        self
    }

    pub fn bond(&self) -> BondSpec {
        BondSpec {
            maturity: self.maturity(),
            face: self.pricing.face,
            rebate: self.pricing.rebate,
        }
    }

    pub fn nested(&self, n_inner: usize) -> NestedSpec {
        NestedSpec {
            n_inner,
            n_reinner: self.pricing.n_reinner,
            seed: self.pricing.seed,
            exec: self.scenario.exec,
        }
    }

    /// Hitting evaluator for `drift`, with a density table when no closed form applies.
    pub fn hitting_model(&self, drift: &DriftSpec, eps: f64, horizon: f64) -> Result<HittingModel> {
        let model = match &self.hitting.method {
            Some(m) => HittingModel::new(m.clone()),
            None => HittingModel::for_drift(drift, self.hitting.mc),
        };
        if model.is_closed_form() {
            return Ok(model);
        }
        let h = &self.hitting;
        let t_grid = log_grid(0.25 * eps, horizon, h.table_nt);
        let x_grid = log_grid(1e-3 * h.table_x_max, h.table_x_max, h.table_nx);
        let table = DensityTable::build(&model, t_grid, x_grid, self.scenario.exec)?;
        Ok(model.with_table(table))
    }

    /// Filter model for the scenario drift and observation at step `dt`.
    pub fn filter_model(&self, params: &FilterParams, dt: f64, horizon: f64) -> Result<FilterModel> {
        let hitting = self.hitting_model(&self.scenario.drift, params.epsilon_for(dt), horizon)?;
        FilterModel::new(self.scenario.drift.clone(), self.scenario.obs, hitting, params, dt)
    }

    /// A copy sized for quick end-to-end runs.
    pub fn smoke(&self) -> Self {
        let mut c = self.clone();
        c.scenario.n_paths = 8;
        c.scenario.dt = 1e-2;
        c.filter.n_particles = 200;
        c.hitting.mc.n_bridges = MIN_BRIDGES;
        c.hitting.mc.bridge_steps = 64;
        c.hitting.bound_xs = vec![0.5, 1.0];
        c.hitting.density_ts = vec![0.25, 1.0];
        c.hitting.density_xs = vec![0.5, 1.0];
        c.pricing.dt = 1e-2;
        c.pricing.n_particles = 200;
        c.pricing.n_inner = 8;
        c.pricing.n_reinner = 2;
        c.pricing.tower_paths = 8;
        c.pricing.rebate_paths = 1000;
        c.pricing.rebate_dt = 1e-2;
        let hs = &mut c.harness;
        hs.coarse_paths = 4;
        hs.degenerate_particles = 500;
        hs.decomposition_paths = 4;
        hs.decomposition_dt = 2e-2;
        hs.decomposition_particles = 200;
        hs.ks_paths = 8;
        hs.ks_particles = 200;
        hs.ks_dt = 1e-2;
        hs.study_replicates = 4;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = ExperimentConfig::from_toml("", None).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.maturity(), 1.0);
    }

    #[test]
    fn nonpositive_dt_names_the_field() {
        for text in [
            "[scenario]\ndt = 0.0\n",
            "[scenario]\ndt = -1e-3\n",
            "[simulate]\ndt = 0\n",
        ] {
            let err = ExperimentConfig::from_toml(text, None).unwrap_err();
            let Error::Config { field, .. } = err else {
                panic!("{err:?}")
            };
            assert_eq!(field, "scenario.dt");
        }
    }

    #[test]
    fn type_errors_and_unknown_keys_name_the_field() {
        let err = ExperimentConfig::from_toml("[filter]\nn_particles = \"many\"\n", None).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "filter.n_particles"),
            "{err:?}"
        );
        let err = ExperimentConfig::from_toml("[harness]\nsigmaa = 3.0\n", None).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field.starts_with("harness")),
            "{err:?}"
        );
        let err = ExperimentConfig::from_toml("[harness]\nsigma = 0.0\n", None).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "harness.sigma"));
        let err = ExperimentConfig::from_toml("[pricing]\nt = 0.123\n", None).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "pricing.t"));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.harness.suites = vec![Suite::Bounds, Suite::Ks];
        c.pricing.rebate = RebateSpec::Constant { value: 0.4 };
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap(), None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seeds_are_spread() {
        let c = ExperimentConfig::default().with_seed(5);
        let d = ExperimentConfig::default().with_seed(6);
        assert_ne!(c.scenario.seed, d.scenario.seed);
        assert_ne!(c.scenario.seed, c.filter.seed);
    }
}
