use azema::coeffs::ObsSpec;
use azema::error::Error;
use azema::harness::{convergence_study, report_json, run_suite, study_csv, ExperimentConfig, StudyAxis, Suite};

fn smoke(suites: &[Suite]) -> ExperimentConfig {
    let mut c = ExperimentConfig::default().smoke();
    c.harness.suites = suites.to_vec();
    c
}

#[test]
fn deterministic_suites_pass_at_smoke_scale() {
    let report = run_suite(&smoke(&[Suite::Coeffs, Suite::Bounds])).unwrap();
    for c in &report.checks {
        assert!(c.pass, "{}.{}: {} ({})", c.suite, c.name, c.statistic, c.detail);
    }
    assert!(report.pass);
}

#[test]
fn zero_signal_baseline_runs_clean() {
    let mut cfg = smoke(&[Suite::Degenerate, Suite::Rebate]);
    cfg.scenario.obs = ObsSpec::Zero;
    let report = run_suite(&cfg).unwrap();
    assert!(report
        .checks
        .iter()
        .all(|c| c.name != "error" && c.statistic.is_finite()));
    assert!(report.suite_pass(Suite::Degenerate), "{}", report_json(&report));
}

#[test]
fn same_seed_same_bytes() {
    let cfg = smoke(&[Suite::Hitting, Suite::Pricing]);
    let a = report_json(&run_suite(&cfg).unwrap());
    let b = report_json(&run_suite(&cfg).unwrap());
    assert_eq!(a, b);
    let c = report_json(&run_suite(&cfg.clone().with_seed(99)).unwrap());
    assert_ne!(a, c);
}

#[test]
fn repeated_suites_run_once() {
    let report = run_suite(&smoke(&[Suite::Bounds, Suite::Bounds])).unwrap();
    let once = run_suite(&smoke(&[Suite::Bounds])).unwrap();
    assert_eq!(report.checks.len(), once.checks.len());
}

#[test]
fn invalid_config_is_refused_before_running() {
    let mut cfg = smoke(&[Suite::Bounds]);
    cfg.scenario.dt = 0.0;
    let err = run_suite(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "scenario.dt"));
}

#[test]
fn particle_variance_decays_like_one_over_n() {
    let mut cfg = ExperimentConfig::default().smoke();
    cfg.harness.study_replicates = 32;
    let table = convergence_study(&cfg, StudyAxis::NParticles, &[1600.0, 100.0, 400.0]).unwrap();
    let levels: Vec<f64> = table.rows.iter().map(|r| r.level).collect();
    assert_eq!(levels, [100.0, 400.0, 1600.0]);
    assert!((-1.5..=-0.5).contains(&table.order), "order {}", table.order);
    assert!(study_csv(&table).lines().count() == 6);
}

#[test]
fn study_needs_three_levels() {
    let cfg = ExperimentConfig::default().smoke();
    assert!(convergence_study(&cfg, StudyAxis::Epsilon, &[0.1]).is_err());
}

#[test]
fn config_text_round_trips() {
    let cfg = ExperimentConfig::default().smoke().with_seed(5);
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), None).unwrap();
    assert_eq!(back, cfg);
    let mut wide = cfg;
    wide.scenario.seed = u64::MAX;
    assert!(wide.to_toml().is_err());
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::load(&dir.join("default.toml")).unwrap();
    assert_eq!(default, ExperimentConfig::default());
    let smoke = ExperimentConfig::load(&dir.join("smoke.toml")).unwrap();
    assert_eq!(smoke, ExperimentConfig::default().smoke());
    for name in ["zero_signal.toml", "tabulated.toml"] {
        ExperimentConfig::load(&dir.join(name)).unwrap().validate().unwrap();
    }
}
