use proptest::prelude::*;

use azema::coeffs::{DriftSpec, InitialLaw, ObsSpec, Tabulated};
use azema::error::Error;
use azema::filter::{init_cloud, intensity, run_filter, FilterModel, FilterParams, Observation};
use azema::harness::{report_csv, report_json, CheckResult, ExperimentConfig, Suite, SuiteReport};
use azema::hitting::{HittingModel, Method};
use azema::par::{self, Exec};
use azema::pricing::{bond_price, rebate_value, survival_price, BondSpec, RebateSpec};
use azema::rng::{Domain, Stream};
use azema::simulate::{bridge_hit_prob, simulate_batch, simulate_scenario, SimConfig};

fn methods() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::BmClosed),
        (0.05f64..3.0).prop_map(|k| Method::OuClosed { k }),
        (-2.0f64..2.0).prop_map(|c| Method::DriftedBmClosed { c }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_nonnegative_and_survival_in_unit_interval(m in methods(), t in 1e-3f64..20.0, x in 1e-3f64..6.0) {
        let h = HittingModel::new(m);
        let d = h.density(t, x).unwrap();
        let s = h.survival(t, x).unwrap();
        prop_assert!(d.is_finite() && d >= 0.0);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((h.default_prob(t, x).unwrap() + s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survival_is_one_at_time_zero(m in methods(), x in 1e-3f64..6.0) {
        prop_assert_eq!(HittingModel::new(m).survival(0.0, x).unwrap(), 1.0);
    }

    #[test]
    fn bridge_probability_is_a_probability(x0 in 1e-4f64..5.0, x1 in -2.0f64..5.0, dt in 1e-5f64..1.0) {
        let p = bridge_hit_prob(x0, x1, dt).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if x1 <= 0.0 {
            prop_assert_eq!(p, 1.0);
        } else {
            prop_assert!(bridge_hit_prob(x0, x1 + 0.1, dt).unwrap() <= p);
        }
    }

    #[test]
    fn uniforms_stay_open(seed in any::<u64>(), a in any::<u32>(), b in 0u32..(1 << 24), draw in any::<u64>()) {
        let s = Stream::new(seed, Domain::Scenario, a, b);
        for u in s.uniforms(draw) {
            prop_assert!(u > 0.0 && u < 1.0);
        }
        prop_assert_eq!(s.uniforms(draw), Stream::new(seed, Domain::Scenario, a, b).uniforms(draw));
    }

    #[test]
    fn tabulated_drift_hits_its_knots(ys in proptest::collection::vec(-3.0f64..3.0, 3..12)) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| 0.5 * i as f64).collect();
        let t = Tabulated::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!((t.eval(*x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_paths_are_stopped(seed in any::<u64>(), id in 0usize..1000) {
        let cfg = SimConfig { dt: 1e-2, seed, n_paths: 1, ..SimConfig::standard() };
        let s = simulate_scenario(&cfg, id).unwrap();
        prop_assert!(s.x.iter().all(|&x| x >= 0.0));
        match s.default_index {
            Some(k) => {
                prop_assert!(s.defaulted && s.tau <= s.t[k] && (k == 0 || s.tau > s.t[k - 1]));
                prop_assert!(s.x[k..].iter().all(|&x| x == 0.0));
            }
            None => prop_assert!(!s.defaulted && s.tau.is_infinite()),
        }
    }

    #[test]
    fn config_rejects_nonpositive_steps(dt in -1.0f64..=0.0) {
        let err = ExperimentConfig::from_toml(&format!("[scenario]\ndt = {dt:?}\n"), None).unwrap_err();
        let ok = matches!(err, Error::Config { ref field, .. } if field == "scenario.dt");
        prop_assert!(ok, "{}", err);
    }

    #[test]
    fn emitted_values_survive_parsing(stats in proptest::collection::vec(-1e12f64..1e12, 1..8)) {
        let checks = stats.iter().enumerate().map(|(i, &s)| CheckResult {
            suite: Suite::Ks,
            name: format!("c{i}"),
            property: "p".into(),
            statistic: s,
            lower: (i % 2 == 0).then_some(s - 1.0),
            upper: s.abs() + 1.0,
            pass: true,
            attempts: 1,
            detail: "d, with comma".into(),
            runtime_s: 0.0,
        }).collect();
        let r = SuiteReport { checks, pass: true };
        let back: SuiteReport = serde_json::from_str(&report_json(&r)).unwrap();
        prop_assert_eq!(&back, &r);
        for (line, s) in report_csv(&r).lines().skip(1).zip(&stats) {
            let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            prop_assert_eq!(v, *s);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn filter_outputs_respect_their_ranges(seed in any::<u64>(), id in 0usize..50, slope in 0.0f64..1.0) {
        let cfg = SimConfig { dt: 2e-2, seed, obs: ObsSpec::Clipped { slope, cap: 2.0 }, ..SimConfig::standard() };
        let params = FilterParams { n_particles: 200, ..FilterParams::default() };
        let model = FilterModel::new(cfg.drift.clone(), cfg.obs, HittingModel::new(Method::OuClosed { k: 1.0 }), &params, cfg.step()).unwrap();
        let sc = simulate_scenario(&cfg, id).unwrap();
        let tr = run_filter(&model, init_cloud(&cfg.init, 200, seed).unwrap(), seed, &Observation::from_scenario(&sc), &[]).unwrap();
        for (k, s) in tr.states.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&s.z));
            prop_assert!(s.lambda >= 0.0 && s.lambda.is_finite());
            prop_assert!(s.ess <= 200.0 * (1.0 + 1e-9));
            if k > 0 {
                prop_assert!(tr.c[k] >= tr.c[k - 1]);
                prop_assert!(tr.lambda_int[k] >= tr.lambda_int[k - 1]);
            }
        }
        if slope == 0.0 {
            prop_assert!(tr.xi.iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn zero_signal_survival_never_increases(seed in any::<u64>()) {
        let cfg = SimConfig { dt: 2e-2, obs: ObsSpec::Zero, ..SimConfig::standard() };
        let params = FilterParams { n_particles: 300, ..FilterParams::default() };
        let model = FilterModel::new(cfg.drift.clone(), ObsSpec::Zero, HittingModel::new(Method::OuClosed { k: 1.0 }), &params, cfg.step()).unwrap();
        let obs = Observation { dt: cfg.step(), dy: vec![0.3; cfg.n_steps()], tau: f64::INFINITY };
        let tr = run_filter(&model, init_cloud(&cfg.init, 300, seed).unwrap(), seed, &obs, &[]).unwrap();
        for w in tr.states.windows(2) {
            prop_assert!(w[1].z <= w[0].z + 1e-15);
        }
    }

    #[test]
    fn prices_are_consistent(s in 0.05f64..1.5, face in 0.1f64..5.0, r in 0.0f64..1.0, t_mat in 0.1f64..3.0) {
        let law = InitialLaw::Lognormal { m: 0.0, s };
        let cloud = init_cloud(&law, 200, 3).unwrap();
        let h = HittingModel::new(Method::OuClosed { k: 1.0 });
        let sp = survival_price(&cloud, &h, 0.0, t_mat).unwrap();
        prop_assert!((0.0..=1.0).contains(&sp));
        prop_assert!(survival_price(&cloud, &h, 0.0, 2.0 * t_mat).unwrap() <= sp + 1e-12);
        let rv = rebate_value(&cloud, &h, 0.0, &RebateSpec::Constant { value: r }, t_mat).unwrap();
        prop_assert!((rv - r * (1.0 - sp)).abs() < 1e-7);
        let spec = BondSpec { maturity: t_mat, face, rebate: RebateSpec::Constant { value: r } };
        let rep = bond_price(&cloud, &h, 0.0, &spec, false).unwrap();
        prop_assert!((rep.total - (face * sp + rv)).abs() < 1e-12);
        prop_assert!(intensity(&cloud, &h, 1e-2, true).unwrap() >= 0.0);
    }
}

#[test]
fn batches_do_not_depend_on_the_worker_count() {
    let cfg = SimConfig {
        dt: 1e-2,
        n_paths: 64,
        exec: Exec::Parallel,
        ..SimConfig::standard()
    };
    let one = par::with_threads(1, || simulate_batch(&cfg).unwrap());
    let many = par::with_threads(3, || simulate_batch(&cfg).unwrap());
    let seq = simulate_batch(&SimConfig {
        exec: Exec::Sequential,
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(one, many);
    assert_eq!(one, seq);
    assert_eq!(one.summary.to_json(), many.summary.to_json());
}

#[test]
fn drift_kinds_select_the_matching_evaluator() {
    assert!(HittingModel::for_drift(&DriftSpec::Zero, Default::default()).is_closed_form());
    assert!(HittingModel::for_drift(&DriftSpec::ou(2.0), Default::default()).is_closed_form());
    let t = Tabulated::new(vec![0.0, 1.0, 2.0], vec![0.0, -1.0, -2.5]).unwrap();
    assert!(!HittingModel::for_drift(&DriftSpec::tabulated(t), Default::default()).is_closed_form());
}
