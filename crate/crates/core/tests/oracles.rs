//! Reference values computed independently at 30 significant digits.

use approx::assert_relative_eq;

use azema::coeffs::{DriftSpec, InitialLaw};
use azema::filter::{init_cloud, intensity};
use azema::hitting::{
    delta_argmax, delta_constant, ell_bm, ell_bridge_mc, ell_drifted_bm, ell_ou, survival_bm, survival_drifted_bm,
    survival_ou, BridgeMc, HittingModel, Method,
};
use azema::simulate::bridge_hit_prob;

#[test]
fn brownian_first_passage() {
    assert_relative_eq!(
        ell_bm(1.0, 1.0).unwrap(),
        0.241_970_724_519_143_35,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        survival_bm(1.0, 1.0).unwrap(),
        0.682_689_492_137_085_9,
        max_relative = 1e-12
    );
}

#[test]
fn drifted_first_passage() {
    assert_relative_eq!(
        ell_drifted_bm(1.0, 1.0, 1.0).unwrap(),
        0.053_990_966_513_188_05,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        ell_drifted_bm(0.3, 0.5, -0.7).unwrap(),
        1.055_175_206_928_669_3,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        survival_drifted_bm(0.8, 0.6, 0.4).unwrap(),
        0.614_807_574_909_694_7,
        max_relative = 1e-10
    );
}

#[test]
fn drifted_total_mass_is_the_ruin_probability() {
    let h = HittingModel::new(Method::DriftedBmClosed { c: 1.0 });
    assert_relative_eq!(h.total_mass(1.0).unwrap(), (-2.0f64).exp(), max_relative = 1e-9);
    let h = HittingModel::new(Method::DriftedBmClosed { c: -0.5 });
    assert_relative_eq!(h.total_mass(1.0).unwrap(), 1.0, max_relative = 1e-9);
}

#[test]
fn ou_first_passage() {
    assert_relative_eq!(
        ell_ou(0.7, 1.3, 0.8).unwrap(),
        0.563_309_519_425_051_5,
        max_relative = 1e-11
    );
    assert_relative_eq!(
        survival_ou(0.7, 1.3, 0.8).unwrap(),
        0.747_521_237_564_438_9,
        max_relative = 1e-11
    );
    let h = HittingModel::new(Method::OuClosed { k: 0.8 });
    assert_relative_eq!(
        h.density(0.7, 1.3).unwrap(),
        0.563_309_519_425_051_5,
        max_relative = 1e-11
    );
}

#[test]
fn ou_tends_to_brownian_as_reversion_vanishes() {
    let (a, b) = (ell_ou(0.9, 0.7, 1e-7).unwrap(), ell_bm(0.9, 0.7).unwrap());
    assert_relative_eq!(a, b, max_relative = 1e-6);
}

#[test]
fn bridge_monte_carlo_matches_the_ou_closed_form() {
    let mc = BridgeMc {
        n_bridges: 40_000,
        ..BridgeMc::default()
    };
    let est = ell_bridge_mc(&DriftSpec::ou(0.8), 0.7, 1.3, &mc).unwrap();
    let z = (est.mean - 0.563_309_519_425_051_5) / est.stderr;
    assert!(z.abs() < 4.0, "z = {z}, estimate {est:?}");
}

#[test]
fn delta_constant_value() {
    let (x, v) = delta_argmax();
    assert_relative_eq!(x, 5.903_000_058_948_944, max_relative = 1e-6);
    assert_relative_eq!(v, 2.213_029_382_846_263, max_relative = 1e-12);
    assert_eq!(delta_constant(), v);
    assert_relative_eq!(
        azema::hitting::delta_integrand(1.0),
        1.339_114_371_567_521,
        max_relative = 1e-12
    );
}

#[test]
fn bridge_crossing_probability() {
    assert_relative_eq!(
        bridge_hit_prob(0.1, 0.1, 0.02).unwrap(),
        (-1.0f64).exp(),
        max_relative = 1e-14
    );
}

#[test]
fn intensity_of_a_point_mass() {
    let cloud = init_cloud(&InitialLaw::Point { x0: 0.1 }, 100, 1).unwrap();
    let h = HittingModel::new(Method::BmClosed);
    assert_relative_eq!(
        intensity(&cloud, &h, 0.01, false).unwrap(),
        31.731_050_786_291_41,
        max_relative = 1e-8
    );
    assert_relative_eq!(
        intensity(&cloud, &h, 0.01, true).unwrap(),
        31.188_632_033_822_64,
        max_relative = 1e-8
    );
}
