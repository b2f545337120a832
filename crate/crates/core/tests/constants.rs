use sojourn_core::analytic::{expected_occupation, pickands_lower_bound_new};
use sojourn_core::constants::*;
use sojourn_core::paths::Sided;
use sojourn_core::stats::{McConfig, McEstimate};

fn mc(n: u64, seed: u64) -> McConfig {
    McConfig::new(n, seed)
}

fn within(a: &McEstimate, b: &McEstimate, sigmas: f64) -> bool {
    (a.mean - b.mean).abs() <= sigmas * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

fn raw(e: &ConstantEstimate) -> f64 {
    e.diagnostics.raw.unwrap().mean
}

fn fine(e: &ConstantEstimate) -> f64 {
    e.diagnostics.fine.unwrap().mean
}

#[test]
fn sup_over_tiny_window_is_one() {
    // at α=1 the limit is approached only like 1 + 2√(S/π)
    let e = estimate_pickands_sup(2.0, 0.01, 0.005, &mc(20_000, 1)).unwrap();
    assert!((e.mean() - 1.0).abs() < 0.01, "{}", e.mean());
    let e = estimate_pickands_sup(1.0, 0.01, 0.005, &mc(20_000, 1)).unwrap();
    let expected = 1.0 + 2.0 * (0.01 / std::f64::consts::PI).sqrt();
    assert!((e.mean() - expected).abs() < 0.02, "{}", e.mean());
}

#[test]
fn sup_subadditive_in_window() {
    let alpha = 1.5;
    let unit = estimate_pickands_sup(alpha, 1.0, 0.01, &mc(20_000, 2)).unwrap().value;
    let wide = estimate_pickands_sup(alpha, 2.5, 0.01, &mc(20_000, 3)).unwrap().value;
    let bound = unit.scaled(3.0);
    assert!(wide.mean <= bound.mean + 3.0 * (wide.stderr.powi(2) + bound.stderr.powi(2)).sqrt());
}

#[test]
fn sup_normalized_non_increasing_in_window() {
    let a = estimate_pickands_sup(2.0, 5.0, 0.01, &mc(20_000, 4)).unwrap();
    let b = estimate_pickands_sup(2.0, 10.0, 0.01, &mc(20_000, 5)).unwrap();
    let (na, nb) = (a.diagnostics.normalized.unwrap(), b.diagnostics.normalized.unwrap());
    assert!(nb.mean <= na.mean + 3.0 * (na.stderr.powi(2) + nb.stderr.powi(2)).sqrt());
}

#[test]
fn berman_at_zero_matches_sup_form() {
    let spec = BermanSpec::new(1.5, 1.0, 0.0, 5.0, 0.0);
    let b = estimate_berman_b(&spec, &mc(20_000, 6)).unwrap().value;
    let s = estimate_pickands_sup(1.5, 5.0, DEFAULT_STEP, &mc(20_000, 7)).unwrap().value;
    assert!(within(&b, &s, 3.0), "{} ± {} vs {} ± {}", b.mean, b.stderr, s.mean, s.stderr);
}

#[test]
fn estimators_non_increasing_in_x_on_each_grid() {
    let seed = 9;
    let xs = [0.0, 0.5, 1.0, 2.0];
    let berman: Vec<_> = xs
        .iter()
        .map(|&x| estimate_berman_b(&BermanSpec::new(1.0, 1.0, 0.0, 4.0, x), &mc(5_000, seed)).unwrap())
        .collect();
    let pit: Vec<_> = xs
        .iter()
        .map(|&x| estimate_piterbarg(1.0, 1.0, 0.0, 4.0, x, 0.01, Sided::Symmetric, &mc(5_000, seed)).unwrap())
        .collect();
    let btilde: Vec<_> = xs
        .iter()
        .map(|&x| estimate_btilde(1.0, x, 4.0, 0.01, &mc(5_000, seed)).unwrap())
        .collect();
    for family in [&berman, &pit, &btilde] {
        for w in family.windows(2) {
            assert!(raw(&w[1]) <= raw(&w[0]));
            assert!(fine(&w[1]) <= fine(&w[0]));
        }
        assert!(family.iter().all(|e| e.mean() > 0.0));
    }
}

#[test]
fn lattice_estimators_non_increasing_in_x() {
    let xs = [0.0, 0.3, 0.7, 1.5];
    let values: Vec<f64> = xs
        .iter()
        .map(|&x| estimate_berman_b(&BermanSpec::new(1.0, 1.0, 0.2, 4.0, x), &mc(5_000, 10)).unwrap().mean())
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
}

#[test]
fn refinement_never_lowers_value_at_zero() {
    let b = estimate_berman_b(&BermanSpec::new(1.0, 1.0, 0.0, 4.0, 0.0), &mc(5_000, 11)).unwrap();
    assert!(fine(&b) >= raw(&b));
    let p = estimate_piterbarg(1.5, 1.0, 0.0, 4.0, 0.0, 0.02, Sided::Symmetric, &mc(5_000, 12)).unwrap();
    assert!(fine(&p) >= raw(&p));
    assert!(p.diagnostics.richardson_exponent.is_some());
}

#[test]
fn jensen_occupation_times_inverse() {
    let alpha = 1.5;
    let h = estimate_pickands_berman(alpha, 5.0, 0.01, &mc(20_000, 13)).unwrap().value;
    let m = estimate_occupation_mean(alpha, 5.0, 0.01, &mc(20_000, 14)).unwrap().value;
    let product = h.mean * m.mean;
    let rel = ((h.stderr / h.mean).powi(2) + (m.stderr / m.mean).powi(2)).sqrt();
    assert!(product >= 1.0 - 3.0 * rel * product, "{product}");
}

#[test]
fn lower_bound_cleared_at_moderate_scale() {
    for alpha in [1.5, 2.0] {
        let e = estimate_pickands_berman(alpha, 5.0, 0.01, &mc(10_000, 15)).unwrap();
        assert!(e.mean() + 3.0 * e.stderr() >= 0.98 * pickands_lower_bound_new(alpha).unwrap());
    }
}

#[test]
fn g_cdf_properties() {
    let alpha = 1.5;
    let g = |x: f64| estimate_g_cdf(alpha, 5.0, 0.01, &mc(5_000, 16), x).unwrap().value;
    let (g0, g1, g2) = (g(0.0), g(1.0), g(2.0));
    assert_eq!(g0.mean, 0.0);
    assert!(g0.ci_low <= 0.0);
    assert!(g1.mean <= g2.mean);
    let far = g(10.0 * expected_occupation(alpha).unwrap());
    assert!(far.mean >= 0.99, "{}", far.mean);
}

#[test]
fn btilde_at_zero_matches_berman_form() {
    let h = estimate_pickands_berman(1.5, 5.0, 0.01, &mc(20_000, 17)).unwrap().value;
    let b = estimate_btilde(1.5, 0.0, 5.0, 0.01, &mc(20_000, 18)).unwrap().value;
    assert!(within(&h, &b, 3.0));
}

#[test]
fn btilde_mixture_single_term_is_btilde() {
    let b = estimate_btilde(1.5, 0.5, 4.0, 0.01, &mc(5_000, 19)).unwrap();
    let m = estimate_btilde_mixture(1.5, &[(1.0, 0.5)], 4.0, 0.01, &mc(5_000, 19)).unwrap();
    assert!((b.mean() - m.mean()).abs() <= 1e-12 * b.mean());
}

#[test]
fn rate_keeps_windows_and_decreases_in_x() {
    let r0 = estimate_berman_rate(1.5, 0.0, 0.0, &[2.0, 4.0], 0.01, &mc(20_000, 20)).unwrap();
    let r1 = estimate_berman_rate(1.5, 0.0, 1.0, &[2.0, 4.0], 0.01, &mc(20_000, 21)).unwrap();
    assert_eq!(r0.diagnostics.per_window.len(), 2);
    assert!(r1.mean() <= r0.mean() + 3.0 * (r0.stderr().powi(2) + r1.stderr().powi(2)).sqrt());
    assert!(estimate_berman_rate(1.5, 0.0, 0.0, &[4.0, 2.0], 0.01, &mc(1_000, 1)).is_err());
}

#[test]
fn scaling_identity_moderate_scale() {
    let alpha = 1.5;
    let d = 2f64.powf(1.0 / alpha);
    let a = estimate_berman_b(&BermanSpec::new(alpha, 2.0, 0.0, 4.0, 0.5), &mc(20_000, 22)).unwrap().value;
    let b = estimate_berman_b(&BermanSpec::new(alpha, 1.0, 0.0, 4.0 * d, 0.5 * d), &mc(20_000, 23)).unwrap().value;
    assert!(within(&a, &b, 3.0));
}

fn ls(h: HFunction, horizon: f64, x: f64) -> LocallyStationarySpec {
    LocallyStationarySpec {
        alpha: 1.5,
        eta: 0.0,
        x,
        h,
        horizon,
        span: 4.0,
        step: 0.01,
        nodes: MIN_QUADRATURE_NODES,
    }
}

#[test]
fn locally_stationary_constant_h() {
    let one = estimate_berman_locally_stationary(&ls(HFunction::constant(1.0), 1.0, 0.5), &mc(10_000, 24))
        .unwrap()
        .value;
    let direct = estimate_berman_b(&BermanSpec::new(1.5, 1.0, 0.0, 4.0, 0.5), &mc(10_000, 25))
        .unwrap()
        .value
        .scaled(1.0 / 4.0);
    assert!(within(&one, &direct, 3.0));

    let doubled = estimate_berman_locally_stationary(&ls(HFunction::constant(1.0), 2.0, 0.5), &mc(10_000, 24))
        .unwrap()
        .value;
    assert!((doubled.mean - 2.0 * one.mean).abs() <= 1e-9 * one.mean);
}

#[test]
fn locally_stationary_constant_h_shares_berman_paths() {
    // constant H = λ runs the λ-dilated Berman estimator on the same paths
    for h in [1.0, 2.0] {
        let ls_value = estimate_berman_locally_stationary(&ls(HFunction::constant(h), 1.0, 0.0), &mc(5_000, 26))
            .unwrap()
            .mean();
        let direct = estimate_berman_b(&BermanSpec::new(1.5, h, 0.0, 4.0, 0.0), &mc(5_000, 26)).unwrap().mean() / 4.0;
        assert!((ls_value - direct).abs() <= 1e-12 * direct, "H={h}: {ls_value} vs {direct}");
    }
}

#[test]
fn piterbarg_window_stable() {
    let a = estimate_piterbarg(1.0, 1.0, 0.0, 8.0, 0.0, 0.01, Sided::Symmetric, &mc(10_000, 28)).unwrap().value;
    let b = estimate_piterbarg(1.0, 1.0, 0.0, 16.0, 0.0, 0.01, Sided::Symmetric, &mc(10_000, 29)).unwrap().value;
    assert!(within(&a, &b, 3.0));
}

#[test]
fn piterbarg_one_sided_closed_form() {
    // α=1, one side: 1 + 1/b
    let e = estimate_piterbarg(1.0, 1.0, 0.0, 8.0, 0.0, 0.01, Sided::OneSided, &mc(20_000, 30)).unwrap().value;
    assert!((e.mean - 2.0).abs() <= 4.0 * e.stderr + 0.02, "{} ± {}", e.mean, e.stderr);
}

#[test]
fn tilt_matches_closed_form() {
    let e = estimate_tilt(1.0, &mc(100_000, 31)).unwrap().value;
    let target = sojourn_core::analytic::tilt_rhs(1.0).unwrap();
    assert!((e.mean - target).abs() <= 4.0 * e.stderr);
}

#[test]
fn domain_errors() {
    let m = mc(2_000, 1);
    assert!(estimate_pickands_berman(2.5, 5.0, 0.01, &m).is_err());
    assert!(estimate_pickands_berman(1.0, 5.0, 0.1, &m).is_err());
    assert!(estimate_pickands_berman(1.0, 5.0, 0.01, &mc(10, 1)).is_err());
    assert!(estimate_piterbarg(1.0, -1.0, 0.0, 8.0, 0.0, 0.01, Sided::Symmetric, &m).is_err());
    assert!(estimate_g_cdf(1.0, 5.0, 0.01, &m, -1.0).is_err());
}
