use fracstab_core::regimes::{
    classify, critical_s_gelfand, critical_s_radial, decay_exponent_floor, gelfand_margin, radial_lower,
    radial_upper, Threshold,
};
use fracstab_core::Params;
use proptest::prelude::*;

/// Smaller root of `s² - (n-2)s + (n²/4 - 2n + 2) = 0`, i.e. of
/// `(n/2 - 2 - s)² = 2(s+1)` on the branch `n/2 - 2 - s ≥ 0`.
fn quadratic_root(n: usize) -> f64 {
    let n = n as f64;
    let b = n - 2.0;
    let c = n * n / 4.0 - 2.0 * n + 2.0;
    (b - (b * b - 4.0 * c).sqrt()) / 2.0
}

#[test]
fn radial_thresholds_for_dimensions_seven_to_nine() {
    for (n, want) in [(7, 0.050510), (8, 0.354248), (9, 0.671572)] {
        let got = critical_s_radial(n).unwrap().critical_s().unwrap();
        assert!((got - want).abs() < 1e-5, "n={n}: {got}");
        assert!((got - quadratic_root(n)).abs() < 1e-10, "n={n}: {got} vs {}", quadratic_root(n));
    }
}

#[test]
fn gelfand_threshold_in_dimension_nine() {
    let got = critical_s_gelfand(9).unwrap().critical_s().unwrap();
    assert!((got - 0.63237).abs() < 1e-4, "{got}");
    assert!(gelfand_margin(9, got - 1e-6).unwrap() < 0.0);
    assert!(gelfand_margin(9, got + 1e-6).unwrap() > 0.0);
}

#[test]
fn gelfand_threshold_in_dimension_seven_is_reported_raw() {
    match critical_s_gelfand(7).unwrap() {
        Threshold::AllS => {}
        Threshold::Crossing(s) => {
            assert!(s < 0.7);
            assert!(gelfand_margin(7, s + 1e-6).unwrap() > 0.0);
        }
        Threshold::NoS => panic!("condition should hold for s close to 1 when n = 7"),
    }
}

#[test]
fn dimension_ten_and_above_never_qualify() {
    for n in 10..=20 {
        assert_eq!(critical_s_radial(n).unwrap(), Threshold::NoS);
        for s in [0.1, 0.5, 0.99] {
            assert!(!classify(&Params::new(n, s).unwrap()).unwrap().radial_condition_holds);
        }
    }
}

#[test]
fn borderline_floor_at_the_radial_threshold() {
    // At s = s*(9) the radial inequality is an equality.
    let s = critical_s_radial(9).unwrap().critical_s().unwrap();
    assert!((radial_upper(s) - 9.0).abs() < 1e-7);
    let floor = decay_exponent_floor(&Params::new(9, s).unwrap()).unwrap();
    assert!((floor - (4.5 - s - 1.0 - 8f64.sqrt())).abs() < 1e-15);
    assert_eq!(decay_exponent_floor(&Params::new(2, 0.5).unwrap()).unwrap(), -1.5);
}

#[test]
fn classify_requires_gamma_arguments_away_from_poles() {
    assert!(classify(&Params::new(1, 0.6).unwrap()).is_err());
    assert!(gelfand_margin(1, 0.6).is_err());
}

proptest! {
    #[test]
    fn lower_window_end_is_below_two(s in 1e-6f64..0.999_999) {
        prop_assert!(radial_lower(s) < 2.0);
    }

    #[test]
    fn radial_flag_is_monotone_in_s(n in 2usize..16, s1 in 0.01f64..0.99, s2 in 0.01f64..0.99) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let a = classify(&Params::new(n, lo).unwrap()).unwrap();
        let b = classify(&Params::new(n, hi).unwrap()).unwrap();
        prop_assert!(!a.radial_condition_holds || b.radial_condition_holds);
        prop_assert!(!a.exp_10s_holds || b.exp_10s_holds);
        prop_assert!(!a.convex_4s_holds || b.convex_4s_holds);
    }

    #[test]
    fn mu_floor_matches_formula(n in 2usize..40, s in 0.01f64..0.99) {
        let r = classify(&Params::new(n, s).unwrap()).unwrap();
        let nf = n as f64;
        prop_assert_eq!(r.mu_floor, nf / 2.0 - s - 1.0 - (nf - 1.0).sqrt());
    }
}
