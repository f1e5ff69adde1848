use fracstab_core::flux::*;
use fracstab_core::profile::Scaled;
use fracstab_core::{FracError, Params, SmoothBump};
use proptest::prelude::*;

/// Independent closed form for `β < n`: writing `Γ_{n,s} y^{a+2} D^{-ν}` as
/// `y` times the Poisson kernel of order `1-s`, taking Fourier transforms in
/// `x` and using `∫ t^{λ-1} K_μ K_ν dt` reduces the constant to
/// `2(1-s) / (n + 2 - 2s - β)`.
fn closed_form(n: usize, s: f64, beta: f64) -> f64 {
    2.0 * (1.0 - s) / (n as f64 + 2.0 - 2.0 * s - beta)
}

fn query(n: usize, s: f64, beta: f64) -> FluxConstantQuery {
    FluxConstantQuery::new(Params::new(n, s).unwrap(), beta).unwrap()
}

#[test]
fn quadrature_matches_closed_form() {
    for (n, s) in [(2, 0.5), (3, 0.25), (5, 0.7), (10, 0.1), (2, 0.9)] {
        let p = Params::new(n, s).unwrap();
        for beta in beta_grid(&p) {
            let got = magic_constant_estimate(&query(n, s, beta)).unwrap();
            let want = closed_form(n, s, beta);
            assert!((got.value - want).abs() <= 1e-6 * want, "n={n} s={s} beta={beta}: {} vs {want}", got.value);
            assert!(got.error <= 1e-4 * got.value);
        }
    }
}

#[test]
fn monte_carlo_oracle_agrees() {
    for (n, s, beta) in [(2, 0.5, 1.0), (3, 0.25, 2.0)] {
        let q = query(n, s, beta);
        let a = magic_constant(&q).unwrap();
        let mc = magic_constant_mc(&q, 10_000_000, 42).unwrap();
        let tol = (0.01 * a).max(3.0 * mc.std_error);
        assert!((mc.mean - a).abs() <= tol, "n={n}: quad {a} mc {:?}", mc);
        assert!(a > 0.0 && a < 1.0);
    }
}

#[test]
fn constant_reaches_one_at_beta_equal_n() {
    // The integral stays finite for n <= β < n + 2 - 2s, where the value is
    // at least one.
    let a = magic_constant(&query(2, 0.1, 2.0)).unwrap();
    assert!((a - 1.0).abs() < 1e-6, "{a}");
    let q = query(2, 0.1, 2.85);
    let a = magic_constant(&q).unwrap();
    let mc = magic_constant_mc(&q, 1 << 22, 7).unwrap();
    assert!(a > 1.0);
    assert!((mc.mean - a).abs() <= (0.01 * a).max(3.0 * mc.std_error));
}

#[test]
fn monte_carlo_is_reproducible_across_thread_counts() {
    let q = query(3, 0.4, 1.5);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| magic_constant_mc(&q, 200_000, 1234).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_ne!(a, magic_constant_mc(&q, 200_000, 1235).unwrap());
}

#[test]
fn beta_outside_admissible_range_is_a_domain_error() {
    let p = Params::new(2, 0.5).unwrap();
    for beta in [0.0, -1.0, 3.0, 4.0, f64::NAN] {
        assert!(matches!(FluxConstantQuery::new(p, beta), Err(FracError::Domain(_))));
    }
    let bad = FluxConstantQuery { params: p, beta: 3.5 };
    assert!(magic_constant(&bad).is_err());
    assert!(magic_constant_mc(&bad, 100, 1).is_err());
    assert!(matches!(ibp_residual(&SmoothBump::default(), &p, 2.0), Err(FracError::Domain(_))));
}

#[test]
fn integration_by_parts_identity_on_bump() {
    let p = Params::new(2, 0.5).unwrap();
    let w = SmoothBump::default();
    let m = flux_moments(&w, &p, 1.0).unwrap();
    assert!(m.ibp_residual() <= 1e-3, "{m:?}");
    assert!(m.horizontal > 0.0);
    let a = magic_constant(&query(2, 0.5, 1.0)).unwrap();
    let (lhs, rhs) = (m.vertical, a * m.trace);
    assert!((lhs - rhs).abs() <= 1e-3 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
}

#[test]
fn flux_check_returns_both_sides() {
    let p = Params::new(3, 0.25).unwrap();
    let (lhs, rhs) = flux_moment_check(&SmoothBump::default(), &p, 1.5).unwrap();
    assert!((lhs - rhs).abs() <= 1e-3 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
}

#[test]
fn zero_profile_gives_zero_moments() {
    let p = Params::new(2, 0.5).unwrap();
    let zero = Scaled {
        inner: SmoothBump::default(),
        factor: 0.0,
    };
    assert_eq!(ibp_residual(&zero, &p, 1.0).unwrap(), 0.0);
    assert_eq!(flux_moment_check(&zero, &p, 1.0).unwrap(), (0.0, 0.0));
}

#[test]
fn moments_are_homogeneous() {
    let p = Params::new(2, 0.5).unwrap();
    let w = SmoothBump { radius: 0.7 };
    let one = flux_moments_with_order(&w, &p, 1.2, 4).unwrap();
    let two = flux_moments_with_order(&Scaled { inner: w, factor: 2.0 }, &p, 1.2, 4).unwrap();
    for (a, b) in [(one.horizontal, two.horizontal), (one.vertical, two.vertical), (one.trace, two.trace)] {
        assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs());
    }
    assert!((one.ibp_residual() - two.ibp_residual()).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constant_lies_in_unit_interval_below_n(n in 2usize..8, s in 0.05f64..0.95, frac in 0.02f64..0.98) {
        let beta = frac * n as f64;
        let a = magic_constant(&query(n, s, beta)).unwrap();
        prop_assert!(a > 0.0 && a < 1.0);
    }
}
