use std::sync::OnceLock;

use fracstab_core::extension::ExtensionField;
use fracstab_core::numerics::ball_volume;
use fracstab_core::operator::{assemble, DiscreteOperator};
use fracstab_core::regimes::decay_exponent_floor;
use fracstab_core::solver::*;
use fracstab_core::stability::*;
use fracstab_core::{FracError, Getoor, GridSpec, Params, RadialFunction, SmoothBump};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn op_2_half() -> &'static DiscreteOperator {
    static OP: OnceLock<DiscreteOperator> = OnceLock::new();
    OP.get_or_init(|| assemble(&Params::new(2, 0.5).unwrap(), &GridSpec::new(40).build().unwrap()).unwrap())
}

fn exp_branch() -> &'static Branch {
    static BR: OnceLock<Branch> = OnceLock::new();
    BR.get_or_init(|| continue_branch(op_2_half(), &Builtin::Exp, &ContinuationControls::default()).unwrap())
}

fn op_3_half() -> &'static DiscreteOperator {
    static OP: OnceLock<DiscreteOperator> = OnceLock::new();
    OP.get_or_init(|| assemble(&Params::new(3, 0.5).unwrap(), &GridSpec::new(40).build().unwrap()).unwrap())
}

fn unit_random(op: &DiscreteOperator, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let xi = DVector::from_fn(op.dim(), |_, _| rng.random_range(-1.0..1.0));
    let norm = op.mass(&xi).sqrt();
    xi / norm
}

#[test]
fn eigenvector_attains_the_principal_eigenvalue() {
    let op = op_2_half();
    for p in &exp_branch().points {
        let (mu, xi) = principal_eigenvector(op, &Builtin::Exp, p).unwrap();
        let q = stability_form(op, &Builtin::Exp, p, &xi).unwrap();
        assert!((q - mu * op.mass(&xi)).abs() < 1e-8 * (1.0 + mu.abs()), "lambda {}: {q} vs {mu}", p.lambda);
    }
}

#[test]
fn form_is_positive_at_lambda_zero() {
    let op = op_2_half();
    let p0 = &exp_branch().points[0];
    assert_eq!(p0.lambda, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let xi = unit_random(op, &mut rng);
        assert!(stability_form(op, &Builtin::Exp, p0, &xi).unwrap() > 0.0);
    }
}

#[test]
fn minimal_branch_is_stable_under_random_probes() {
    let op = op_2_half();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in &exp_branch().points {
        for _ in 0..100 {
            let xi = unit_random(op, &mut rng);
            let q = stability_form(op, &Builtin::Exp, p, &xi).unwrap();
            assert!(q >= -1e-8, "lambda {}: {q}", p.lambda);
            assert!(q >= p.mu1 - 1e-8, "below mu1 at lambda {}", p.lambda);
        }
    }
}

#[test]
fn form_rejects_wrong_dimension() {
    let op = op_2_half();
    let xi = DVector::from_element(op.dim() + 1, 1.0);
    assert!(matches!(
        stability_form(op, &Builtin::Exp, &exp_branch().points[0], &xi),
        Err(FracError::Domain(_))
    ));
}

fn getoor_3() -> (Params, Getoor) {
    (Params::new(3, 0.5).unwrap(), Getoor { s: 0.5 })
}

#[test]
fn weighted_dirichlet_of_zero_is_zero() {
    let p = Params::new(3, 0.5).unwrap();
    let u = RadialFunction::zeros(vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
    let ext = ExtensionField::new(u.clone(), p);
    let r = weighted_dirichlet(&WeightedDirichletQuery::new(u, 1.0), &ext).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.converged);
}

#[test]
fn weighted_dirichlet_of_getoor_converges() {
    let (p, g) = getoor_3();
    let ext = ExtensionField::new(g, p);
    let r = weighted_dirichlet(&WeightedDirichletQuery::new(g, 1.0), &ext).unwrap();
    assert!(r.converged, "{r:?}");
    assert!(r.relative_change() <= 0.01);
    // Reference from a higher-order tensor rule on the same lattice.
    assert!((r.value - 0.239175645).abs() < 1e-5 * 0.239175645, "{}", r.value);
}

#[test]
fn weighted_dirichlet_is_monotone_in_the_truncation() {
    let (p, g) = getoor_3();
    let ext = ExtensionField::new(g, p);
    let at = |rho_min: f64, y_max: f64| {
        let q = WeightedDirichletQuery {
            state: g,
            alpha: 1.5,
            rho_min,
            y_max,
        };
        weighted_dirichlet_truncated(&q, &ext).unwrap()
    };
    let base = at(0.05, 2.0);
    let wider = at(0.025, 2.0);
    let taller = at(0.05, 4.0);
    assert!(base > 0.0);
    assert!(wider >= base, "{wider} < {base}");
    assert!(taller >= base, "{taller} < {base}");
}

#[test]
fn weighted_dirichlet_rejects_alpha_outside_range() {
    let (p, g) = getoor_3();
    let ext = ExtensionField::new(g, p);
    for alpha in [0.99, 1.0 + 2f64.sqrt(), 3.0] {
        let q = WeightedDirichletQuery::new(g, alpha);
        assert!(matches!(weighted_dirichlet(&q, &ext), Err(FracError::Domain(_))), "{alpha}");
    }
}

#[test]
fn weighted_dirichlet_rejects_a_foreign_field() {
    let p = Params::new(3, 0.5).unwrap();
    let q = WeightedDirichletQuery::new(SmoothBump::default(), 1.0);
    let field = ExtensionField::new(SmoothBump { radius: 0.5 }, p);
    assert!(matches!(weighted_dirichlet(&q, &field), Err(FracError::Domain(_))));
}

#[test]
fn weighted_dirichlet_ratio_to_seminorm_is_bounded() {
    let op = op_3_half();
    let p = *op.params();
    let states = [
        op.extend_by_zero(&op.restrict(&Getoor { s: 0.5 })).unwrap(),
        op.extend_by_zero(&op.restrict(&SmoothBump::default())).unwrap(),
    ];
    for u in states {
        let seminorm = op.energy(&op.interior(&u).unwrap());
        let ext = ExtensionField::new(u.clone(), p);
        let r = weighted_dirichlet(&WeightedDirichletQuery::new(u, 1.0), &ext).unwrap();
        assert!(r.converged);
        let ratio = r.value / seminorm;
        assert!(ratio.is_finite() && ratio > 1e-3 && ratio < 1e3, "ratio {ratio}");
    }
}

#[test]
fn lp_sweep_trivial_entry_and_bounds() {
    let p = *op_2_half().params();
    let sweep = lp_sweep(exp_branch(), &p, 1.5).unwrap();
    assert_eq!(sweep.exponent, 4.0);
    let first = sweep.entries[0];
    assert_eq!(first.lambda, 0.0);
    assert!((first.norm - ball_volume(2).powf(0.25)).abs() < 1e-12);
    assert!(sweep.entries.iter().all(|e| e.norm.is_finite()));
    assert!(sweep.monotone);
    assert!(sweep.sup >= sweep.entries.last().unwrap().norm);
    let json = serde_json::to_string(&sweep).unwrap();
    assert_eq!(serde_json::from_str::<LpSweep>(&json).unwrap(), sweep);
}

#[test]
fn lp_sweep_rejects_alpha_outside_range() {
    let p = *op_2_half().params();
    for alpha in [2.0, 2.5, 0.0, -1.0] {
        assert!(matches!(lp_sweep(exp_branch(), &p, alpha), Err(FracError::Domain(_))));
    }
}

#[test]
fn lp_sweep_is_stable_under_refinement() {
    let p = *op_2_half().params();
    let fine = assemble(&p, &GridSpec::new(80).build().unwrap()).unwrap();
    let fine_branch = continue_branch(&fine, &Builtin::Exp, &ContinuationControls::default()).unwrap();
    let star = fine_branch.lambda_star.unwrap();
    let sweep = lp_sweep(exp_branch(), &p, 1.5).unwrap();
    for e in &sweep.entries {
        let u = if e.lambda < star {
            let init = fine_branch.points.iter().rfind(|pt| pt.lambda <= e.lambda).unwrap();
            newton_solve(&fine, &Builtin::Exp, e.lambda, &init.state).unwrap()
        } else {
            fine_branch.points.last().unwrap().state.clone()
        };
        let other = exp_lp_norm(&u, 2, 4.0);
        assert!((other / e.norm - 1.0).abs() <= 0.01, "lambda {}: {} vs {other}", e.lambda, e.norm);
    }
}

#[test]
fn decay_of_zero_state_holds_with_zero_constant() {
    let p = Params::new(10, 0.1).unwrap();
    let u = RadialFunction::zeros(GridSpec::new(40).build().unwrap()).unwrap();
    let r = decay_profile_check(&u, &p, 1.0).unwrap();
    assert_eq!(r.constant, 0.0);
    assert!(r.holds);
}

#[test]
fn decay_check_domain_errors() {
    let u = RadialFunction::zeros(GridSpec::new(40).build().unwrap()).unwrap();
    let p = Params::new(10, 0.1).unwrap();
    let floor = decay_exponent_floor(&p).unwrap();
    assert!(matches!(decay_profile_check(&u, &p, floor), Err(FracError::Domain(_))));
    let bounded = Params::new(3, 0.5).unwrap();
    assert!(matches!(decay_profile_check(&u, &bounded, 5.0), Err(FracError::Domain(_))));
}

#[test]
fn decay_of_near_extremal_state_in_high_dimension() {
    let p = Params::new(10, 0.1).unwrap();
    let op = assemble(&p, &GridSpec::new(40).build().unwrap()).unwrap();
    let branch = continue_branch(&op, &Builtin::Exp, &ContinuationControls::default()).unwrap();
    let state = &branch.points.iter().rfind(|pt| pt.mu1 >= 0.0).unwrap().state;
    let floor = decay_exponent_floor(&p).unwrap();
    for mu in [floor + 0.1, 0.9 * (5.0 - 0.1 - 1.0)] {
        let r = decay_profile_check(state, &p, mu).unwrap();
        assert!(r.holds && r.constant.is_finite() && r.constant > 0.0, "{mu}: {r:?}");
        let doubled = decay_profile_check(&state.scaled(2.0), &p, mu).unwrap();
        assert!((doubled.constant - 2.0 * r.constant).abs() <= 1e-14 * r.constant);
        assert!((doubled.worst_slack - r.worst_slack).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn form_is_bounded_below_by_mu1(seed in 0u64..1_000_000, k in 0usize..10) {
        let op = op_2_half();
        let points = &exp_branch().points;
        let p = &points[k % points.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = unit_random(op, &mut rng);
        let q = stability_form(op, &Builtin::Exp, p, &xi).unwrap();
        prop_assert!(q >= p.mu1 - 1e-8);
    }

    #[test]
    fn lp_norms_follow_holder(a_low in 0.05f64..1.0, gap in 0.05f64..0.95) {
        let a_high = a_low + gap;
        let p = *op_2_half().params();
        let low = lp_sweep(exp_branch(), &p, a_low).unwrap();
        let high = lp_sweep(exp_branch(), &p, a_high).unwrap();
        let theta = holder_factor(2, low.exponent, high.exponent);
        for (l, h) in low.entries.iter().zip(&high.entries) {
            prop_assert!(l.norm <= theta * h.norm * (1.0 + 1e-12));
        }
    }
}
