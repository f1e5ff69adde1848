use std::sync::OnceLock;

use fracstab_core::laplacian::fractional_laplacian;
use fracstab_core::operator::{assemble, DiscreteOperator};
use fracstab_core::solver::{boundary_exponent, monotonicity_check};
use fracstab_core::{FracError, Getoor, GridSpec, Params, RadialFunction};
use nalgebra::{Cholesky, DVector};
use proptest::prelude::*;

fn op() -> &'static DiscreteOperator {
    static OP: OnceLock<DiscreteOperator> = OnceLock::new();
    OP.get_or_init(|| assemble(&Params::new(2, 0.5).unwrap(), &GridSpec::new(40).build().unwrap()).unwrap())
}

#[test]
fn zero_maps_to_zero() {
    let op = op();
    let v = op.apply(&DVector::zeros(op.dim()));
    assert!(v.iter().all(|x| *x == 0.0));
}

#[test]
fn ones_map_to_positive_values() {
    let op = op();
    let v = op.apply(&DVector::from_element(op.dim(), 1.0));
    assert!(v.iter().all(|x| *x > 0.0));
}

#[test]
fn matrix_is_exactly_symmetric_and_positive_definite() {
    let a = op().matrix();
    assert_eq!(a, &a.transpose());
    assert!(Cholesky::new(a.clone()).is_some());
}

#[test]
fn duplicate_nodes_are_rejected() {
    let p = Params::new(2, 0.5).unwrap();
    assert!(matches!(assemble(&p, &[0.0, 0.5, 0.5, 1.0]), Err(FracError::Domain(_))));
}

#[test]
fn getoor_profile_is_nearly_constant() {
    let op = op();
    let p = *op.params();
    let u = Getoor { s: 0.5 };
    let v = op.apply(&op.restrict(&u));
    let inner: Vec<f64> = op.nodes()[..op.dim()]
        .iter()
        .zip(v.iter())
        .filter(|(r, _)| **r <= 0.5)
        .map(|(_, x)| *x)
        .collect();
    let mean = inner.iter().sum::<f64>() / inner.len() as f64;
    let sd = (inner.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / inner.len() as f64).sqrt();
    assert!(sd / mean <= 0.01, "cv {}", sd / mean);
    let oracle = fractional_laplacian(&u, &p, 0.0);
    assert!((v[0] / oracle - 1.0).abs() <= 0.01, "{} vs {oracle}", v[0]);
}

#[test]
fn boundary_exponent_of_model_profiles() {
    let nodes = GridSpec::new(80).build().unwrap();
    for s in [0.25, 0.5, 0.75] {
        let u = RadialFunction::sample(nodes.clone(), |r| (1.0 - r * r).max(0.0).powf(s)).unwrap();
        assert!((boundary_exponent(&u).unwrap() - s).abs() < 1e-3, "{s}");
    }
    let u = RadialFunction::sample(nodes, |r| (1.0 - r * r).max(0.0)).unwrap();
    assert!((boundary_exponent(&u).unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn monotonicity_of_simple_states() {
    let nodes = GridSpec::new(40).build().unwrap();
    assert!(monotonicity_check(&RadialFunction::zeros(nodes.clone()).unwrap()));
    let mut values: Vec<f64> = nodes.iter().map(|r| 1.0 - r).collect();
    values.swap(3, 4);
    assert!(!monotonicity_check(&RadialFunction::new(nodes, values).unwrap()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_positive_and_homogeneous(seed in proptest::collection::vec(-1.0f64..1.0, 8), c in 0.1f64..10.0) {
        let op = op();
        let xi = DVector::from_fn(op.dim(), |i, _| seed[i % seed.len()] + 0.01 * i as f64);
        let e = op.energy(&xi);
        prop_assert!(e > 0.0);
        prop_assert!((op.energy(&(&xi * c)) / (c * c * e) - 1.0).abs() < 1e-12);
    }
}
