//! Boolean semantics agree with the sign of the hard additive semantics.

mod common;

use proptest::prelude::*;
use qll_core::logic::{eval_additive, eval_boolean, Formula, Hardness, Valuation};

#[test]
fn exhaustive_depth_five() {
    let s = common::soundness_sweep(5);
    assert!(s.failures.is_empty(), "{:?}", &s.failures[..s.failures.len().min(5)]);
    assert!(s.evaluations > 10_000);
}

fn formula(depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(Formula::y),
        (0usize..3).prop_map(Formula::yhat),
        (-3i32..=3).prop_map(|r| Formula::lit(r as f64 / 2.0)),
    ];
    leaf.prop_recursive(depth, 64, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::soft_and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::soft_or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::lin_and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::lin_or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            prop::collection::vec(inner.clone(), 1..4).prop_map(Formula::BigSoftAnd),
            prop::collection::vec(inner, 1..4).prop_map(Formula::BigSoftOr),
        ]
    })
}

fn label() -> impl Strategy<Value = f64> {
    prop_oneof![-2.0f64..2.0, Just(f64::INFINITY), Just(f64::NEG_INFINITY), Just(0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn random_formulas_with_infinite_labels(
        phi in formula(5),
        labels in prop::collection::vec(label(), 3),
        outputs in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let v = Valuation::new(labels, outputs).unwrap();
        let b = eval_boolean(&phi, &v).unwrap();
        let a = eval_additive(&phi, &v, Hardness::Infinite).unwrap();
        prop_assert_eq!(b, a.holds(), "{}", phi);
    }
}

