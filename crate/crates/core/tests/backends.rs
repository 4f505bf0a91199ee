//! Conformance of the backends against a golden table.
//!
//! Reference values not given in closed form come from
//! `oracles/golden.py` (mpmath, 50 digits).

mod common;

use common::{golden_table, lits};
use proptest::prelude::*;
use qll_core::autodiff::Plain;
use qll_core::backends::{backend_eval, stl_nary, t_conorm, t_norm, Backend, Logic, StlKind};
use qll_core::logic::{eval_additive, to_nnf, Formula, Hardness, Valuation};

#[test]
fn golden_cases() {
    let table = golden_table();
    assert_eq!(table.len(), 20);
    for g in table {
        assert!((g.got - g.want).abs() <= 1e-12 * (1.0 + g.want.abs()), "{}: {} vs {}", g.name, g.got, g.want);
    }
}

#[test]
fn more_high_precision_values() {
    let cases = [
        (stl_nary(StlKind::Disj, &[1.0, 2.0], 5.0).unwrap(), 1.0066928509242849),
        (stl_nary(StlKind::Conj, &[-1.0, -3.0, 0.5], 2.0).unwrap(), 0.49882482736738947),
        (lits("qll:p=2", Formula::soft_or(Formula::lit(1.5), Formula::lit(-0.5))), -0.50907496395890487),
        (lits("qll:p=1", Formula::soft_and(Formula::lit(0.0), Formula::lit(0.0))), std::f64::consts::LN_2),
    ];
    for (got, want) in cases {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn stl_is_not_associative() {
    let flat = stl_nary(StlKind::Conj, &[1.0, 2.0, 3.0], 5.0).unwrap();
    let nested = stl_nary(StlKind::Conj, &[stl_nary(StlKind::Conj, &[1.0, 2.0], 5.0).unwrap(), 3.0], 5.0).unwrap();
    assert!((flat - 2.8263067311923713).abs() < 1e-12);
    assert!((nested - 2.8696390839920341).abs() < 1e-12);
    assert!((flat - nested).abs() > 1e-2);
}

#[test]
fn gödel_connectives_are_min_and_max() {
    for a in [0.0, 0.2, 0.5, 1.0] {
        for b in [0.0, 0.3, 0.9, 1.0] {
            assert_eq!(t_norm(&mut Plain, Logic::Godel, a, b), a.min(b));
            assert_eq!(t_conorm(&mut Plain, Logic::Godel, a, b), a.max(b));
        }
    }
}

/// Classical truth of an NNF formula with DL2's atoms: connective-free
/// subformulas hold when their hard additive value is ≤ 0.
fn dl2_reference(phi: &Formula, v: &Valuation) -> bool {
    if phi.is_connective_free() {
        return eval_additive(phi, v, Hardness::Infinite).unwrap().holds();
    }
    match phi {
        Formula::SoftAnd(a, b) | Formula::LinAnd(a, b) => dl2_reference(a, v) && dl2_reference(b, v),
        Formula::SoftOr(a, b) | Formula::LinOr(a, b) => dl2_reference(a, v) || dl2_reference(b, v),
        Formula::BigSoftAnd(xs) => xs.iter().all(|x| dl2_reference(x, v)),
        Formula::BigSoftOr(xs) => xs.iter().any(|x| dl2_reference(x, v)),
        Formula::Implies(a, b) => {
            dl2_reference(&to_nnf(&Formula::not((**a).clone())), v) || dl2_reference(&to_nnf(b), v)
        }
        Formula::Not(a) => dl2_reference(&to_nnf(&Formula::not((**a).clone())), v),
        _ => unreachable!(),
    }
}

fn dl2_check(phi: &Formula, v: &Valuation) -> Result<(), String> {
    let d = backend_eval(&Backend::of(Logic::Dl2).unwrap(), phi, v).unwrap();
    let want = dl2_reference(&to_nnf(phi), v);
    if d < 0.0 || (d == 0.0) != want {
        return Err(format!("{phi}: dl2 {d}, reference {want}"));
    }
    Ok(())
}

#[test]
fn dl2_zero_iff_satisfied_exhaustive_depth_two() {
    let atoms = [Formula::y(0), Formula::y(1), Formula::lit(0.0)];
    let unary = |a: &Formula| vec![Formula::not(a.clone())];
    let binary = |a: &Formula, b: &Formula| {
        vec![
            Formula::soft_and(a.clone(), b.clone()),
            Formula::soft_or(a.clone(), b.clone()),
            Formula::lin_and(a.clone(), b.clone()),
            Formula::lin_or(a.clone(), b.clone()),
            Formula::implies(a.clone(), b.clone()),
        ]
    };
    let mut all: Vec<Formula> = atoms.to_vec();
    for _ in 0..2 {
        let cur = all.clone();
        let mut next = cur.clone();
        for a in &cur {
            next.extend(unary(a));
            for b in &cur {
                next.extend(binary(a, b));
            }
        }
        all = next;
    }
    let mut checked = 0;
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            let v = Valuation::from_outputs(vec![a, b]).unwrap();
            for phi in &all {
                dl2_check(phi, &v).unwrap();
                checked += 1;
            }
        }
    }
    assert!(checked > 100_000);
}

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![(0usize..3).prop_map(Formula::y), (-2i32..=2).prop_map(|r| Formula::lit(r as f64 / 2.0))];
    leaf.prop_recursive(3, 32, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::soft_and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::lin_or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            prop::collection::vec(inner, 1..4).prop_map(Formula::BigSoftOr),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn dl2_zero_iff_satisfied_random(phi in formula(), ys in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 3)) {
        let v = Valuation::from_outputs(ys).unwrap();
        prop_assert!(dl2_check(&phi, &v).is_ok(), "{:?}", dl2_check(&phi, &v));
    }

    #[test]
    fn fuzzy_values_lie_in_unit_interval(phi in formula(), ys in prop::collection::vec(-3.0f64..3.0, 3), which in 0usize..4) {
        let b: Backend = ["godel", "lukasiewicz", "product", "yager:r=2"][which].parse().unwrap();
        let v = Valuation::from_outputs(ys).unwrap();
        let t = backend_eval(&b, &phi, &v).unwrap();
        prop_assert!((0.0..=1.0).contains(&t), "{} {}", phi, t);
    }

    #[test]
    fn qll_backend_matches_additive_semantics(phi in formula(), ys in prop::collection::vec(-3.0f64..3.0, 3), p in prop::sample::select(vec![1.0, 5.0, f64::INFINITY])) {
        let v = Valuation::from_outputs(ys).unwrap();
        let b = Backend::qll(p).unwrap();
        let want = eval_additive(&phi, &v, Hardness::new(p).unwrap()).unwrap().get();
        prop_assert_eq!(backend_eval(&b, &phi, &v).unwrap().to_bits(), want.to_bits());
    }

    #[test]
    fn stl_is_permutation_invariant(mut xs in prop::collection::vec(-5.0f64..5.0, 2..6), nu in 0.5f64..10.0, k in 0usize..100, conj in any::<bool>()) {
        let kind = if conj { StlKind::Conj } else { StlKind::Disj };
        let a = stl_nary(kind, &xs, nu).unwrap();
        let n = xs.len();
        xs.rotate_left(k % n);
        xs.reverse();
        let b = stl_nary(kind, &xs, nu).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn closed_formulas_are_deterministic(phi in formula(), which in 0usize..7) {
        let b: Backend = ["qll:p=5", "dl2", "stl:nu=5", "godel", "lukasiewicz", "product", "yager:r=2"][which].parse().unwrap();
        let v = Valuation::from_outputs(vec![0.0, 0.0, 0.0]).unwrap();
        let x = backend_eval(&b, &phi, &v).unwrap();
        prop_assert_eq!(x.to_bits(), backend_eval(&b, &phi, &v).unwrap().to_bits());
    }
}
