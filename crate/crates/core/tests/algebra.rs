//! Algebraic laws of the additive extended reals.

use proptest::prelude::*;
use qll_core::logic::{ExtReal, Hardness};

const PS: [f64; 5] = [1.0, 2.0, 5.0, 10.0, f64::INFINITY];

fn x(v: f64) -> ExtReal {
    ExtReal::new(v).unwrap()
}

fn close(a: ExtReal, b: ExtReal, rel: f64) -> bool {
    let (a, b) = (a.get(), b.get());
    a == b || (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

fn finite() -> impl Strategy<Value = f64> {
    -50.0f64..50.0
}

fn hardness() -> impl Strategy<Value = Hardness> {
    prop::sample::select(PS.to_vec()).prop_map(|p| Hardness::new(p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn soft_connectives_are_associative_and_commutative(a in finite(), b in finite(), c in finite(), p in hardness()) {
        let (a, b, c) = (x(a), x(b), x(c));
        prop_assert!(close(a.soft_and(b, p), b.soft_and(a, p), 1e-9));
        prop_assert!(close(a.soft_or(b, p), b.soft_or(a, p), 1e-9));
        prop_assert!(close(a.soft_and(b, p).soft_and(c, p), a.soft_and(b.soft_and(c, p), p), 1e-9));
        prop_assert!(close(a.soft_or(b, p).soft_or(c, p), a.soft_or(b.soft_or(c, p), p), 1e-9));
    }

    #[test]
    fn linear_connectives_are_associative_and_commutative(a in finite(), b in finite(), c in finite()) {
        let (a, b, c) = (x(a), x(b), x(c));
        prop_assert!(close(a.lin_and(b), b.lin_and(a), 1e-9));
        prop_assert!(close(a.lin_or(b), b.lin_or(a), 1e-9));
        prop_assert!(close(a.lin_and(b).lin_and(c), a.lin_and(b.lin_and(c)), 1e-9));
        prop_assert!(close(a.lin_or(b).lin_or(c), a.lin_or(b.lin_or(c)), 1e-9));
    }

    #[test]
    fn neutral_elements(a in finite(), p in hardness()) {
        let a = x(a);
        prop_assert!(close(a.soft_or(ExtReal::BOTTOM, p), a, 1e-12));
        prop_assert!(close(a.soft_and(ExtReal::TOP, p), a, 1e-12));
        prop_assert!(close(a.lin_and(ExtReal::ZERO), a, 1e-12));
        prop_assert!(close(a.lin_or(ExtReal::ZERO), a, 1e-12));
    }

    #[test]
    fn linear_distributes_over_soft(v in finite(), a in finite(), b in finite(), p in hardness()) {
        let (v, a, b) = (x(v), x(a), x(b));
        prop_assert!(close(v.lin_and(a.soft_and(b, p)), v.lin_and(a).soft_and(v.lin_and(b), p), 1e-9));
        prop_assert!(close(v.lin_and(a.soft_or(b, p)), v.lin_and(a).soft_or(v.lin_and(b), p), 1e-9));
    }

    #[test]
    fn logical_laws(a in finite(), b in finite(), c in finite(), d in finite(), p in hardness()) {
        let (a, b, c, d) = (x(a), x(b), x(c), x(d));
        let ge = |l: ExtReal, r: ExtReal| l.get() >= r.get() - 1e-9 * (1.0 + r.get().abs());
        // identity
        prop_assert!(ge(ExtReal::ZERO, a.implies(a)));
        // modus ponens
        prop_assert!(ge(a.implies(b).lin_and(b.implies(c)), a.implies(c)));
        // contraposition
        prop_assert!(close(a.implies(b), b.neg().implies(a.neg()), 1e-12));
        // residuation, exact
        prop_assert!(close(a.lin_and(b).implies(c), a.implies(b.implies(c)), 1e-12));
        // mix
        prop_assert!(ge(a.implies(b).lin_and(c.implies(d)), a.lin_and(c).implies(b.lin_and(d))));
        // prelinearity
        prop_assert!(ge(b.implies(a), a.implies(b).neg()));
        // involutivity
        prop_assert_eq!(a.neg().neg(), a);
        // disjunction rules and their conjunctive duals
        prop_assert!(ge(a.implies(c).soft_and(b.implies(c), p), a.soft_or(b, p).implies(c)));
        prop_assert!(ge(c.implies(a).soft_or(c.implies(b), p), c.implies(a.soft_or(b, p))));
        prop_assert!(ge(a.implies(c).soft_or(b.implies(c), p), a.soft_and(b, p).implies(c)));
        prop_assert!(ge(c.implies(a).soft_and(c.implies(b), p), c.implies(a.soft_and(b, p))));
    }

    #[test]
    fn ex_falso(a in finite()) {
        assert_eq!(ExtReal::BOTTOM.implies(x(a)), ExtReal::TOP);
        assert_eq!(x(a).implies(ExtReal::TOP), ExtReal::TOP);
    }

    #[test]
    fn idempotency_defect(a in finite(), p in hardness()) {
        let a = x(a);
        let d = p.idempotency_defect();
        prop_assert!((a.soft_and(a, p).get() - a.get() - d).abs() <= 1e-12 * (1.0 + a.get().abs()));
        prop_assert!((a.soft_or(a, p).get() - a.get() + d).abs() <= 1e-12 * (1.0 + a.get().abs()));
    }

    #[test]
    fn convergence_to_max_and_min(a in finite(), b in finite(), p in hardness()) {
        let (a, b) = (x(a), x(b));
        let d = p.idempotency_defect() + 1e-12;
        prop_assert!((a.soft_and(b, p).get() - a.get().max(b.get())).abs() <= d);
        prop_assert!((a.soft_or(b, p).get() - a.get().min(b.get())).abs() <= d);
    }

    #[test]
    fn soft_connectives_are_strictly_monotone(a in -20.0f64..20.0, d in -2.0f64..2.0, h in 0.01f64..1.0, p in 1.0f64..10.0) {
        // |a - b| p stays small enough for the increment to be representable.
        let b = a + d;
        let p = Hardness::new(p).unwrap();
        prop_assert!(x(a + h).soft_and(x(b), p).get() > x(a).soft_and(x(b), p).get());
        prop_assert!(x(a).soft_or(x(b + h), p).get() > x(a).soft_or(x(b), p).get());
    }
}

#[test]
fn isomix_and_mixed_infinities() {
    assert_eq!(ExtReal::ZERO.neg().get(), 0.0);
    assert_eq!(ExtReal::TOP.lin_and(ExtReal::BOTTOM), ExtReal::BOTTOM);
    assert_eq!(ExtReal::TOP.lin_or(ExtReal::BOTTOM), ExtReal::TOP);
    assert_eq!(ExtReal::TOP.neg(), ExtReal::BOTTOM);
    let p = Hardness::new(5.0).unwrap();
    assert_eq!(ExtReal::BOTTOM.soft_and(x(1.0), p), ExtReal::BOTTOM);
    assert_eq!(ExtReal::TOP.soft_or(x(1.0), p), ExtReal::TOP);
    assert!(ExtReal::new(f64::NAN).is_err());
}
