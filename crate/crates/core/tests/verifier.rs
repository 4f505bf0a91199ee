//! Verifier soundness and the three constraint metrics on analytic cases.

mod common;

use qll_core::backends::Backend;
use qll_core::constraints::{formula_satisfied, ConstraintSpec, Target};
use qll_core::data::Dataset;
use qll_core::logic::Formula;
use qll_core::models::{forward, init_network, Network};
use qll_core::training::{InputBox, PgdConfig};
use qll_core::verify::{c_acc, c_sat, c_sec, decide_box, decide_formula, formula_bounds, Verdict, VerifyConfig};

/// `y = 2x - 1`, nonnegative exactly on `x >= 0.5`.
fn line() -> Network {
    Network::new(vec![1, 1], vec![2.0, -1.0]).unwrap()
}

/// "y_0 >= 0": SCR with delta 0, `y_0 ⊸ 0`.
fn y_nonnegative() -> ConstraintSpec {
    ConstraintSpec::StrongClassificationRobustness { delta: 0.0 }
}

fn one_point(x: f64) -> Dataset {
    Dataset::new(vec![vec![x]], vec![Target::Class(0)], 1, vec![0.0], vec![1.0]).unwrap()
}

#[test]
fn random_networks_against_grid_oracle() {
    let audit = common::audit_verifier(100, 1e-3, 7);
    assert!(audit.unsound.is_empty(), "{:?}", audit.unsound);
    assert_eq!(audit.verified + audit.falsified + audit.unknown, audit.cases);
    assert!(audit.verified > 10 && audit.falsified > 10, "{} verified, {} falsified", audit.verified, audit.falsified);
}

#[test]
fn single_affine_layer_is_exact() {
    let bx = InputBox::new(vec![0.0], vec![0.4]).unwrap();
    let (lo, hi) = formula_bounds(&line(), &bx, &Formula::y(0)).unwrap();
    assert!((lo + 1.0).abs() < 1e-9 && (hi + 0.2).abs() < 1e-9);
}

#[test]
fn scr_direction_on_the_line() {
    let spec = y_nonnegative();
    let cfg = VerifyConfig::new(200);
    let t = Target::Class(0);
    let hi = InputBox::new(vec![0.6], vec![0.9]).unwrap();
    assert_eq!(decide_box(&line(), &hi, &spec, &t, &cfg).unwrap(), Verdict::Verified);
    match decide_box(&line(), &InputBox::new(vec![0.3], vec![0.7]).unwrap(), &spec, &t, &cfg).unwrap() {
        Verdict::Falsified(x) => assert!(x[0] < 0.5),
        v => panic!("{v:?}"),
    }
}

#[test]
fn metrics_on_the_line() {
    let spec = y_nonnegative();
    // Point 0.5 with eps 0.2: box [0.3, 0.7], violated on [0.3, 0.5).
    let data = one_point(0.5);
    let net = line();
    let (pct, fr) = c_acc(&net, &data, &spec, 0.2, 1000, 3).unwrap();
    assert!((fr[0] - 0.5).abs() < 0.05, "{}", fr[0]);
    assert_eq!(pct, 100.0 * fr[0]);
    let attack = PgdConfig::with_default_step(0.2, 20, 1);
    let qll = Backend::qll(f64::INFINITY).unwrap();
    let (sec, flags) = c_sec(&net, &data, &spec, 0.2, &attack, &qll, 0).unwrap();
    assert_eq!((sec, flags), (0.0, vec![false]));
    let counts = c_sat(&net, &data, &spec, 0.2, &VerifyConfig::new(100)).unwrap();
    assert_eq!(counts.falsified, 1);
}

#[test]
fn mixed_counts_follow_the_analytic_partition() {
    // Points 0.1..0.9 with eps 0.05 on "y >= 0" for y = 2x - 1: boxes
    // entirely above 0.5 verify, boxes entirely below falsify, and the
    // box around 0.5 contains violations.
    let xs: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let data = Dataset::new(xs.iter().map(|&x| vec![x]).collect(), vec![Target::Class(0); 9], 1, vec![0.0], vec![1.0]).unwrap();
    let counts = c_sat(&line(), &data, &y_nonnegative(), 0.05, &VerifyConfig::new(100)).unwrap();
    assert_eq!((counts.verified, counts.falsified, counts.unknown), (4, 5, 0));
    for (x, v) in xs.iter().zip(&counts.verdicts) {
        assert_eq!(matches!(v, Verdict::Verified), *x > 0.55);
    }
}

#[test]
fn zero_eps_matches_clean_satisfaction() {
    let net = init_network(&[2, 6, 3], 5).unwrap();
    let data = qll_core::data::gen_blobs(4, 10, 3, 2, 1.0).unwrap();
    let spec = ConstraintSpec::ClassificationRobustness;
    let counts = c_sat(&net, &data, &spec, 0.0, &VerifyConfig::new(10)).unwrap();
    let attack = PgdConfig { steps: 0, restarts: 1, step_size: 0.0 };
    let (_, sec) = c_sec(&net, &data, &spec, 0.0, &attack, &Backend::qll(5.0).unwrap(), 1).unwrap();
    let (_, acc) = c_acc(&net, &data, &spec, 0.0, 3, 1).unwrap();
    for i in 0..data.len() {
        let clean = qll_core::constraints::constraint_satisfied(&spec, &data.targets[i], &forward(&net, &data.inputs[i]).unwrap()).unwrap();
        assert_eq!(counts.verdicts[i] == Verdict::Verified, clean);
        assert_eq!(sec[i], clean);
        assert_eq!(acc[i], if clean { 1.0 } else { 0.0 });
    }
}

#[test]
fn steps_zero_attack_is_clean_satisfaction_at_the_center() {
    let net = init_network(&[2, 6, 3], 8).unwrap();
    let data = qll_core::data::gen_blobs(9, 10, 3, 2, 1.0).unwrap();
    let spec = ConstraintSpec::ClassificationRobustness;
    let attack = PgdConfig { steps: 0, restarts: 1, step_size: 0.0 };
    let (_, sec) = c_sec(&net, &data, &spec, 0.05, &attack, &Backend::qll(5.0).unwrap(), 1).unwrap();
    for i in 0..data.len() {
        let clean = qll_core::constraints::constraint_satisfied(&spec, &data.targets[i], &forward(&net, &data.inputs[i]).unwrap()).unwrap();
        assert_eq!(sec[i], clean);
    }
}

#[test]
fn constant_satisfying_network_is_fully_verified() {
    // Zero weights, bias favoring class 0 by a margin.
    let mut params = vec![0.0; qll_core::models::param_count(&[2, 3])];
    params[6] = 1.0;
    let net = Network::new(vec![2, 3], params).unwrap();
    let data = Dataset::new(vec![vec![0.2, 0.4], vec![0.9, 0.1]], vec![Target::Class(0); 2], 3, vec![0.0; 2], vec![1.0; 2]).unwrap();
    let counts = c_sat(&net, &data, &ConstraintSpec::ClassificationRobustness, 0.1, &VerifyConfig::new(5)).unwrap();
    assert_eq!(counts.verified_pct(), 100.0);
}

#[test]
fn verdicts_are_deterministic() {
    let net = init_network(&[2, 8, 3], 2).unwrap();
    let data = qll_core::data::gen_blobs(1, 8, 3, 2, 1.0).unwrap();
    let spec = ConstraintSpec::ClassificationRobustness;
    let cfg = VerifyConfig { seed: 11, ..VerifyConfig::new(300) };
    let a = c_sat(&net, &data, &spec, 0.05, &cfg).unwrap();
    let b = c_sat(&net, &data, &spec, 0.05, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.verified + a.falsified + a.unknown, data.len());
    for (i, v) in a.verdicts.iter().enumerate() {
        if let Verdict::Falsified(x) = v {
            let phi = qll_core::constraints::sample_formula(&spec, 3, &data.targets[i]).unwrap();
            assert!(!formula_satisfied(&phi, &forward(&net, x).unwrap()).unwrap());
        }
    }
}

#[test]
fn label_variables_are_rejected() {
    let bx = InputBox::new(vec![0.0], vec![1.0]).unwrap();
    assert!(decide_formula(&line(), &bx, &Formula::yhat(0), &VerifyConfig::new(5)).is_err());
    assert!(decide_formula(&line(), &bx, &Formula::y(0), &VerifyConfig { budget: 0, probe: None, seed: 0 }).is_err());
}
