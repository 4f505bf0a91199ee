//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use qll_core::autodiff::Plain;
use qll_core::backends::{backend_eval, fuzzy_implies, fuzzy_not, stl_nary, t_conorm, t_norm, Backend, Logic, StlKind};
use qll_core::constraints::formula_satisfied;
use qll_core::logic::{eval_additive, eval_boolean, Formula, Hardness, Valuation};
use qll_core::models::{forward, Network};
use qll_core::training::InputBox;
use qll_core::verify::{decide_formula, Verdict, VerifyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of [`soundness_sweep`].
pub struct Sweep {
    /// (formula, valuation) evaluations performed.
    pub evaluations: usize,
    /// Largest number of distinct (Boolean, value) classes at one valuation.
    pub classes: usize,
    /// `(formula, valuation)` pairs where the two semantics disagree.
    pub failures: Vec<(String, Vec<f64>)>,
}

/// Checks `eval_boolean ≡ (eval_additive at p=∞ <= 0)` on every formula up
/// to `max_depth` over atoms `y0`, `y1` and the literals -1, 0, 1, for every
/// valuation in {-1, 0, 1}².
///
/// Both semantics are evaluated pointwise: at a fixed valuation, a
/// formula's Boolean value and ∞-value depend on its children only through
/// their own pair of values there. Per valuation, formulas are therefore
/// grouped by that pair and one representative per group builds the next
/// depth. Every formula of the language reaches some representative
/// combination, so the sweep covers all of them.
pub fn soundness_sweep(max_depth: usize) -> Sweep {
    let mut sweep = Sweep { evaluations: 0, classes: 0, failures: Vec::new() };
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            sweep_at(&Valuation::from_outputs(vec![a, b]).unwrap(), max_depth, &mut sweep);
        }
    }
    sweep
}

fn sweep_at(v: &Valuation, max_depth: usize, sweep: &mut Sweep) {
    let mut seen: HashSet<(bool, u64)> = HashSet::new();
    let check = |phi: Formula, seen: &mut HashSet<(bool, u64)>, out: &mut Vec<Formula>, sweep: &mut Sweep| {
        sweep.evaluations += 1;
        let b = eval_boolean(&phi, v).unwrap();
        let a = eval_additive(&phi, v, Hardness::Infinite).unwrap();
        if b != a.holds() {
            sweep.failures.push((phi.to_string(), v.output_logits.clone()));
        }
        // Adding 0.0 maps -0.0 to 0.0.
        if seen.insert((b, (a.get() + 0.0).to_bits())) {
            out.push(phi);
        }
    };
    let mut levels: Vec<Vec<Formula>> = vec![Vec::new()];
    let atoms = [Formula::y(0), Formula::y(1), Formula::lit(-1.0), Formula::lit(0.0), Formula::lit(1.0)];
    for a in atoms {
        check(a, &mut seen, &mut levels[0], sweep);
    }
    for depth in 1..=max_depth {
        let older: Vec<Formula> = levels.iter().flatten().cloned().collect();
        let prev_start = older.len() - levels[depth - 1].len();
        let mut next = Vec::new();
        for a in &older[prev_start..] {
            check(Formula::not(a.clone()), &mut seen, &mut next, sweep);
        }
        for (i, a) in older.iter().enumerate() {
            for (j, b) in older.iter().enumerate() {
                // At least one child sits at the previous depth.
                if i < prev_start && j < prev_start {
                    continue;
                }
                for phi in [
                    Formula::soft_and(a.clone(), b.clone()),
                    Formula::soft_or(a.clone(), b.clone()),
                    Formula::lin_and(a.clone(), b.clone()),
                    Formula::lin_or(a.clone(), b.clone()),
                    Formula::implies(a.clone(), b.clone()),
                    Formula::BigSoftAnd(vec![a.clone(), b.clone()]),
                    Formula::BigSoftOr(vec![a.clone(), b.clone()]),
                ] {
                    check(phi, &mut seen, &mut next, sweep);
                }
            }
        }
        levels.push(next);
    }
    sweep.classes = sweep.classes.max(seen.len());
}

/// A random dense ReLU net with input dimension ≤ 2 and ≤ 8 hidden units.
pub fn random_small_net(rng: &mut ChaCha8Rng) -> Network {
    let m = rng.random_range(1..=2);
    let n = rng.random_range(1..=3);
    let mut sizes = vec![m];
    let mut left = 8usize;
    for _ in 0..rng.random_range(1..=2) {
        if left == 0 {
            break;
        }
        let h = rng.random_range(1..=left.min(6));
        sizes.push(h);
        left -= h;
    }
    sizes.push(n);
    let count = qll_core::models::param_count(&sizes);
    let params = (0..count).map(|_| rng.random_range(-1.5..1.5)).collect();
    Network::new(sizes, params).unwrap()
}

/// Grid points with spacing `h` covering `bx`, corners included.
pub fn grid(bx: &InputBox, h: f64) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bx
        .lower
        .iter()
        .zip(&bx.upper)
        .map(|(&l, &u)| {
            let k = ((u - l) / h).ceil().max(0.0) as usize;
            (0..=k).map(|i| (l + i as f64 * h).min(u)).collect()
        })
        .collect();
    let mut pts = vec![Vec::new()];
    for ax in &axes {
        pts = pts.iter().flat_map(|p| ax.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    pts
}

pub struct VerifierAudit {
    pub cases: usize,
    pub verified: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub unsound: Vec<String>,
}

/// Runs the verifier on `cases` random nets, boxes and constraints and
/// audits every verdict: Verified against a grid with spacing `h`,
/// Falsified by re-evaluating the witness.
pub fn audit_verifier(cases: usize, h: f64, seed: u64) -> VerifierAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = VerifierAudit { cases, verified: 0, falsified: 0, unknown: 0, unsound: Vec::new() };
    for case in 0..cases {
        let net = random_small_net(&mut rng);
        let m = net.input_dim();
        let n = net.output_dim();
        let w = rng.random_range(0.02..0.3);
        let lower: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.7)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + w).collect();
        let bx = InputBox::new(lower, upper).unwrap();
        // Pairwise comparisons against output t, or a threshold on it.
        let t = rng.random_range(0..n);
        let phi = if n > 1 && rng.random_bool(0.5) {
            Formula::big_and((0..n).filter(|&i| i != t).map(|i| Formula::implies(Formula::y(i), Formula::y(t))).collect())
        } else {
            Formula::implies(Formula::lit(rng.random_range(-1.0..1.0)), Formula::y(t))
        };
        let cfg = VerifyConfig { budget: 4000, probe: None, seed: case as u64 };
        match decide_formula(&net, &bx, &phi, &cfg).unwrap() {
            Verdict::Verified => {
                audit.verified += 1;
                for x in grid(&bx, h) {
                    if !formula_satisfied(&phi, &forward(&net, &x).unwrap()).unwrap() {
                        audit.unsound.push(format!("case {case}: verified but {x:?} violates {phi}"));
                        break;
                    }
                }
            }
            Verdict::Falsified(x) => {
                audit.falsified += 1;
                if !bx.contains(&x) || formula_satisfied(&phi, &forward(&net, &x).unwrap()).unwrap() {
                    audit.unsound.push(format!("case {case}: witness {x:?} does not violate {phi}"));
                }
            }
            Verdict::Unknown => audit.unknown += 1,
        }
    }
    audit
}

pub struct Golden {
    pub name: &'static str,
    pub got: f64,
    pub want: f64,
}

pub fn lits(backend: &str, phi: Formula) -> f64 {
    let b: Backend = backend.parse().unwrap();
    backend_eval(&b, &phi, &Valuation::from_outputs(vec![]).unwrap()).unwrap()
}

/// The twenty golden cases.
pub fn golden_table() -> Vec<Golden> {
    let p = &mut Plain;
    let g = Logic::Godel;
    let l = Logic::Lukasiewicz;
    let pr = Logic::Product;
    let y2 = Logic::Yager { r: 2.0 };
    let lit = Formula::lit;
    vec![
        // closed form
        Golden { name: "godel and", got: t_norm(p, g, 0.3, 0.8), want: 0.3 },
        Golden { name: "godel or", got: t_conorm(p, g, 0.3, 0.8), want: 0.8 },
        Golden { name: "godel implies", got: fuzzy_implies(p, g, 0.8, 0.3) + fuzzy_implies(p, g, 0.3, 0.8), want: 1.3 },
        Golden { name: "godel not", got: fuzzy_not(p, g, 0.0) + 2.0 * fuzzy_not(p, g, 0.4), want: 1.0 },
        Golden { name: "lukasiewicz and", got: t_norm(p, l, 0.7, 0.6), want: 0.7 + 0.6 - 1.0 },
        Golden { name: "lukasiewicz or", got: t_conorm(p, l, 0.7, 0.6) + t_conorm(p, l, 0.2, 0.3), want: 1.5 },
        Golden { name: "lukasiewicz implies", got: fuzzy_implies(p, l, 0.9, 0.4), want: 1.0 - 0.9 + 0.4 },
        Golden { name: "lukasiewicz not", got: fuzzy_not(p, l, 0.25), want: 0.75 },
        Golden { name: "product and", got: t_norm(p, pr, 0.5, 0.4), want: 0.5 * 0.4 },
        Golden { name: "product or", got: t_conorm(p, pr, 0.5, 0.4), want: 0.5 + 0.4 - 0.5 * 0.4 },
        Golden { name: "product implies", got: fuzzy_implies(p, pr, 0.8, 0.4), want: 0.5 },
        Golden { name: "yager r=2 and", got: t_norm(p, y2, 0.7, 0.6), want: 0.5 },
        Golden { name: "yager r=2 or", got: t_conorm(p, y2, 0.3, 0.4), want: 0.09 + 0.16 },
        Golden {
            name: "dl2 and/or",
            got: lits("dl2", Formula::lin_and(lit(0.5), lit(2.0))) + 10.0 * lits("dl2", Formula::soft_or(lit(0.5), lit(2.0))),
            want: 2.5 + 10.0,
        },
        // high precision
        Golden { name: "yager r=2 implies", got: fuzzy_implies(p, y2, 0.9, 0.6), want: 0.61270166537925831 },
        Golden { name: "yager r=3 not", got: fuzzy_not(p, Logic::Yager { r: 3.0 }, 0.5), want: 0.95646559138619455 },
        Golden { name: "yager r=2.5 and", got: t_norm(p, Logic::Yager { r: 2.5 }, 0.8, 0.9), want: 0.78654436740569456 },
        Golden { name: "stl conj", got: stl_nary(StlKind::Conj, &[1.0, 2.0], 5.0).unwrap(), want: 1.940304263903282 },
        Golden {
            name: "stl disj",
            got: stl_nary(StlKind::Disj, &[-1.0, -3.0, 0.5], 1.0).unwrap(),
            want: -2.2367721478533079,
        },
        Golden { name: "qll and p=5", got: lits("qll:p=5", Formula::soft_and(lit(0.3), lit(-0.2))), want: 0.31577794685850992 },
    ]
}
