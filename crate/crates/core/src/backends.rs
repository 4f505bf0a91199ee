//! Loss semantics of the competing differentiable logics.
//!
//! Every backend reads the same [`Formula`]. Subformulas without any
//! conjunction or disjunction are treated as atoms: their QLL value is a
//! margin `m` (`m <= 0` means satisfied) which [`ground_atom`] moves into the
//! backend's own domain. Connectives above the atoms use the backend's
//! tables.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};
use crate::logic::formula::{additive, eval_with, to_nnf, Formula, Valuation};
use crate::logic::value::Hardness;

/// Which logic a [`Backend`] implements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Logic {
    Qll(Hardness),
    Dl2,
    Stl { nu: f64 },
    Godel,
    Lukasiewicz,
    Product,
    Yager { r: f64 },
}

/// A loss semantics together with the fuzzy atom temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backend {
    pub logic: Logic,
    /// Temperature `τ` of the fuzzy grounding `σ(-m/τ)`.
    pub atom_temperature: f64,
}

impl Backend {
    pub fn new(logic: Logic, atom_temperature: f64) -> Result<Self> {
        if !(atom_temperature > 0.0 && atom_temperature.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {atom_temperature}")));
        }
        match logic {
            Logic::Stl { nu } if !(nu > 0.0 && nu.is_finite()) => {
                return Err(Error::Config(format!("nu must be positive, got {nu}")));
            }
            Logic::Yager { r } if !(r >= 1.0 && r.is_finite()) => {
                return Err(Error::Config(format!("yager r must be at least 1, got {r}")));
            }
            _ => {}
        }
        Ok(Backend { logic, atom_temperature })
    }

    /// Backend with the default temperature `τ = 1`.
    pub fn of(logic: Logic) -> Result<Self> {
        Backend::new(logic, 1.0)
    }

    pub fn qll(p: f64) -> Result<Self> {
        Backend::of(Logic::Qll(Hardness::new(p)?))
    }

    /// Truth degrees in `[0, 1]`.
    pub fn is_fuzzy(&self) -> bool {
        matches!(
            self.logic,
            Logic::Godel | Logic::Lukasiewicz | Logic::Product | Logic::Yager { .. }
        )
    }

    /// Formula actually optimized during training.
    ///
    /// Fuzzy logics train with their linear connectives, so the soft ones are
    /// replaced by their linear counterparts. Other logics use `phi` as is.
    pub fn training_formula(&self, phi: &Formula) -> Formula {
        if self.is_fuzzy() {
            phi.linearize()
        } else {
            phi.clone()
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.logic {
            Logic::Qll(p) => write!(f, "qll:p={p}")?,
            Logic::Dl2 => write!(f, "dl2")?,
            Logic::Stl { nu } => write!(f, "stl:nu={nu}")?,
            Logic::Godel => write!(f, "godel")?,
            Logic::Lukasiewicz => write!(f, "lukasiewicz")?,
            Logic::Product => write!(f, "product")?,
            Logic::Yager { r } => write!(f, "yager:r={r}")?,
        }
        if self.atom_temperature != 1.0 {
            let lead = match self.logic {
                Logic::Qll(_) | Logic::Stl { .. } | Logic::Yager { .. } => ",",
                _ => ":",
            };
            write!(f, "{lead}tau={}", self.atom_temperature)?;
        }
        Ok(())
    }
}

impl FromStr for Backend {
    type Err = Error;

    /// `name[:key=value[,key=value]*]`, e.g. `qll:p=5`, `yager:r=2,tau=0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, r),
            None => (s, ""),
        };
        let mut p = None;
        let mut nu = None;
        let mut r = None;
        let mut tau = 1.0;
        for kv in rest.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in backend, got {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number {v:?} in backend")))?;
            match k.trim() {
                "p" => p = Some(v),
                "nu" => nu = Some(v),
                "r" => r = Some(v),
                "tau" => tau = v,
                other => return Err(Error::Parse(format!("unknown backend parameter {other:?}"))),
            }
        }
        let need = |x: Option<f64>, k: &str| {
            x.ok_or_else(|| Error::Parse(format!("backend {name} needs parameter {k}")))
        };
        let logic = match name {
            "qll" => Logic::Qll(Hardness::new(need(p, "p")?)?),
            "dl2" => Logic::Dl2,
            "stl" => Logic::Stl { nu: need(nu, "nu")? },
            "godel" => Logic::Godel,
            "lukasiewicz" => Logic::Lukasiewicz,
            "product" => Logic::Product,
            "yager" => Logic::Yager { r: need(r, "r")? },
            other => return Err(Error::Parse(format!("unknown backend {other:?}"))),
        };
        Backend::new(logic, tau)
    }
}

/// Moves an atomic margin into the backend's domain.
pub fn ground_atom(backend: &Backend, margin: f64) -> f64 {
    ground_with(&mut Plain, backend, margin)
}

fn ground_with<A: Arith>(ar: &mut A, backend: &Backend, m: A::V) -> A::V {
    match backend.logic {
        Logic::Qll(_) | Logic::Stl { .. } => m,
        Logic::Dl2 => ar.relu(m),
        _ => {
            let z = ar.scale(m, -1.0 / backend.atom_temperature);
            ar.logistic(z)
        }
    }
}

/// The backend's loss for `phi` under `v`.
///
/// QLL returns `⟦φ⟧_p`, DL2 and STL their semantic value and fuzzy logics
/// `1 - truth`. In every case lower is better.
pub fn backend_eval(backend: &Backend, phi: &Formula, v: &Valuation) -> Result<f64> {
    if let Logic::Qll(p) = backend.logic {
        return Ok(additive(phi, &v.label_logits, &v.output_logits, p)?.get());
    }
    let labels = &v.label_logits;
    let outputs = &v.output_logits;
    let mut atom = |_: &mut Plain, f: &Formula| -> Result<f64> {
        Ok(additive(f, labels, outputs, Hardness::Infinite)?.get())
    };
    eval_generic(&mut Plain, backend, phi, &mut atom)
}

/// [`backend_eval`] over any [`Arith`]. Labels enter as constants and must
/// be finite.
pub fn backend_eval_with<A: Arith>(
    ar: &mut A,
    backend: &Backend,
    phi: &Formula,
    labels: &[f64],
    outputs: &[A::V],
) -> Result<A::V> {
    if let Logic::Qll(p) = backend.logic {
        return eval_with(ar, phi, labels, outputs, p);
    }
    let mut atom =
        |ar: &mut A, f: &Formula| eval_with(ar, f, labels, outputs, Hardness::Infinite);
    eval_generic(ar, backend, phi, &mut atom)
}

type AtomFn<'a, A> = dyn FnMut(&mut A, &Formula) -> Result<<A as Arith>::V> + 'a;

fn eval_generic<A: Arith>(
    ar: &mut A,
    backend: &Backend,
    phi: &Formula,
    atom: &mut AtomFn<'_, A>,
) -> Result<A::V> {
    match backend.logic {
        Logic::Qll(_) => unreachable!("handled by the callers"),
        Logic::Dl2 => dl2(ar, backend, &to_nnf(phi), atom),
        Logic::Stl { nu } => stl(ar, backend, nu, phi, atom),
        _ => {
            let t = fuzzy(ar, backend, phi, atom)?;
            let one = ar.constant(1.0);
            Ok(ar.sub(one, t))
        }
    }
}

fn dl2<A: Arith>(
    ar: &mut A,
    backend: &Backend,
    phi: &Formula,
    atom: &mut AtomFn<'_, A>,
) -> Result<A::V> {
    if phi.is_connective_free() {
        let m = atom(ar, phi)?;
        return Ok(ground_with(ar, backend, m));
    }
    Ok(match phi {
        Formula::SoftAnd(a, b) | Formula::LinAnd(a, b) => {
            let a = dl2(ar, backend, a, atom)?;
            let b = dl2(ar, backend, b, atom)?;
            ar.add(a, b)
        }
        Formula::SoftOr(a, b) | Formula::LinOr(a, b) => {
            let a = dl2(ar, backend, a, atom)?;
            let b = dl2(ar, backend, b, atom)?;
            dl2_or(ar, a, b)
        }
        Formula::Implies(a, b) => {
            let na = dl2(ar, backend, &to_nnf(&Formula::not((**a).clone())), atom)?;
            let b = dl2(ar, backend, b, atom)?;
            dl2_or(ar, na, b)
        }
        Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
            let conj = matches!(phi, Formula::BigSoftAnd(_));
            let mut vals = Vec::with_capacity(xs.len());
            for x in xs {
                vals.push(dl2(ar, backend, x, atom)?);
            }
            reduce_balanced(ar, &vals, &mut |ar, a, b| {
                if conj {
                    ar.add(a, b)
                } else {
                    dl2_or(ar, a, b)
                }
            })?
        }
        // In NNF a negation only wraps a variable, which is connective free.
        Formula::Not(_) | Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => {
            unreachable!("atoms are handled above")
        }
    })
}

/// DL2 disjunction `a · b`, with `0 · ∞ = 0`.
fn dl2_or<A: Arith>(ar: &mut A, a: A::V, b: A::V) -> A::V {
    let (va, vb) = (ar.value(a), ar.value(b));
    if (va == 0.0 && vb.is_infinite()) || (vb == 0.0 && va.is_infinite()) {
        ar.constant(0.0)
    } else {
        ar.mul(a, b)
    }
}

fn reduce_balanced<A: Arith>(
    ar: &mut A,
    vals: &[A::V],
    join: &mut dyn FnMut(&mut A, A::V, A::V) -> A::V,
) -> Result<A::V> {
    match vals.len() {
        0 => Err(Error::Contract("empty n-ary connective".into())),
        1 => Ok(vals[0]),
        n => {
            let l = reduce_balanced(ar, &vals[..n / 2], join)?;
            let r = reduce_balanced(ar, &vals[n / 2..], join)?;
            Ok(join(ar, l, r))
        }
    }
}

fn stl<A: Arith>(
    ar: &mut A,
    backend: &Backend,
    nu: f64,
    phi: &Formula,
    atom: &mut AtomFn<'_, A>,
) -> Result<A::V> {
    if phi.is_connective_free() {
        let m = atom(ar, phi)?;
        return Ok(ground_with(ar, backend, m));
    }
    Ok(match phi {
        Formula::Not(a) => {
            let a = stl(ar, backend, nu, a, atom)?;
            ar.neg(a)
        }
        Formula::Implies(a, b) => {
            let a = stl(ar, backend, nu, a, atom)?;
            let b = stl(ar, backend, nu, b, atom)?;
            ar.sub(b, a)
        }
        Formula::SoftAnd(a, b)
        | Formula::LinAnd(a, b)
        | Formula::SoftOr(a, b)
        | Formula::LinOr(a, b) => {
            let kind = if matches!(phi, Formula::SoftAnd(..) | Formula::LinAnd(..)) {
                StlKind::Conj
            } else {
                StlKind::Disj
            };
            let a = stl(ar, backend, nu, a, atom)?;
            let b = stl(ar, backend, nu, b, atom)?;
            stl_nary_with(ar, kind, &[a, b], nu)?
        }
        Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
            let kind = if matches!(phi, Formula::BigSoftAnd(_)) {
                StlKind::Conj
            } else {
                StlKind::Disj
            };
            let mut vals = Vec::with_capacity(xs.len());
            for x in xs {
                vals.push(stl(ar, backend, nu, x, atom)?);
            }
            stl_nary_with(ar, kind, &vals, nu)?
        }
        Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => {
            unreachable!("atoms are handled above")
        }
    })
}

/// Conjunction or disjunction for [`stl_nary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlKind {
    Conj,
    Disj,
}

/// The n-ary STL robustness aggregate on loss values.
///
/// Robustness is `ρ_i = -values_i`; the aggregate of `ρ` is negated back, so
/// a singleton returns its element.
pub fn stl_nary(kind: StlKind, values: &[f64], nu: f64) -> Result<f64> {
    stl_nary_with(&mut Plain, kind, values, nu)
}

/// [`stl_nary`] over any [`Arith`].
pub fn stl_nary_with<A: Arith>(ar: &mut A, kind: StlKind, values: &[A::V], nu: f64) -> Result<A::V> {
    if values.is_empty() {
        return Err(Error::Contract("stl aggregate of an empty list".into()));
    }
    if !(nu > 0.0) {
        return Err(Error::Contract(format!("nu must be positive, got {nu}")));
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let rho: Vec<A::V> = values.iter().map(|&v| ar.neg(v)).collect();
    // Extreme element, first one on ties.
    let mut k = 0;
    for i in 1..rho.len() {
        let better = match kind {
            StlKind::Conj => ar.value(rho[i]) < ar.value(rho[k]),
            StlKind::Disj => ar.value(rho[i]) > ar.value(rho[k]),
        };
        if better {
            k = i;
        }
    }
    let ext = rho[k];
    let ev = ar.value(ext);
    if ev == 0.0 {
        return Ok(ar.constant(0.0));
    }
    let tilde: Vec<A::V> = rho
        .iter()
        .map(|&r| {
            let d = ar.sub(r, ext);
            ar.div(d, ext)
        })
        .collect();
    // Branch where the extreme has the "attracting" sign: ρ_min < 0 for the
    // conjunction, ρ_max > 0 for the disjunction.
    let attracting = match kind {
        StlKind::Conj => ev < 0.0,
        StlKind::Disj => ev > 0.0,
    };
    let mut num = Vec::with_capacity(rho.len());
    let mut den = Vec::with_capacity(rho.len());
    for (i, &t) in tilde.iter().enumerate() {
        if attracting {
            let w = ar.scale(t, nu);
            let w = ar.exp(w);
            let e = ar.exp(t);
            let we = ar.mul(e, w);
            num.push(ar.mul(ext, we));
            den.push(w);
        } else {
            let w = ar.scale(t, -nu);
            let w = ar.exp(w);
            num.push(ar.mul(rho[i], w));
            den.push(w);
        }
    }
    let n = ar.sum(&num);
    let d = ar.sum(&den);
    let agg = ar.div(n, d);
    Ok(ar.neg(agg))
}

/// Truth degree of `phi` in a fuzzy logic.
fn fuzzy<A: Arith>(
    ar: &mut A,
    backend: &Backend,
    phi: &Formula,
    atom: &mut AtomFn<'_, A>,
) -> Result<A::V> {
    if phi.is_connective_free() {
        let m = atom(ar, phi)?;
        return Ok(ground_with(ar, backend, m));
    }
    let logic = backend.logic;
    Ok(match phi {
        Formula::Not(a) => {
            let a = fuzzy(ar, backend, a, atom)?;
            fuzzy_not(ar, logic, a)
        }
        Formula::Implies(a, b) => {
            let a = fuzzy(ar, backend, a, atom)?;
            let b = fuzzy(ar, backend, b, atom)?;
            fuzzy_implies(ar, logic, a, b)
        }
        Formula::SoftAnd(a, b) => {
            let a = fuzzy(ar, backend, a, atom)?;
            let b = fuzzy(ar, backend, b, atom)?;
            ar.min2(a, b)
        }
        Formula::SoftOr(a, b) => {
            let a = fuzzy(ar, backend, a, atom)?;
            let b = fuzzy(ar, backend, b, atom)?;
            ar.max2(a, b)
        }
        Formula::LinAnd(a, b) => {
            let a = fuzzy(ar, backend, a, atom)?;
            let b = fuzzy(ar, backend, b, atom)?;
            t_norm(ar, logic, a, b)
        }
        Formula::LinOr(a, b) => {
            let a = fuzzy(ar, backend, a, atom)?;
            let b = fuzzy(ar, backend, b, atom)?;
            t_conorm(ar, logic, a, b)
        }
        Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
            let conj = matches!(phi, Formula::BigSoftAnd(_));
            let mut vals = Vec::with_capacity(xs.len());
            for x in xs {
                vals.push(fuzzy(ar, backend, x, atom)?);
            }
            reduce_balanced(ar, &vals, &mut |ar, a, b| {
                if conj {
                    ar.min2(a, b)
                } else {
                    ar.max2(a, b)
                }
            })?
        }
        Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => {
            unreachable!("atoms are handled above")
        }
    })
}

/// Linear conjunction `⊗` of a fuzzy logic.
pub fn t_norm<A: Arith>(ar: &mut A, logic: Logic, a: A::V, b: A::V) -> A::V {
    match logic {
        Logic::Lukasiewicz => {
            let s = ar.add(a, b);
            let s = ar.add_const(s, -1.0);
            let zero = ar.constant(0.0);
            ar.max2(s, zero)
        }
        Logic::Product => ar.mul(a, b),
        Logic::Yager { r } => {
            let one = ar.constant(1.0);
            let na = ar.sub(one, a);
            let nb = ar.sub(one, b);
            let pa = ar.powf(na, r);
            let pb = ar.powf(nb, r);
            let s = ar.add(pa, pb);
            let root = ar.powf(s, 1.0 / r);
            let v = ar.sub(one, root);
            let zero = ar.constant(0.0);
            ar.max2(v, zero)
        }
        _ => ar.min2(a, b),
    }
}

/// Linear disjunction `⊕` of a fuzzy logic.
pub fn t_conorm<A: Arith>(ar: &mut A, logic: Logic, a: A::V, b: A::V) -> A::V {
    match logic {
        Logic::Lukasiewicz => {
            let s = ar.add(a, b);
            let one = ar.constant(1.0);
            ar.min2(s, one)
        }
        Logic::Product => {
            let s = ar.add(a, b);
            let p = ar.mul(a, b);
            ar.sub(s, p)
        }
        Logic::Yager { r } => {
            let pa = ar.powf(a, r);
            let pb = ar.powf(b, r);
            let s = ar.add(pa, pb);
            let one = ar.constant(1.0);
            ar.min2(s, one)
        }
        _ => ar.max2(a, b),
    }
}

/// Fuzzy implication.
pub fn fuzzy_implies<A: Arith>(ar: &mut A, logic: Logic, a: A::V, b: A::V) -> A::V {
    let le = ar.value(a) <= ar.value(b);
    match logic {
        Logic::Lukasiewicz => {
            let d = ar.sub(b, a);
            let d = ar.add_const(d, 1.0);
            let one = ar.constant(1.0);
            ar.min2(d, one)
        }
        _ if le => ar.constant(1.0),
        Logic::Product => ar.div(b, a),
        Logic::Yager { r } => {
            let one = ar.constant(1.0);
            let nb = ar.sub(one, b);
            let na = ar.sub(one, a);
            let pb = ar.powf(nb, r);
            let pa = ar.powf(na, r);
            let d = ar.sub(pb, pa);
            let root = ar.powf(d, 1.0 / r);
            ar.sub(one, root)
        }
        _ => b,
    }
}

/// Fuzzy negation.
pub fn fuzzy_not<A: Arith>(ar: &mut A, logic: Logic, a: A::V) -> A::V {
    match logic {
        Logic::Lukasiewicz => {
            let one = ar.constant(1.0);
            ar.sub(one, a)
        }
        Logic::Yager { r } => {
            let p = ar.powf(a, r);
            let one = ar.constant(1.0);
            let d = ar.sub(one, p);
            ar.powf(d, 1.0 / r)
        }
        _ => {
            let v = if ar.value(a) == 0.0 { 1.0 } else { 0.0 };
            ar.constant(v)
        }
    }
}
