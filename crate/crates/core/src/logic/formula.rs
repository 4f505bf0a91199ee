//! The formula language and its two semantics.

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};
use crate::logic::value::{soft_and_with, soft_or_with, ExtReal, Hardness};

/// Propositional QLL formula over `n` output variables `y_i` and `n` label
/// variables `ŷ_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    /// `y_i`, the i-th network output.
    OutputVar(usize),
    /// `ŷ_i`, the i-th label logit.
    LabelVar(usize),
    Literal(f64),
    Not(Box<Formula>),
    SoftAnd(Box<Formula>, Box<Formula>),
    SoftOr(Box<Formula>, Box<Formula>),
    LinAnd(Box<Formula>, Box<Formula>),
    LinOr(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    BigSoftAnd(Vec<Formula>),
    BigSoftOr(Vec<Formula>),
}

impl Formula {
    pub fn y(i: usize) -> Self {
        Formula::OutputVar(i)
    }

    pub fn yhat(i: usize) -> Self {
        Formula::LabelVar(i)
    }

    pub fn lit(r: f64) -> Self {
        Formula::Literal(r)
    }

    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }

    pub fn soft_and(a: Formula, b: Formula) -> Self {
        Formula::SoftAnd(Box::new(a), Box::new(b))
    }

    pub fn soft_or(a: Formula, b: Formula) -> Self {
        Formula::SoftOr(Box::new(a), Box::new(b))
    }

    pub fn lin_and(a: Formula, b: Formula) -> Self {
        Formula::LinAnd(Box::new(a), Box::new(b))
    }

    pub fn lin_or(a: Formula, b: Formula) -> Self {
        Formula::LinOr(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Finitary soft conjunction; a singleton collapses to its element.
    pub fn big_and(mut items: Vec<Formula>) -> Self {
        if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Formula::BigSoftAnd(items)
        }
    }

    /// Finitary soft disjunction; a singleton collapses to its element.
    pub fn big_or(mut items: Vec<Formula>) -> Self {
        if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Formula::BigSoftOr(items)
        }
    }

    /// Height of the syntax tree; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => 0,
            Formula::Not(a) => 1 + a.depth(),
            Formula::SoftAnd(a, b)
            | Formula::SoftOr(a, b)
            | Formula::LinAnd(a, b)
            | Formula::LinOr(a, b)
            | Formula::Implies(a, b) => 1 + a.depth().max(b.depth()),
            Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
                1 + xs.iter().map(Formula::depth).max().unwrap_or(0)
            }
        }
    }

    /// True when the formula contains no conjunction or disjunction.
    pub fn is_connective_free(&self) -> bool {
        match self {
            Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => true,
            Formula::Not(a) => a.is_connective_free(),
            Formula::Implies(a, b) => a.is_connective_free() && b.is_connective_free(),
            _ => false,
        }
    }

    /// Checks variable indices against `n` and rejects empty folds.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Formula::OutputVar(i) | Formula::LabelVar(i) => check_index(*i, n),
            Formula::Literal(r) => {
                if r.is_nan() {
                    Err(Error::Contract("literal is NaN".into()))
                } else {
                    Ok(())
                }
            }
            Formula::Not(a) => a.validate(n),
            Formula::SoftAnd(a, b)
            | Formula::SoftOr(a, b)
            | Formula::LinAnd(a, b)
            | Formula::LinOr(a, b)
            | Formula::Implies(a, b) => {
                a.validate(n)?;
                b.validate(n)
            }
            Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => {
                if xs.is_empty() {
                    return Err(Error::Contract("empty n-ary connective".into()));
                }
                xs.iter().try_for_each(|x| x.validate(n))
            }
        }
    }

    /// Replaces every soft connective by its linear counterpart.
    pub fn linearize(&self) -> Formula {
        match self {
            Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => self.clone(),
            Formula::Not(a) => Formula::not(a.linearize()),
            Formula::SoftAnd(a, b) | Formula::LinAnd(a, b) => {
                Formula::lin_and(a.linearize(), b.linearize())
            }
            Formula::SoftOr(a, b) | Formula::LinOr(a, b) => {
                Formula::lin_or(a.linearize(), b.linearize())
            }
            Formula::Implies(a, b) => Formula::implies(a.linearize(), b.linearize()),
            Formula::BigSoftAnd(xs) => fold_balanced(xs, &|x| x.linearize(), &Formula::lin_and),
            Formula::BigSoftOr(xs) => fold_balanced(xs, &|x| x.linearize(), &Formula::lin_or),
        }
    }
}

fn fold_balanced(
    xs: &[Formula],
    leaf: &dyn Fn(&Formula) -> Formula,
    join: &dyn Fn(Formula, Formula) -> Formula,
) -> Formula {
    if xs.len() == 1 {
        return leaf(&xs[0]);
    }
    let mid = xs.len() / 2;
    join(fold_balanced(&xs[..mid], leaf, join), fold_balanced(&xs[mid..], leaf, join))
}

fn check_index(index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfBounds { index, len })
    }
}

/// Values of the label variables `ŷ` and the output variables `y`.
///
/// Label logits may be `±∞`: the one-hot guard encoding uses `+∞` for the
/// classes that are not the true one.
#[derive(Debug, Clone, PartialEq)]
pub struct Valuation {
    pub label_logits: Vec<f64>,
    pub output_logits: Vec<f64>,
}

impl Valuation {
    pub fn new(label_logits: Vec<f64>, output_logits: Vec<f64>) -> Result<Self> {
        if label_logits.len() != output_logits.len() {
            return Err(Error::DimensionMismatch {
                expected: output_logits.len(),
                got: label_logits.len(),
            });
        }
        if label_logits.iter().any(|x| x.is_nan()) {
            return Err(Error::Contract("label logits contain NaN".into()));
        }
        if output_logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("output logits must be finite".into()));
        }
        Ok(Valuation { label_logits, output_logits })
    }

    /// Outputs only; every label is `+∞`, so no guard fires.
    pub fn from_outputs(output_logits: Vec<f64>) -> Result<Self> {
        let labels = vec![f64::INFINITY; output_logits.len()];
        Valuation::new(labels, output_logits)
    }

    pub fn len(&self) -> usize {
        self.output_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output_logits.is_empty()
    }
}

/// The additive semantics `⟦φ⟧_p`.
pub fn eval_additive(phi: &Formula, v: &Valuation, p: Hardness) -> Result<ExtReal> {
    additive(phi, &v.label_logits, &v.output_logits, p)
}

/// [`eval_additive`] on raw slices. `labels` and `outputs` must have equal
/// length.
pub fn additive(phi: &Formula, labels: &[f64], outputs: &[f64], p: Hardness) -> Result<ExtReal> {
    Ok(match phi {
        Formula::OutputVar(i) => {
            check_index(*i, outputs.len())?;
            ExtReal::new(outputs[*i])?
        }
        Formula::LabelVar(i) => {
            check_index(*i, labels.len())?;
            ExtReal::new(labels[*i])?
        }
        Formula::Literal(r) => ExtReal::new(*r)?,
        Formula::Not(a) => additive(a, labels, outputs, p)?.neg(),
        Formula::SoftAnd(a, b) => {
            additive(a, labels, outputs, p)?.soft_and(additive(b, labels, outputs, p)?, p)
        }
        Formula::SoftOr(a, b) => {
            additive(a, labels, outputs, p)?.soft_or(additive(b, labels, outputs, p)?, p)
        }
        Formula::LinAnd(a, b) => {
            additive(a, labels, outputs, p)?.lin_and(additive(b, labels, outputs, p)?)
        }
        Formula::LinOr(a, b) => {
            additive(a, labels, outputs, p)?.lin_or(additive(b, labels, outputs, p)?)
        }
        Formula::Implies(a, b) => {
            additive(a, labels, outputs, p)?.implies(additive(b, labels, outputs, p)?)
        }
        Formula::BigSoftAnd(xs) => reduce_ext(xs, labels, outputs, p, &|a, b| a.soft_and(b, p))?,
        Formula::BigSoftOr(xs) => reduce_ext(xs, labels, outputs, p, &|a, b| a.soft_or(b, p))?,
    })
}

fn reduce_ext(
    xs: &[Formula],
    labels: &[f64],
    outputs: &[f64],
    p: Hardness,
    join: &dyn Fn(ExtReal, ExtReal) -> ExtReal,
) -> Result<ExtReal> {
    match xs.len() {
        0 => Err(Error::Contract("empty n-ary connective".into())),
        1 => additive(&xs[0], labels, outputs, p),
        n => {
            let l = reduce_ext(&xs[..n / 2], labels, outputs, p, join)?;
            let r = reduce_ext(&xs[n / 2..], labels, outputs, p, join)?;
            Ok(join(l, r))
        }
    }
}

/// The additive semantics over any [`Arith`], with outputs supplied as
/// arithmetic values and labels as constants.
///
/// Requires every value reached during evaluation to be finite; the infinite
/// conventions of [`ExtReal`] are not reproduced here.
pub fn eval_with<A: Arith>(
    ar: &mut A,
    phi: &Formula,
    labels: &[f64],
    outputs: &[A::V],
    p: Hardness,
) -> Result<A::V> {
    Ok(match phi {
        Formula::OutputVar(i) => {
            check_index(*i, outputs.len())?;
            outputs[*i]
        }
        Formula::LabelVar(i) => {
            check_index(*i, labels.len())?;
            finite_constant(ar, labels[*i])?
        }
        Formula::Literal(r) => finite_constant(ar, *r)?,
        Formula::Not(a) => {
            let a = eval_with(ar, a, labels, outputs, p)?;
            ar.neg(a)
        }
        Formula::SoftAnd(a, b) => {
            let a = eval_with(ar, a, labels, outputs, p)?;
            let b = eval_with(ar, b, labels, outputs, p)?;
            soft_and_with(ar, a, b, p)
        }
        Formula::SoftOr(a, b) => {
            let a = eval_with(ar, a, labels, outputs, p)?;
            let b = eval_with(ar, b, labels, outputs, p)?;
            soft_or_with(ar, a, b, p)
        }
        Formula::LinAnd(a, b) | Formula::LinOr(a, b) => {
            let a = eval_with(ar, a, labels, outputs, p)?;
            let b = eval_with(ar, b, labels, outputs, p)?;
            ar.add(a, b)
        }
        Formula::Implies(a, b) => {
            let a = eval_with(ar, a, labels, outputs, p)?;
            let b = eval_with(ar, b, labels, outputs, p)?;
            ar.sub(b, a)
        }
        Formula::BigSoftAnd(xs) => reduce_with(ar, xs, labels, outputs, p, true)?,
        Formula::BigSoftOr(xs) => reduce_with(ar, xs, labels, outputs, p, false)?,
    })
}

fn finite_constant<A: Arith>(ar: &mut A, x: f64) -> Result<A::V> {
    if x.is_finite() {
        Ok(ar.constant(x))
    } else {
        Err(Error::Contract(format!("non-finite constant {x} in differentiable evaluation")))
    }
}

fn reduce_with<A: Arith>(
    ar: &mut A,
    xs: &[Formula],
    labels: &[f64],
    outputs: &[A::V],
    p: Hardness,
    conj: bool,
) -> Result<A::V> {
    match xs.len() {
        0 => Err(Error::Contract("empty n-ary connective".into())),
        1 => eval_with(ar, &xs[0], labels, outputs, p),
        n => {
            let l = reduce_with(ar, &xs[..n / 2], labels, outputs, p, conj)?;
            let r = reduce_with(ar, &xs[n / 2..], labels, outputs, p, conj)?;
            Ok(if conj {
                soft_and_with(ar, l, r, p)
            } else {
                soft_or_with(ar, l, r, p)
            })
        }
    }
}

/// [`eval_with`] on plain floats.
pub fn eval_plain(phi: &Formula, labels: &[f64], outputs: &[f64], p: Hardness) -> Result<f64> {
    eval_with(&mut Plain, phi, labels, outputs, p)
}

/// The Boolean semantics `⟦φ⟧_B`.
///
/// Atoms hold when their value is `<= 0`, `¬φ` when `⟦φ⟧_∞ >= 0` and
/// `φ ⊸ ψ` when `⟦ψ⟧_∞ <= ⟦φ⟧_∞`. Soft connectives are Boolean `∧`/`∨`.
/// Linear connectives hold when `⟦φ ⊗ ψ⟧_∞ <= 0`, the same shape as the
/// implication clause.
pub fn eval_boolean(phi: &Formula, v: &Valuation) -> Result<bool> {
    boolean(phi, &v.label_logits, &v.output_logits)
}

/// [`eval_boolean`] on raw slices.
pub fn boolean(phi: &Formula, labels: &[f64], outputs: &[f64]) -> Result<bool> {
    let inf = Hardness::Infinite;
    Ok(match phi {
        Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => {
            additive(phi, labels, outputs, inf)?.holds()
        }
        Formula::Not(a) => additive(a, labels, outputs, inf)?.get() >= 0.0,
        Formula::SoftAnd(a, b) => boolean(a, labels, outputs)? & boolean(b, labels, outputs)?,
        Formula::SoftOr(a, b) => boolean(a, labels, outputs)? | boolean(b, labels, outputs)?,
        Formula::LinAnd(..) | Formula::LinOr(..) => additive(phi, labels, outputs, inf)?.holds(),
        Formula::Implies(a, b) => {
            let a = additive(a, labels, outputs, inf)?;
            let b = additive(b, labels, outputs, inf)?;
            b.at_least_as_true_as(a)
        }
        Formula::BigSoftAnd(xs) => {
            if xs.is_empty() {
                return Err(Error::Contract("empty n-ary connective".into()));
            }
            let mut all = true;
            for x in xs {
                all &= boolean(x, labels, outputs)?;
            }
            all
        }
        Formula::BigSoftOr(xs) => {
            if xs.is_empty() {
                return Err(Error::Contract("empty n-ary connective".into()));
            }
            let mut any = false;
            for x in xs {
                any |= boolean(x, labels, outputs)?;
            }
            any
        }
    })
}

/// Negation normal form: `Not` only wraps variables.
///
/// Preserves both semantics exactly on finite valuations.
pub fn to_nnf(phi: &Formula) -> Formula {
    match phi {
        Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => phi.clone(),
        Formula::Not(a) => negate_nnf(a),
        Formula::SoftAnd(a, b) => Formula::soft_and(to_nnf(a), to_nnf(b)),
        Formula::SoftOr(a, b) => Formula::soft_or(to_nnf(a), to_nnf(b)),
        Formula::LinAnd(a, b) => Formula::lin_and(to_nnf(a), to_nnf(b)),
        Formula::LinOr(a, b) => Formula::lin_or(to_nnf(a), to_nnf(b)),
        Formula::Implies(a, b) => Formula::implies(to_nnf(a), to_nnf(b)),
        Formula::BigSoftAnd(xs) => Formula::BigSoftAnd(xs.iter().map(to_nnf).collect()),
        Formula::BigSoftOr(xs) => Formula::BigSoftOr(xs.iter().map(to_nnf).collect()),
    }
}

/// NNF of `¬φ`.
fn negate_nnf(phi: &Formula) -> Formula {
    match phi {
        Formula::OutputVar(_) | Formula::LabelVar(_) => Formula::not(phi.clone()),
        Formula::Literal(r) => Formula::Literal(-r),
        Formula::Not(a) => to_nnf(a),
        Formula::SoftAnd(a, b) => Formula::soft_or(negate_nnf(a), negate_nnf(b)),
        Formula::SoftOr(a, b) => Formula::soft_and(negate_nnf(a), negate_nnf(b)),
        Formula::LinAnd(a, b) => Formula::lin_or(negate_nnf(a), negate_nnf(b)),
        Formula::LinOr(a, b) => Formula::lin_and(negate_nnf(a), negate_nnf(b)),
        // -(b - a) = a - b
        Formula::Implies(a, b) => Formula::implies(to_nnf(b), to_nnf(a)),
        Formula::BigSoftAnd(xs) => Formula::BigSoftOr(xs.iter().map(negate_nnf).collect()),
        Formula::BigSoftOr(xs) => Formula::BigSoftAnd(xs.iter().map(negate_nnf).collect()),
    }
}

/// True when `Not` occurs only directly above a variable.
pub fn is_nnf(phi: &Formula) -> bool {
    match phi {
        Formula::OutputVar(_) | Formula::LabelVar(_) | Formula::Literal(_) => true,
        Formula::Not(a) => matches!(**a, Formula::OutputVar(_) | Formula::LabelVar(_)),
        Formula::SoftAnd(a, b)
        | Formula::SoftOr(a, b)
        | Formula::LinAnd(a, b)
        | Formula::LinOr(a, b)
        | Formula::Implies(a, b) => is_nnf(a) && is_nnf(b),
        Formula::BigSoftAnd(xs) | Formula::BigSoftOr(xs) => xs.iter().all(is_nnf),
    }
}
