//! Extended-real truth values and the connective algebra over them.
//!
//! Truth runs downwards: `-∞` is maximally true, `+∞` maximally false and
//! `0` is the boundary of satisfaction.

use std::fmt;

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};

/// A point of `[-∞, +∞]`. Never NaN.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtReal(f64);

impl ExtReal {
    /// Maximally true.
    pub const TOP: ExtReal = ExtReal(f64::NEG_INFINITY);
    /// Maximally false.
    pub const BOTTOM: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps `x`, rejecting NaN.
    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() {
            Err(Error::Contract("extended reals exclude NaN".into()))
        } else {
            Ok(ExtReal(x))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// `self` is at least as true as `other` (numerically `self <= other`).
    pub fn at_least_as_true_as(self, other: ExtReal) -> bool {
        self.0 <= other.0
    }

    /// Satisfaction in the Boolean reading: `self <= 0`.
    pub fn holds(self) -> bool {
        self.0 <= 0.0
    }

    /// Order-reversing involution `a* = -a`.
    pub fn neg(self) -> Self {
        ExtReal(-self.0)
    }

    /// Linear conjunction `a + b`, with `-∞ + +∞ = +∞`.
    pub fn lin_and(self, other: Self) -> Self {
        if mixed_infinities(self.0, other.0) {
            Self::BOTTOM
        } else {
            ExtReal(self.0 + other.0)
        }
    }

    /// Linear disjunction `a +* b`, with `-∞ +* +∞ = -∞`.
    pub fn lin_or(self, other: Self) -> Self {
        if mixed_infinities(self.0, other.0) {
            Self::TOP
        } else {
            ExtReal(self.0 + other.0)
        }
    }

    /// Implication `a ⊸ b = a* +* b`, i.e. `b - a`.
    ///
    /// With the disjunctive infinity convention `+∞ ⊸ b` is `-∞` for any
    /// `b < +∞`, so a false premise makes the implication maximally true.
    pub fn implies(self, other: Self) -> Self {
        self.neg().lin_or(other)
    }

    /// Soft conjunction `(1/p) log(e^{pa} + e^{pb})`; `max` at `p = ∞`.
    pub fn soft_and(self, other: Self, p: Hardness) -> Self {
        let (a, b) = (self.0, other.0);
        match p {
            Hardness::Infinite => ExtReal(a.max(b)),
            Hardness::Finite(p) => {
                if a == f64::INFINITY || b == f64::INFINITY {
                    Self::BOTTOM
                } else if a == f64::NEG_INFINITY {
                    other
                } else if b == f64::NEG_INFINITY {
                    self
                } else {
                    ExtReal(lse_and(&mut Plain, a, b, p))
                }
            }
        }
    }

    /// Soft disjunction `-(1/p) log(e^{-pa} + e^{-pb})`; `min` at `p = ∞`.
    pub fn soft_or(self, other: Self, p: Hardness) -> Self {
        self.neg().soft_and(other.neg(), p).neg()
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<ExtReal> for f64 {
    fn from(x: ExtReal) -> f64 {
        x.0
    }
}

fn mixed_infinities(a: f64, b: f64) -> bool {
    a.is_infinite() && b.is_infinite() && a.signum() != b.signum()
}

/// Max-shifted log-sum-exp conjunction on finite operands.
pub fn lse_and<A: Arith>(ar: &mut A, a: A::V, b: A::V, p: f64) -> A::V {
    let m = ar.max2(a, b);
    let da = ar.sub(a, m);
    let db = ar.sub(b, m);
    let sa = ar.scale(da, p);
    let sb = ar.scale(db, p);
    let ea = ar.exp(sa);
    let eb = ar.exp(sb);
    let s = ar.add(ea, eb);
    let l = ar.ln(s);
    let pc = ar.constant(p);
    let shift = ar.div(l, pc);
    ar.add(m, shift)
}

/// Soft conjunction on finite operands for any [`Arith`].
pub fn soft_and_with<A: Arith>(ar: &mut A, a: A::V, b: A::V, p: Hardness) -> A::V {
    match p {
        Hardness::Infinite => ar.max2(a, b),
        Hardness::Finite(p) => lse_and(ar, a, b, p),
    }
}

/// Soft disjunction on finite operands for any [`Arith`].
pub fn soft_or_with<A: Arith>(ar: &mut A, a: A::V, b: A::V, p: Hardness) -> A::V {
    let na = ar.neg(a);
    let nb = ar.neg(b);
    let c = soft_and_with(ar, na, nb, p);
    ar.neg(c)
}

/// Hardness of the soft connectives, `p ∈ (0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hardness {
    Finite(f64),
    Infinite,
}

impl Hardness {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Hardness::Infinite)
        } else if p.is_finite() && p > 0.0 {
            Ok(Hardness::Finite(p))
        } else {
            Err(Error::Contract(format!("hardness must be positive, got {p}")))
        }
    }

    /// `p` as a float, `+∞` for the lattice case.
    pub fn as_f64(self) -> f64 {
        match self {
            Hardness::Finite(p) => p,
            Hardness::Infinite => f64::INFINITY,
        }
    }

    /// Gap between the soft connective and the lattice one, `log(2)/p`.
    pub fn idempotency_defect(self) -> f64 {
        std::f64::consts::LN_2 / self.as_f64()
    }
}

impl fmt::Display for Hardness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hardness::Finite(p) => write!(f, "{p}"),
            Hardness::Infinite => write!(f, "inf"),
        }
    }
}

/// Which binary connective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connective {
    SoftOr,
    SoftAnd,
    LinAnd,
    LinOr,
}

/// Evaluates a binary connective. Total on `ExtReal × ExtReal`.
pub fn connective_eval(kind: Connective, a: ExtReal, b: ExtReal, p: Hardness) -> ExtReal {
    match kind {
        Connective::SoftOr => a.soft_or(b, p),
        Connective::SoftAnd => a.soft_and(b, p),
        Connective::LinAnd => a.lin_and(b),
        Connective::LinOr => a.lin_or(b),
    }
}
