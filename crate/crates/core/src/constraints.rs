//! Formula builders for the classification constraints.
//!
//! Output logits follow the usual classifier reading ("class `c` wins when
//! `y_c` is largest"), so "`y_c` at least `t`" is an atom `y_c ⊸ t` whose
//! Boolean clause is `t <= y_c`. Multi-label outputs use the truth order
//! directly: label `j` is present when `y_j <= 0`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::logic::formula::{boolean, Formula, Valuation};

/// A constraint family. Class-indexed constraints range over all labels.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    /// The true class logit is at least `delta`.
    StrongClassificationRobustness { delta: f64 },
    /// The true class logit is the largest.
    ClassificationRobustness,
    /// The true class, when in group `c` (resp. `f`), beats every logit of
    /// the other group.
    GroupExclusion { c: Vec<usize>, f: Vec<usize> },
    /// At most one label of each pair is present.
    NotBoth { pairs: Vec<(usize, usize)> },
    /// Exactly one label of each pair is present.
    ExactlyOne { pairs: Vec<(usize, usize)> },
}

/// Ground truth of one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Class(usize),
    /// Multi-hot presence vector.
    Labels(Vec<bool>),
}

impl Target {
    pub fn class(&self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(*c),
            Target::Labels(_) => None,
        }
    }
}

/// Which form [`build_constraint`] emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Guarded by the label variables `ŷ_c`.
    Full,
    /// Guard-free form for a known true class.
    Simplified,
}

impl ConstraintSpec {
    /// Multi-label constraints ignore the true class.
    pub fn is_multilabel(&self) -> bool {
        matches!(self, ConstraintSpec::NotBoth { .. } | ConstraintSpec::ExactlyOne { .. })
    }

    /// Checks the invariants against `n` labels.
    pub fn validate(&self, n: usize) -> Result<()> {
        let in_range = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(Error::IndexOutOfBounds { index: i, len: n })
            }
        };
        match self {
            ConstraintSpec::StrongClassificationRobustness { delta } => {
                if !delta.is_finite() {
                    return Err(Error::Config(format!("delta must be finite, got {delta}")));
                }
            }
            ConstraintSpec::ClassificationRobustness => {}
            ConstraintSpec::GroupExclusion { c, f } => {
                for &i in c.iter().chain(f) {
                    in_range(i)?;
                }
                if c.iter().any(|i| f.contains(i)) {
                    return Err(Error::Config("groups C and F must be disjoint".into()));
                }
                if c.is_empty() || f.is_empty() {
                    return Err(Error::Config("groups C and F must be non-empty".into()));
                }
            }
            ConstraintSpec::NotBoth { pairs } | ConstraintSpec::ExactlyOne { pairs } => {
                if pairs.is_empty() {
                    return Err(Error::Config("pair list is empty".into()));
                }
                let mut seen = Vec::new();
                for &(i, j) in pairs {
                    in_range(i)?;
                    in_range(j)?;
                    if i == j || seen.contains(&i) || seen.contains(&j) {
                        return Err(Error::Config("pairs must be disjoint".into()));
                    }
                    seen.push(i);
                    seen.push(j);
                }
            }
        }
        Ok(())
    }
}

/// `y_c ⊸ y_i`: `y_i <= y_c` in the Boolean reading.
fn beats(c: usize, i: usize) -> Formula {
    Formula::implies(Formula::y(c), Formula::y(i))
}

fn guarded(c: usize, body: Formula) -> Formula {
    Formula::implies(Formula::yhat(c), body)
}

fn not_both(i: usize, j: usize) -> Formula {
    Formula::soft_or(Formula::not(Formula::y(i)), Formula::not(Formula::y(j)))
}

fn pairwise(pairs: &[(usize, usize)], exactly: bool) -> Formula {
    Formula::big_and(
        pairs
            .iter()
            .map(|&(i, j)| {
                if exactly {
                    Formula::soft_and(not_both(i, j), Formula::soft_or(Formula::y(i), Formula::y(j)))
                } else {
                    not_both(i, j)
                }
            })
            .collect(),
    )
}

/// Body of the class-`c` clause for class-indexed constraints.
fn class_body(spec: &ConstraintSpec, n: usize, c: usize) -> Formula {
    match spec {
        ConstraintSpec::StrongClassificationRobustness { delta } => {
            Formula::implies(Formula::y(c), Formula::lit(*delta))
        }
        ConstraintSpec::ClassificationRobustness => {
            Formula::big_and((0..n).map(|i| beats(c, i)).collect())
        }
        ConstraintSpec::GroupExclusion { c: cs, f } => {
            let other = if cs.contains(&c) {
                f
            } else if f.contains(&c) {
                cs
            } else {
                return Formula::lit(0.0);
            };
            Formula::big_and(other.iter().map(|&i| beats(c, i)).collect())
        }
        ConstraintSpec::NotBoth { .. } | ConstraintSpec::ExactlyOne { .. } => {
            unreachable!("multi-label constraints have no class clause")
        }
    }
}

/// The formula of `spec` over `n` labels.
///
/// [`Mode::Simplified`] needs the sample's true class for class-indexed
/// constraints. Multi-label constraints have no guard, so both modes agree.
pub fn build_constraint(
    spec: &ConstraintSpec,
    n: usize,
    mode: Mode,
    true_class: Option<usize>,
) -> Result<Formula> {
    spec.validate(n)?;
    match spec {
        ConstraintSpec::NotBoth { pairs } => return Ok(pairwise(pairs, false)),
        ConstraintSpec::ExactlyOne { pairs } => return Ok(pairwise(pairs, true)),
        _ => {}
    }
    match mode {
        Mode::Simplified => {
            let c = true_class.ok_or_else(|| {
                Error::Contract("simplified constraint needs the true class".into())
            })?;
            if c >= n {
                return Err(Error::IndexOutOfBounds { index: c, len: n });
            }
            Ok(class_body(spec, n, c))
        }
        Mode::Full => Ok(match spec {
            ConstraintSpec::GroupExclusion { c, f } => {
                let half = |g: &[usize]| {
                    Formula::big_and(g.iter().map(|&k| guarded(k, class_body(spec, n, k))).collect())
                };
                Formula::soft_and(half(c), half(f))
            }
            _ => Formula::big_and((0..n).map(|c| guarded(c, class_body(spec, n, c))).collect()),
        }),
    }
}

/// Label logits of the one-hot distribution of class `c`: `0` for `c` and
/// `+∞` (maximally false) elsewhere.
pub fn one_hot_labels(n: usize, c: usize) -> Vec<f64> {
    (0..n).map(|i| if i == c { 0.0 } else { f64::INFINITY }).collect()
}

/// Valuation pairing the one-hot labels of `c` with `outputs`.
pub fn one_hot_valuation(c: usize, outputs: &[f64]) -> Result<Valuation> {
    Valuation::new(one_hot_labels(outputs.len(), c), outputs.to_vec())
}

/// Formula used for a sample with ground truth `target`.
pub fn sample_formula(spec: &ConstraintSpec, n: usize, target: &Target) -> Result<Formula> {
    build_constraint(spec, n, Mode::Simplified, target.class())
}

/// Whether the constraint holds for `outputs`, decided by the Boolean
/// semantics of the simplified formula.
pub fn constraint_satisfied(spec: &ConstraintSpec, target: &Target, outputs: &[f64]) -> Result<bool> {
    let phi = sample_formula(spec, outputs.len(), target)?;
    formula_satisfied(&phi, outputs)
}

/// Boolean semantics of a label-free formula at `outputs`.
pub fn formula_satisfied(phi: &Formula, outputs: &[f64]) -> Result<bool> {
    let labels = vec![f64::INFINITY; outputs.len()];
    boolean(phi, &labels, outputs)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad label index {t:?}"))))
        .collect()
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>> {
    let s = s.trim();
    let mut out = Vec::new();
    for chunk in s.split(')').map(str::trim).filter(|c| !c.is_empty()) {
        let inner = chunk
            .strip_prefix('(')
            .ok_or_else(|| Error::Parse(format!("bad pair syntax near {chunk:?}")))?;
        let v = parse_list(inner)?;
        if v.len() != 2 {
            return Err(Error::Parse(format!("pair needs two labels, got {inner:?}")));
        }
        out.push((v[0], v[1]));
    }
    Ok(out)
}

impl FromStr for ConstraintSpec {
    type Err = Error;

    /// `scr:delta=0.7`, `cr`, `groups:C=0,2;F=5,7`, `notboth:P=(1,6)(2,5)`,
    /// `exactlyone:P=(0,1)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut fields = std::collections::BTreeMap::new();
        for kv in rest.split(';').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {kv:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("constraint {name} needs {k}=")))
        };
        let spec = match name {
            "scr" => {
                let d = get("delta")?;
                let delta = d.parse().map_err(|_| Error::Parse(format!("bad delta {d:?}")))?;
                ConstraintSpec::StrongClassificationRobustness { delta }
            }
            "cr" => ConstraintSpec::ClassificationRobustness,
            "groups" => ConstraintSpec::GroupExclusion { c: parse_list(&get("C")?)?, f: parse_list(&get("F")?)? },
            "notboth" => ConstraintSpec::NotBoth { pairs: parse_pairs(&get("P")?)? },
            "exactlyone" => ConstraintSpec::ExactlyOne { pairs: parse_pairs(&get("P")?)? },
            other => return Err(Error::Parse(format!("unknown constraint {other:?}"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let pairs = |ps: &[(usize, usize)]| ps.iter().map(|(a, b)| format!("({a},{b})")).collect::<String>();
        match self {
            ConstraintSpec::StrongClassificationRobustness { delta } => write!(f, "scr:delta={delta}"),
            ConstraintSpec::ClassificationRobustness => write!(f, "cr"),
            ConstraintSpec::GroupExclusion { c, f: g } => write!(f, "groups:C={};F={}", list(c), list(g)),
            ConstraintSpec::NotBoth { pairs: p } => write!(f, "notboth:P={}", pairs(p)),
            ConstraintSpec::ExactlyOne { pairs: p } => write!(f, "exactlyone:P={}", pairs(p)),
        }
    }
}
