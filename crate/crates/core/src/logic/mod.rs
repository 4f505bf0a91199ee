//! Quantitative linear logic: truth values, formulas and their semantics.

pub mod formula;
pub mod text;
pub mod value;

pub use formula::{eval_additive, eval_boolean, to_nnf, Formula, Valuation};
pub use text::parse_formula;
pub use value::{connective_eval, Connective, ExtReal, Hardness};
