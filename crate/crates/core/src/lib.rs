//! Differentiable logics over a shared formula language, property-driven
//! training and complete verification for small ReLU networks.

pub mod autodiff;
pub mod backends;
pub mod constraints;
pub mod data;
pub mod error;
pub mod experiment;
pub mod logic;
pub mod models;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
