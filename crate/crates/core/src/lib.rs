//! Deterministic bounds for the α-quantile of `f(X)` when `f` is Lipschitz on
//! the unit cube and the law of `X` is a known product measure.
//!
//! The estimators refine a ternary grid adaptively under a fixed budget of
//! function calls, keeping only cells whose value may still matter for the
//! quantile.

pub mod adversary;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod known;
pub mod measure;
pub mod oracles;
pub mod quantile;
pub mod refine;
pub mod strategy;
pub mod unknown;

pub use error::{Error, Result};
