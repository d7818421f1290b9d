//! Matching markets with uncertain preferences and probabilistic cutoffs.
//!
//! Students learn about their own preferences through signals, pick the best
//! program they can afford under a cutoff vector, and programs clear in
//! expectation. The crate computes demand, market-clearing cutoffs, welfare,
//! and checks comparative statics over information structures.

// Negated comparisons are deliberate: NaN has to fail every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod clearing;
pub mod decision;
pub mod demand;
pub mod error;
pub mod fixtures;
pub mod golden;
pub mod information;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod welfare;

pub use error::{Error, Result};
