//! Microstructure impact analysis on ID-tagged order-flow tapes.
//!
//! The crate reads tapes of limit, market, cancel and execution events,
//! reconstructs per-trader metaorders and measures how prices respond to
//! them. A synthetic market generator with known impact dynamics lets every
//! estimator be checked against ground truth.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ecology;
pub mod impact;
pub mod metaorder;
pub mod propagator;
pub mod refill;
pub mod shuffle;
pub mod simulator;
pub mod stats;
pub mod tape;
pub mod testutil;
