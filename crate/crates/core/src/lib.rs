//! Proximal estimation for penalized linear regression under regular,
//! singular and nearly singular designs.
//!
//! The building blocks are weighted proximal operators `prox_{λf}^W` of
//! convex penalties ([`prox`]), linear initial estimators robust to
//! irregular designs ([`estimators`]), limit laws used to validate them
//! ([`asymptotics`]) and a replication harness for the irregular-design
//! simulation study ([`montecarlo`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod penalty;
pub mod prox;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{SymMatrix, WeightMatrix};
pub use penalty::Penalty;
pub use prox::{ProxOptions, ProxResult};
