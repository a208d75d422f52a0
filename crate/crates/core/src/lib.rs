//! Runtime refinement checking of node programs against abstract
//! transition-system models, with ghost locks, affine guards and a
//! temporal-obligation ledger.

// `Violation` is a flat, cloneable record returned only on failure paths.
#![allow(clippy::result_large_err)]

pub mod cli;
pub mod error;
pub mod guards;
pub mod harness;
pub mod lock;
pub mod ltl;
pub mod model;
pub mod oracle;
pub mod tla;
pub mod trace;

pub use error::{Policy, Violation};
pub use model::Model;
