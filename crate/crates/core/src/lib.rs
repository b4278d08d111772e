//! Safe Bayesian optimization of episodic controllers with local safe-set
//! expansion and global jumps guarded by backup policies.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backups;
pub mod campaign;
pub mod confidence;
pub mod config;
pub mod engine;
pub mod envs;
pub mod error;
pub mod gp;
pub mod grid;
pub mod kernel;
pub mod safe_set;

pub use error::{Error, Result};
