//! Low-rank matrix-completion estimates and confidence intervals for
//! treatment effects in panel data under staggered adoption.

pub mod error;
pub mod fourblock;
pub mod lowrank;
pub mod normal;
pub mod par;
pub mod staggered;
pub mod synth;

pub use error::{Error, Result};
