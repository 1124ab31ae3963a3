//! Approximate and exact counting of the subsets of a numeric set whose sums
//! equal, exceed or fall below a target.
//!
//! The approximate route models the sum of a uniformly random `k`-subset with
//! a continuous law (a finite-population normal, an i.i.d. family, or a
//! tophat kernel density fitted to sampled subset sums), turns it into a
//! probability, and scales by `C(n, k)`. The exact route enumerates or runs a
//! big-integer dynamic program and serves as the oracle.

pub mod approx;
pub mod bigutil;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod input;
pub mod kde;
pub mod moments;
pub mod pipeline;
pub mod simulation;
mod relation;

pub use error::{Error, Result};
pub use relation::Relation;
