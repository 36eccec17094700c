//! Root-node diving heuristics for mixed-integer linear programs, and an
//! evolutionary loop that co-evolves scoring heuristics with the training
//! instances they are judged on.
//!
//! The crate is organized bottom-up:
//!
//! - [`milp`]: instance model, bounded-variable simplex, branch-and-bound and
//!   a brute-force oracle.
//! - [`gen`]: seeded generators for set cover, combinatorial auctions,
//!   independent set and capacitated facility location.
//! - [`diving`]: the generic dive, the per-variable feature vector and the
//!   built-in scorers.
//! - [`dsl`]: a small, total expression language for scoring heuristics.
//! - [`agents`]: the designer/coder/reviewer/judge generation episode over a
//!   mock or HTTP chat-completions provider.
//! - [`evolution`]: the co-evolution loop, its averaged-fitness baseline and
//!   the final portfolio.
//! - [`metrics`], [`report`], [`io`]: evaluation metrics, tables and file
//!   formats.

#![allow(clippy::needless_range_loop)]

pub mod agents;
pub mod diving;
pub mod dsl;
pub mod evolution;
pub mod gen;
pub mod io;
pub mod metrics;
pub mod milp;
pub mod parallel;
pub mod report;
pub mod rng;

pub use milp::{Instance, Sense};
