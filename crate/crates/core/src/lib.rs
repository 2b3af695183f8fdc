//! Preference-conditioned multi-objective fine-tuning of a 2D flow-matching
//! policy, with Pareto-front evaluation.
//!
//! The crate is organised bottom-up:
//!
//! * [`numcore`] dense f64 tensors, a hand-differentiated MLP, AdamW and a
//!   finite-difference gradient checker.
//! * [`simplex`] preference vectors and the structured training distribution
//!   over the simplex.
//! * [`flowpolicy`] the conditioned velocity field, Euler sampler, EMA and
//!   flow-matching warm start.
//! * [`rewards`] analytic, conflicting reward channels.
//! * [`morl`] group advantages, implicit velocity steering, per-reward losses
//!   and the outer training loop.
//! * [`pareto`] dominance, normalization and hypervolume.
//! * [`config`], [`checkpoint`] and [`runner`] tie everything into runs that
//!   the CLI and the slider service drive.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod flowpolicy;
pub mod morl;
pub mod numcore;
pub mod pareto;
pub mod rewards;
pub mod rng;
pub mod runner;
pub mod simplex;

pub use error::{Error, Result};
