//! Simulation and verification lab for continuous-time mirror descent on
//! k-server and weighted paging.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: normal cones, Moreau decomposition and the least-action
//!   velocity under a diagonal local metric.
//! - [`mirror_flow`]: an event-aware Euler integrator for projected dynamics
//!   and Bregman bookkeeping along trajectories.
//! - [`paging`]: the fractional weighted-paging dynamics with closed-form
//!   multipliers and the rounding to a valid fractional cache.
//! - [`hst`]: k-server on hierarchically separated trees via the assignment
//!   polytope, plus the potential-function verifiers.
//! - [`embedding`]: the request-driven dynamic embedding of a finite metric
//!   into a chain tree.
//! - [`offline_opt`]: exact offline optima used as ground truth.
//! - [`harness`]: request generators, batch runs and summary tables.

pub mod embedding;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hst;
pub mod mirror_flow;
pub mod offline_opt;
pub mod paging;

pub use error::{Error, Result};
