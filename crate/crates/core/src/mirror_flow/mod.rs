//! Time integration of the projected mirror-descent dynamics
//! `∂_t x = H(x)(f(t, x) − u)`, `u ∈ N_K(x)`, with `u` chosen by least action.
//!
//! The integrator is explicit Euler with one least-action solve per step. It
//! never steps across a face of `K`, localises events by bisection and
//! repairs numerical drift with a metric projection. The checks module turns
//! the continuous-time guarantees (Bregman descent, velocity bound,
//! orthogonality to active normals) into per-interval reports.

mod checks;
mod csv;
mod field;
mod integrate;

pub use checks::{
    bregman_hat, check_descent_inequality, check_orthogonality, max_drift, velocity_bound_excess,
    OrthogonalityReport, SlopeReport,
};
pub use csv::{problem_hash, write_trajectory_csv};
pub use field::{gradient_fd_error, ConstantControl, ControlField, EntropicField, MetricField, QuadraticField};
pub use integrate::{integrate, Event, Sample, StepPolicy, StopReason, Trajectory};
