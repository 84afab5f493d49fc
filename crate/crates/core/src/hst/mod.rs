//! Fractional k-server on τ-adic hierarchically separated trees.
//!
//! The state is a point of the assignment polytope `A`: for every non-root
//! vertex `u` a sorted vector `x_{u,1..N_u}` whose entry `x_{u,i}` is the
//! fractional "fewer than `i` servers below `u`" indicator. A request at
//! leaf `ℓ` pushes `x_{ℓ,1}` down to `δ` under the shifted multiscale
//! entropy. The induced server measure `z_u = Σ_i (1 − x_{u,i})/(1 − δ)` is
//! rounded by `σ` to a supermeasure of mass `k` and realised by moving
//! actual mass on the tree ([`VertexTransport`]).
//!
//! Verification lives next to the algorithm: [`verify_dynamics_lemmas`] for
//! the structural facts along a trajectory and
//! [`verify_depth_inequalities`] for the potential-function bounds.

mod dynamics;
mod measures;
mod potentials;
mod region;
mod run;
mod tree;

pub use dynamics::{
    best_integral, default_policy, entropy_gradient_bound, entropy_gradient_ceiling, multiscale_entropy,
    opt_move_ratio, sample_assignment_points, serve_leaf_request, verify_dynamics_lemmas, worst_descent_rate,
    DynamicsReport, FD_STEP,
};
pub use measures::{
    lift, sigma_round_measure, supermeasure_defect, supermeasure_to_leaves, w1_distance, weighted_l1, LeafPath,
    VertexTransport, SUPERMEASURE_TOL,
};
pub use potentials::{
    evaluate_potential, verify_depth_inequalities, DepthReport, PotentialEval, PotentialSpec, PotentialVariant,
    LOG2K_REL_TOL,
};
pub use region::{full_family_violation, union_closure_excess, AssignmentRegion};
pub use run::{default_parameters, run_kserver, run_kserver_adaptive, HstKServer, KServerConfig, KServerRun, RequestLog, VerifyLevel};
pub use tree::HstTree;
