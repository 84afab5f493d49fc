//! Dynamic embedding of a finite metric into complete chains.
//!
//! A τ-stack `(P⁰, …, P^M)` of partitions with `diam(P^j blocks) ≤ τ^{−j}`
//! maps each point to a chain of nested blocks via the forced refinement;
//! chains carry the ultrametric `d_τ(ξ, ξ′) = τ^{−len(lca)}`. The stack is
//! grown online from the requests by [`EmbedderState`]: level-`j` centers
//! are inserted when a request is farther than `τ^{−j−1}` from all of them,
//! each with a random radius, and a level is reset once it holds `2k`
//! centers.
//!
//! [`mirrored_opt_cost`] replays an offline optimum through the evolving
//! stacks; [`compose_full_pipeline`] runs the HST algorithm on the chain tree
//! built so far.

mod chain;
mod embedder;
mod metric;
mod mirror;
mod pipeline;

pub use chain::{
    chain_distance, embed_all, embed_point, invert_chain, lca_len, verify_stack_lemmas, Chain, StackReport, TauStack,
};
pub use embedder::{
    radius_cdf, sample_radius, separation_probability_mc, EmbedEvent, EmbedderState, SeparationEstimate,
};
pub use metric::{FiniteMetric, TRIANGLE_TOL};
pub use mirror::{
    affine_fit, conservative_opt, mirrored_opt_cost, transfer_constant_bound, ConservativeSchedule, MirrorReport,
};
pub use pipeline::{compose_full_pipeline, PipelineConfig, PipelineReport};

/// Scale parameter used throughout.
pub const DEFAULT_TAU: u32 = 4;
