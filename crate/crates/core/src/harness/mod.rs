//! Experiment orchestration: request generators, TOML experiment configs,
//! seeded batch runs with per-seed invariant checks, CSV and text output,
//! and the competitive-ratio table.
//!
//! `(config, seed)` determines every byte of the CSV and summary files.
//! Wall-clock times go to a separate timing file.

mod config;
mod experiment;
mod generators;

pub use config::{
    Algorithm, ExperimentConfig, KServerSection, OutputSection, PagingSection, PipelineSection, RequestSection,
    OUT_DIR_ENV, WORKERS_ENV,
};
pub use experiment::{
    competitive_ratio_table, depth_checks, dynamics_checks, fit_log_squared, kserver_tree, paging_checks, paging_weights, run_experiment, Check, ExperimentSummary,
    RatioRow, RatioTable, SeedRow,
};
pub use generators::{
    adversarial_leaf, adversarial_page, generate_requests, parse_trace, read_trace, seeded_rng, write_trace,
    GeneratorSpec, RequestSequence,
};
