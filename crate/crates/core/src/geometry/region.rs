use std::collections::HashSet;

use super::metric::LocalMetric;
use super::nnls::{self, NnlsOptions};
use super::sparse::SparseVec;
use crate::error::Result;

/// Outward normal of one constraint `g·x ≤ b`, with a stable identity so that
/// solvers can warm-start across nearby points.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub key: u64,
    pub normal: SparseVec,
}

/// A closed convex feasible set described through its active constraints.
///
/// Polyhedra with an explicit row list implement this directly. Regions with
/// exponentially many rows (the assignment polytope) expose a working set
/// plus a separation oracle instead.
pub trait Region: Sync {
    fn dim(&self) -> usize;

    /// Largest constraint violation at `x` (zero or negative when feasible)
    /// and a label for the offending constraint.
    fn violation(&self, x: &[f64]) -> (f64, usize);

    /// Outward normals of constraints tight at `x` within `tol`.
    fn tight_generators(&self, x: &[f64], tol: f64) -> Vec<Generator>;

    /// Appends tight constraints whose normal `g` has `g·v > tol·‖g‖`, i.e.
    /// constraints the candidate velocity `v` would immediately violate.
    /// Regions whose `tight_generators` is already complete need not override.
    fn separate(&self, _x: &[f64], _v: &[f64], _tol: f64, _out: &mut Vec<Generator>) {}

    /// Largest `h ∈ [0, h_max]` with `x + h·v` feasible, ignoring constraints
    /// already tight within `tol`.
    fn max_step(&self, x: &[f64], v: &[f64], h_max: f64, tol: f64) -> f64;

    /// Pulls a slightly infeasible `x` back into the region, moving as little
    /// as possible in the velocity norm of `metric`. Returns the remaining
    /// violation.
    fn repair(&self, x: &mut [f64], _metric: &LocalMetric) -> f64 {
        self.violation(x).0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LeastActionOptions {
    /// Slack below which a constraint counts as active.
    pub active_tol: f64,
    /// Relative tolerance for accepting a separated constraint.
    pub separation_tol: f64,
    pub max_rounds: usize,
    pub nnls: NnlsOptions,
}

impl Default for LeastActionOptions {
    fn default() -> Self {
        Self { active_tol: 1e-9, separation_tol: 1e-12, max_rounds: 64, nnls: NnlsOptions::default() }
    }
}

/// The least-action velocity at a point together with its certificate.
#[derive(Debug, Clone)]
pub struct LeastAction {
    /// `v* = H(f − u)`.
    pub velocity: Vec<f64>,
    /// `u`, the metric projection of the drive onto the normal cone.
    pub normal: Vec<f64>,
    /// Generators with a positive multiplier.
    pub generators: Vec<Generator>,
    pub multipliers: Vec<f64>,
    /// Number of generators considered in the final projection.
    pub working_set: usize,
    pub rounds: usize,
}

/// Keys of the previous passive set, reused to warm-start the next solve.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    keys: Vec<u64>,
}

/// Computes `v* = argmin{‖v − Hf‖_{x,*} : v ∈ T_K(x)}` by projecting `f`
/// onto the normal cone in the metric `⟨a,b⟩ = a·Hb` and applying `H` to the
/// remainder.
pub fn least_action<R: Region + ?Sized>(
    region: &R,
    x: &[f64],
    metric: &LocalMetric,
    f: &[f64],
    opts: &LeastActionOptions,
    warm: Option<&mut WarmStart>,
) -> Result<LeastAction> {
    let mut gens = dedup(region.tight_generators(x, opts.active_tol));
    let mut seen: HashSet<u64> = gens.iter().map(|g| g.key).collect();
    let warm_keys: Vec<u64> = warm.as_ref().map(|w| w.keys.clone()).unwrap_or_default();

    let h = metric.diag();
    let mut rounds = 0;
    let (proj, velocity) = loop {
        rounds += 1;
        let cols: Vec<SparseVec> = gens.iter().map(|g| g.normal.clone()).collect();
        let warm_idx: Vec<usize> = {
            let pos: std::collections::HashMap<u64, usize> =
                gens.iter().enumerate().map(|(i, g)| (g.key, i)).collect();
            warm_keys.iter().filter_map(|k| pos.get(k).copied()).collect()
        };
        let proj = nnls::project(&cols, f, h, &warm_idx, &opts.nnls)?;
        let velocity: Vec<f64> = f.iter().zip(&proj.u).zip(h).map(|((a, b), w)| (a - b) * w).collect();
        if rounds >= opts.max_rounds {
            break (proj, velocity);
        }
        let mut extra = Vec::new();
        region.separate(x, &velocity, opts.separation_tol, &mut extra);
        let before = gens.len();
        for g in extra {
            if seen.insert(g.key) {
                gens.push(g);
            }
        }
        if gens.len() == before {
            break (proj, velocity);
        }
    };

    let mut generators = Vec::with_capacity(proj.passive.len());
    let mut multipliers = Vec::with_capacity(proj.passive.len());
    for &j in &proj.passive {
        generators.push(gens[j].clone());
        multipliers.push(proj.lambda[j]);
    }
    if let Some(w) = warm {
        w.keys = generators.iter().map(|g| g.key).collect();
    }
    Ok(LeastAction { velocity, normal: proj.u, generators, multipliers, working_set: gens.len(), rounds })
}

fn dedup(gens: Vec<Generator>) -> Vec<Generator> {
    let mut seen = HashSet::with_capacity(gens.len());
    gens.into_iter().filter(|g| !g.normal.is_empty() && seen.insert(g.key)).collect()
}
