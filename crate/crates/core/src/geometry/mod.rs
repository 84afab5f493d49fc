//! Cone algebra for projected dynamics under a diagonal local metric.
//!
//! The central operation is [`least_action`]: given a feasible point, the
//! metric `H(x)` and a drive `f`, it returns `v* = H(f − u)` where `u` is the
//! projection of `f` onto the normal cone `N_K(x)` in the inner product
//! `⟨a,b⟩_x = a·Hb`. By Moreau's decomposition `v*` lies in the tangent cone
//! and `‖v*‖_{x,*} ≤ ‖f‖_x`.

mod cone;
mod metric;
mod nnls;
mod polyhedron;
mod region;
mod sparse;

pub use cone::{moreau_decompose, moreau_decompose_full, Decomposition, GeneratedCone};
pub use metric::LocalMetric;
pub use nnls::{project as project_onto_cone, ConeProjection, NnlsOptions};
pub use polyhedron::{Polyhedron, PolyhedronBuilder};
pub use region::{least_action, Generator, LeastAction, LeastActionOptions, Region, WarmStart};
pub use sparse::SparseVec;

use crate::error::{Error, Result};

/// Default slack below which a row counts as active.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Default tolerance on complementarity and polar membership.
pub const COMPLEMENTARITY_TOL: f64 = 1e-8;

/// The least-action velocity `v* = H(f − u)` on a polyhedron, where `u` is
/// the `H`-projection of `f` onto `N_P(x)`.
pub fn project_least_action(p: &Polyhedron, x: &[f64], metric: &LocalMetric, f: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.dim() || f.len() != p.dim() || metric.dim() != p.dim() {
        return Err(Error::Invalid("dimension mismatch".into()));
    }
    let (worst, row) = p.violation(x);
    if worst > FEASIBILITY_TOL {
        return Err(Error::Infeasible { row, violation: worst });
    }
    let la = least_action(p, x, metric, f, &LeastActionOptions::default(), None)?;
    Ok(la.velocity)
}
