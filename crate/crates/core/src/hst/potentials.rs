use std::fmt;
use std::str::FromStr;

use super::dynamics::{worst_descent_rate, FD_STEP};
use super::region::AssignmentRegion;
use super::tree::HstTree;
use crate::error::{Error, Result};
use crate::mirror_flow::Trajectory;
use crate::paging::sigma_map;

/// Which depth function `Δ` drives the auxiliary potential `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialVariant {
    /// `Δ_u = dist(𝕣, u)` in hops.
    Combinatorial,
    /// `Δ_u = log(n/N_u)`.
    Cardinality,
    /// `Δ_u = log((k+2ε)/(z_u+ε))/(1−δ)`, driven by the server measure.
    Weighted,
}

impl FromStr for PotentialVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combinatorial" => Ok(Self::Combinatorial),
            "cardinality" => Ok(Self::Cardinality),
            "weighted" => Ok(Self::Weighted),
            _ => Err(Error::Parse(format!("unknown potential variant `{s}`"))),
        }
    }
}

impl fmt::Display for PotentialVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Combinatorial => "combinatorial",
            Self::Cardinality => "cardinality",
            Self::Weighted => "weighted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub variant: PotentialVariant,
    pub k: usize,
    pub delta: f64,
    pub eps: f64,
}

impl PotentialSpec {
    pub fn new(variant: PotentialVariant, k: usize, delta: f64, eps: f64) -> Self {
        Self { variant, k, delta, eps }
    }

    /// `Δ_u` for every vertex at server measure `z`.
    pub fn depth(&self, tree: &HstTree, z: &[f64]) -> Vec<f64> {
        let n = tree.leaves().len() as f64;
        let kk = self.k as f64;
        (0..tree.len())
            .map(|u| match self.variant {
                PotentialVariant::Combinatorial => tree.depth(u) as f64,
                PotentialVariant::Cardinality => (n / tree.n_leaves(u) as f64).ln(),
                PotentialVariant::Weighted => {
                    if u == tree.root() {
                        0.0
                    } else {
                        ((kk + 2.0 * self.eps) / (z[u] + self.eps)).ln() / (1.0 - self.delta)
                    }
                }
            })
            .collect()
    }

    /// `q(v) = Δ_v − Δ_{p(v)}` (zero at the root).
    pub fn q(&self, tree: &HstTree, depth: &[f64]) -> Vec<f64> {
        (0..tree.len()).map(|v| tree.parent(v).map_or(0.0, |p| depth[v] - depth[p])).collect()
    }

    /// `q̂(u) = min_{v≠v′ children} q(v) + q(v′)`, zero with fewer than two
    /// children and unused (zero) at leaves.
    pub fn q_hat(&self, tree: &HstTree, q: &[f64]) -> Vec<f64> {
        (0..tree.len())
            .map(|u| {
                let mut c: Vec<f64> = tree.children(u).iter().map(|&v| q[v]).collect();
                if c.len() < 2 {
                    return 0.0;
                }
                c.sort_by(f64::total_cmp);
                c[0] + c[1]
            })
            .collect()
    }

    /// `Ψ` at state `x`.
    pub fn psi(&self, tree: &HstTree, region: &AssignmentRegion, x: &[f64]) -> f64 {
        let z = region.server_measure(x, self.delta, tree.root());
        match self.variant {
            PotentialVariant::Weighted => {
                let e = self.eps;
                let inv_tau = 1.0 / tree.tau();
                (0..tree.len())
                    .filter_map(|u| tree.parent(u).map(|p| (u, p)))
                    .map(|(u, p)| {
                        let extra = if tree.is_leaf(u) { 1.0 } else { 1.0 + inv_tau };
                        tree.weight(u) * ((z[u] + extra * e) * (z[u] + e).ln() + z[u] * (z[p] + e).ln())
                    })
                    .sum()
            }
            _ => {
                let d = self.depth(tree, &z);
                (0..tree.len())
                    .filter_map(|u| tree.parent(u).map(|p| (u, p)))
                    .map(|(u, p)| tree.weight(u) * (d[u] + d[p]) * region.range(u).map(|i| x[i]).sum::<f64>())
                    .sum()
            }
        }
    }

    /// `∂_t Ψ = Σ_{u≠𝕣} w_u (Δ_u + Δ_{p(u)}) Σ_i ẋ_{u,i}`. For the weighted
    /// variant this is the simplified closed form, valid on internal measures
    /// of a τ-adic tree.
    pub fn psi_rate(&self, tree: &HstTree, region: &AssignmentRegion, x: &[f64], v: &[f64]) -> f64 {
        let z = region.server_measure(x, self.delta, tree.root());
        let d = self.depth(tree, &z);
        (0..tree.len())
            .filter_map(|u| tree.parent(u).map(|p| (u, p)))
            .map(|(u, p)| tree.weight(u) * (d[u] + d[p]) * region.range(u).map(|i| v[i]).sum::<f64>())
            .sum()
    }

    /// `∂_t Ψ` by the chain rule through `z` without using level-mass
    /// conservation (weighted variant; other variants are linear in `x`).
    pub fn psi_rate_chain(&self, tree: &HstTree, region: &AssignmentRegion, x: &[f64], v: &[f64]) -> f64 {
        if self.variant != PotentialVariant::Weighted {
            return self.psi_rate(tree, region, x, v);
        }
        let root = tree.root();
        let z = region.server_measure(x, self.delta, root);
        let zd = region.server_rate(v, self.delta);
        let e = self.eps;
        let inv_tau = 1.0 / tree.tau();
        let mut s = 0.0;
        for u in 0..tree.len() {
            let Some(p) = tree.parent(u) else { continue };
            let extra = if tree.is_leaf(u) { 1.0 } else { 1.0 + inv_tau };
            let w = tree.weight(u);
            s += w * zd[u] * ((z[u] + e).ln() + 1.0 + (extra - 1.0) * e / (z[u] + e) + (z[p] + e).ln());
            if p != root {
                s += w * z[u] * zd[p] / (z[p] + e);
            }
        }
        s
    }

    /// `∂_t Ψ` by a forward difference along `v`.
    pub fn psi_rate_fd(&self, tree: &HstTree, region: &AssignmentRegion, x: &[f64], v: &[f64]) -> f64 {
        let xe: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + FD_STEP * b).collect();
        (self.psi(tree, region, &xe) - self.psi(tree, region, x)) / FD_STEP
    }
}

/// Values at one state, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEval {
    pub psi: f64,
    pub depth: Vec<f64>,
    pub q: Vec<f64>,
    pub psi_rate: f64,
    pub psi_rate_chain: f64,
    pub psi_rate_fd: f64,
}

pub fn evaluate_potential(
    spec: &PotentialSpec,
    tree: &HstTree,
    region: &AssignmentRegion,
    x: &[f64],
    v: &[f64],
) -> PotentialEval {
    let z = region.server_measure(x, spec.delta, tree.root());
    let depth = spec.depth(tree, &z);
    let q = spec.q(tree, &depth);
    PotentialEval {
        psi: spec.psi(tree, region, x),
        depth,
        q,
        psi_rate: spec.psi_rate(tree, region, x, v),
        psi_rate_chain: spec.psi_rate_chain(tree, region, x, v),
        psi_rate_fd: spec.psi_rate_fd(tree, region, x, v),
    }
}

/// Worst slacks of the depth inequalities over the samples of one or more
/// requests. Excesses are `lhs − rhs` divided by the scale
/// `1 + |lhs| + Σ|rhs terms|`, so a value `≤ 0` means the inequality holds.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthReport {
    pub samples: usize,
    /// `‖ẋ‖_{ℓ1(q w)} ≤ 3Δ_ℓ(x_ℓ+δ) + ∂Ψ`.
    pub lemma_excess: f64,
    /// `(1−δ)‖ż‖_{ℓ1(q w)} ≤ ∂Ψ − 6Δ_ℓ ∂D̂`.
    pub corollary_excess: f64,
    /// `c(1−δ)/4 ‖ż‖_{ℓ1(w)} ≤ ∂Ψ − 6Δ_ℓ ∂D̂` with the variant's `c`.
    pub uniform_excess: Option<f64>,
    /// `(1−ε)/4 log(4/3) ‖∂σ(z)‖_{ℓ1(w)} ≤ (1−δ)∂Ψ − 6 log(2+k/ε) ∂D̂`,
    /// weighted variant only: samples checked, samples within `1e−2·scale`,
    /// and the largest scaled excess.
    pub log2k: Option<(usize, usize, f64)>,
    /// Largest `|closed form − chain rule|` and `|closed form − forward
    /// difference|` of `∂Ψ`, relative to `1 + |∂Ψ|`.
    pub psi_chain_error: f64,
    pub psi_fd_error: f64,
}

impl DepthReport {
    pub fn empty() -> Self {
        Self {
            samples: 0,
            lemma_excess: f64::NEG_INFINITY,
            corollary_excess: f64::NEG_INFINITY,
            uniform_excess: None,
            log2k: None,
            psi_chain_error: 0.0,
            psi_fd_error: 0.0,
        }
    }

    pub fn merge(&mut self, o: &Self) {
        let mx = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.samples += o.samples;
        self.lemma_excess = self.lemma_excess.max(o.lemma_excess);
        self.corollary_excess = self.corollary_excess.max(o.corollary_excess);
        self.uniform_excess = mx(self.uniform_excess, o.uniform_excess);
        self.log2k = match (self.log2k, o.log2k) {
            (Some(a), Some(b)) => Some((a.0 + b.0, a.1 + b.1, a.2.max(b.2))),
            (a, b) => a.or(b),
        };
        self.psi_chain_error = self.psi_chain_error.max(o.psi_chain_error);
        self.psi_fd_error = self.psi_fd_error.max(o.psi_fd_error);
    }

    /// Fraction of checked samples satisfying the `log²k` inequality.
    pub fn log2k_pass_rate(&self) -> Option<f64> {
        self.log2k.map(|(n, ok, _)| if n == 0 { 1.0 } else { ok as f64 / n as f64 })
    }
}

/// Relative slack allowed in the `log²k` inequality.
pub const LOG2K_REL_TOL: f64 = 1e-2;

/// Pointwise check of the depth inequalities along a request trajectory.
///
/// `∂D̂` is the largest rate over integral `y ∈ A` with `y_ℓ = 0`, which is
/// the least favourable choice since every such `y` has `∂D̂ ≤ −x_ℓ < 0`.
pub fn verify_depth_inequalities(
    tree: &HstTree,
    region: &AssignmentRegion,
    spec: &PotentialSpec,
    traj: &Trajectory,
    leaf: usize,
) -> Result<DepthReport> {
    let root = tree.root();
    let delta = spec.delta;
    let lc = region.range(leaf).start;
    let mut rep = DepthReport::empty();
    let c_uniform = match spec.variant {
        PotentialVariant::Combinatorial => Some(1.0),
        PotentialVariant::Cardinality => Some(2f64.ln()),
        PotentialVariant::Weighted => None,
    };
    let log_factor = (2.0 + spec.k as f64 / spec.eps).ln();
    let mut log2k = (0usize, 0usize, f64::NEG_INFINITY);
    for s in &traj.samples {
        if s.v.iter().all(|&a| a == 0.0) {
            continue;
        }
        rep.samples += 1;
        let z = region.server_measure(&s.x, delta, root);
        let zd = region.server_rate(&s.v, delta);
        let d = spec.depth(tree, &z);
        let q = spec.q(tree, &d);
        let dpsi = spec.psi_rate(tree, region, &s.x, &s.v);
        let dd = worst_descent_rate(tree, region, leaf, delta, &s.x, &s.v)?;
        let mut x_qw = 0.0;
        let mut z_qw = 0.0;
        let mut z_w = 0.0;
        for u in 0..tree.len() {
            if u == root {
                continue;
            }
            let w = tree.weight(u);
            x_qw += q[u] * w * region.range(u).map(|i| s.v[i].abs()).sum::<f64>();
            z_qw += q[u] * w * zd[u].abs();
            z_w += w * zd[u].abs();
        }
        let dl = d[leaf];
        let scaled = |lhs: f64, terms: &[f64]| -> f64 {
            let rhs: f64 = terms.iter().sum();
            (lhs - rhs) / (1.0 + lhs.abs() + terms.iter().map(|t| t.abs()).sum::<f64>())
        };
        rep.lemma_excess = rep.lemma_excess.max(scaled(x_qw, &[3.0 * dl * (s.x[lc] + delta), dpsi]));
        rep.corollary_excess = rep.corollary_excess.max(scaled((1.0 - delta) * z_qw, &[dpsi, -6.0 * dl * dd]));
        if let Some(c) = c_uniform {
            let e = scaled(c * (1.0 - delta) / 4.0 * z_w, &[dpsi, -6.0 * dl * dd]);
            rep.uniform_excess = Some(rep.uniform_excess.map_or(e, |a| a.max(e)));
        }
        if spec.variant == PotentialVariant::Weighted {
            let eps = spec.eps;
            let mut sig = 0.0;
            for u in 0..tree.len() {
                if u == root {
                    continue;
                }
                let rate = (sigma_map((z[u] + FD_STEP * zd[u]).max(0.0), eps) - sigma_map(z[u].max(0.0), eps)) / FD_STEP;
                sig += tree.weight(u) * rate.abs();
            }
            let lhs = (1.0 - eps) / 4.0 * (4.0f64 / 3.0).ln() * sig;
            let terms = [(1.0 - delta) * dpsi, -6.0 * log_factor * dd];
            let rhs: f64 = terms.iter().sum();
            let scale = lhs.abs() + terms.iter().map(|t| t.abs()).sum::<f64>();
            let rel = if scale > 0.0 { (lhs - rhs) / scale } else { 0.0 };
            log2k.0 += 1;
            if lhs - rhs <= LOG2K_REL_TOL * scale {
                log2k.1 += 1;
            }
            log2k.2 = log2k.2.max(rel);
            let chain = spec.psi_rate_chain(tree, region, &s.x, &s.v);
            rep.psi_chain_error = rep.psi_chain_error.max((chain - dpsi).abs() / (1.0 + dpsi.abs()));
        }
        let fd = spec.psi_rate_fd(tree, region, &s.x, &s.v);
        rep.psi_fd_error = rep.psi_fd_error.max((fd - dpsi).abs() / (1.0 + dpsi.abs()));
    }
    if spec.variant == PotentialVariant::Weighted {
        rep.log2k = Some(log2k);
    }
    Ok(rep)
}
