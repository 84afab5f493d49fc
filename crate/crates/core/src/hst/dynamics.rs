use super::region::AssignmentRegion;
use super::tree::HstTree;
use crate::error::{invalid, Error, Result};
use crate::geometry::Region;
use crate::mirror_flow::{integrate, ConstantControl, EntropicField, Event, Sample, StepPolicy, StopReason, Trajectory};

/// Forward-difference step used for rates of nonlinear functionals.
pub const FD_STEP: f64 = 1e-7;

/// The shifted multiscale entropy `Φ(x) = Σ_u w_u Σ_i (x_{u,i}+δ) log(x_{u,i}+δ)`.
pub fn multiscale_entropy(region: &AssignmentRegion, delta: f64) -> Result<EntropicField> {
    EntropicField::new(region.coordinate_weights().to_vec(), delta)
}

/// Step policy for HST requests: steps are limited only by the relative
/// change of `x + δ`, faces and the stopping event.
pub fn default_policy(tree: &HstTree) -> StepPolicy {
    let wmax = (0..tree.len()).map(|v| tree.weight(v)).fold(0.0, f64::max);
    StepPolicy { h_max: 10.0 * wmax.max(1.0), ..StepPolicy::default() }
}

/// Integrates `∂_t x = ∇²Φ(x)⁻¹(−e_{ℓ,1} − λ)` on the assignment polytope
/// from `x` until `x_{ℓ,1} = δ`. A leaf already at or below `δ` is served by
/// the identity.
pub fn serve_leaf_request(
    tree: &HstTree,
    region: &AssignmentRegion,
    x: &[f64],
    leaf: usize,
    delta: f64,
    policy: &StepPolicy,
) -> Result<(Vec<f64>, Trajectory)> {
    if !tree.is_leaf(leaf) {
        return invalid(format!("vertex {} is not a leaf", tree.label(leaf)));
    }
    if x.len() != region.dim() {
        return invalid("state has the wrong dimension");
    }
    let c = region.range(leaf).start;
    let field = multiscale_entropy(region, delta)?;
    if x[c] <= delta {
        let s = Sample {
            t: 0.0,
            x: x.to_vec(),
            v: vec![0.0; x.len()],
            generators: Vec::new(),
            multipliers: Vec::new(),
            step: 0.0,
            residual: region.violation(x).0.max(0.0),
        };
        let stop = StopReason::Event { index: 0, label: "served".into() };
        return Ok((x.to_vec(), Trajectory { samples: vec![s], stop, repairs: 0 }));
    }
    let control = ConstantControl::negative_unit(x.len(), c);
    let events = [Event::coordinate_below(c, delta)];
    // By the Bregman descent bound the request ends well before this.
    let horizon = 1e9;
    let mut traj = integrate(region, &field, &control, x, &events, horizon, policy)?;
    if traj.stop == StopReason::Horizon {
        return Err(Error::EventNotReached { t: traj.terminal_time() });
    }
    let last = traj.samples.last_mut().expect("nonempty trajectory");
    last.x[c] = delta;
    Ok((last.x.clone(), traj))
}

/// Pointwise checks of the structural lemmas along one request.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsReport {
    pub samples: usize,
    /// Largest `x_{u,i} − x_{u,i+1}`.
    pub sortedness_slack: f64,
    /// Largest change of `Σ_{u at depth h} z_u` from its initial value.
    pub level_mass_drift: f64,
    /// Largest violation of the flow pattern: `−ż_u` on ancestors of the
    /// request (the leaf included) and `ż_u` elsewhere, from finite
    /// differences between samples.
    pub sign_excess: f64,
    /// Largest `−ẋ_{ℓ′}` over leaves other than the request.
    pub leaf_monotonicity_excess: f64,
    /// Largest `x − 1`.
    pub upper_excess: f64,
    /// Largest `δ − x_{ℓ′}(T)` over leaves that started at or above `δ`.
    pub floor_deficit: f64,
    /// Largest constraint violation.
    pub feasibility: f64,
    /// Largest `∂_t D̂_Φ(y; x) + x_{ℓ,1}` over integral `y ∈ A` with
    /// `y_ℓ = 0`, when computed.
    pub descent_excess: Option<f64>,
}

impl DynamicsReport {
    pub fn empty() -> Self {
        Self {
            samples: 0,
            sortedness_slack: f64::NEG_INFINITY,
            level_mass_drift: 0.0,
            sign_excess: f64::NEG_INFINITY,
            leaf_monotonicity_excess: f64::NEG_INFINITY,
            upper_excess: f64::NEG_INFINITY,
            floor_deficit: f64::NEG_INFINITY,
            feasibility: f64::NEG_INFINITY,
            descent_excess: None,
        }
    }

    pub fn merge(&mut self, o: &Self) {
        self.samples += o.samples;
        self.sortedness_slack = self.sortedness_slack.max(o.sortedness_slack);
        self.level_mass_drift = self.level_mass_drift.max(o.level_mass_drift);
        self.sign_excess = self.sign_excess.max(o.sign_excess);
        self.leaf_monotonicity_excess = self.leaf_monotonicity_excess.max(o.leaf_monotonicity_excess);
        self.upper_excess = self.upper_excess.max(o.upper_excess);
        self.floor_deficit = self.floor_deficit.max(o.floor_deficit);
        self.feasibility = self.feasibility.max(o.feasibility);
        self.descent_excess = match (self.descent_excess, o.descent_excess) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Checks sortedness, per-level mass, the flow sign pattern, leaf
/// monotonicity and (when `descent` is set) the Bregman descent bound along
/// a request trajectory. `x0` is the state before the request; it also fixes
/// the reference level masses.
pub fn verify_dynamics_lemmas(
    tree: &HstTree,
    region: &AssignmentRegion,
    traj: &Trajectory,
    leaf: usize,
    delta: f64,
    descent: bool,
) -> Result<DynamicsReport> {
    let mut rep = DynamicsReport::empty();
    let levels = tree.levels();
    let root = tree.root();
    let on_path = {
        let mut p = vec![false; tree.len()];
        for v in tree.path_to_root(leaf) {
            p[v] = true;
        }
        p
    };
    let level_sums = |z: &[f64]| -> Vec<f64> { levels.iter().map(|lv| lv.iter().map(|&u| z[u]).sum()).collect() };
    let first = &traj.samples[0];
    let ref_levels = level_sums(&region.server_measure(&first.x, delta, root));
    let leaf_coords: Vec<(usize, usize)> =
        tree.leaves().iter().map(|&l| (l, region.range(l).start)).filter(|&(l, _)| l != leaf).collect();
    let mut prev: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut worst_descent = f64::NEG_INFINITY;
    for s in &traj.samples {
        rep.samples += 1;
        rep.sortedness_slack = rep.sortedness_slack.max(region.sortedness_slack(&s.x));
        rep.upper_excess = rep.upper_excess.max(s.x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b - 1.0)));
        rep.feasibility = rep.feasibility.max(region.violation(&s.x).0);
        let z = region.server_measure(&s.x, delta, root);
        for (a, b) in level_sums(&z).iter().zip(&ref_levels) {
            rep.level_mass_drift = rep.level_mass_drift.max((a - b).abs());
        }
        if let Some((t0, x0, z0)) = &prev {
            let dt = s.t - t0;
            if dt > 0.0 {
                for u in 0..tree.len() {
                    let rate = (z[u] - z0[u]) / dt;
                    let ex = if on_path[u] { -rate } else { rate };
                    rep.sign_excess = rep.sign_excess.max(ex);
                }
                for &(_, c) in &leaf_coords {
                    rep.leaf_monotonicity_excess = rep.leaf_monotonicity_excess.max(-(s.x[c] - x0[c]) / dt);
                }
            }
        }
        // A stopped sample (the request was already served) has nothing to
        // descend.
        if descent && s.v.iter().any(|&a| a != 0.0) {
            let slope = worst_descent_rate(tree, region, leaf, delta, &s.x, &s.v)?;
            worst_descent = worst_descent.max(slope + s.x[region.range(leaf).start]);
        }
        prev = Some((s.t, s.x.clone(), z));
    }
    let last = traj.last();
    for &(_, c) in &leaf_coords {
        if first.x[c] >= delta {
            rep.floor_deficit = rep.floor_deficit.max(delta - last.x[c]);
        }
    }
    if descent {
        rep.descent_excess = Some(worst_descent);
    }
    Ok(rep)
}

/// `max_y ∂_t D̂_Φ(y; x)` over integral `y ∈ A` with `y_{ℓ,1} = 0`, where the
/// rate is a forward difference along `v`.
///
/// `D̂(y; x) = −Φ(x) − ⟨∇Φ(x), y − x⟩` is affine in `y`, and integral points
/// of `A` are server placements: `y_{u,i} = 1` exactly for `i > m_u` where
/// `m_u` counts servers below `u`. The maximum is a tree knapsack over the
/// counts `m_u`.
pub fn worst_descent_rate(
    tree: &HstTree,
    region: &AssignmentRegion,
    leaf: usize,
    delta: f64,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    let w = region.coordinate_weights();
    let eta = FD_STEP;
    let xe: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eta * b).collect();
    let phi = |y: &[f64]| -> f64 { y.iter().zip(w).map(|(a, wi)| wi * (a + delta) * (a + delta).ln()).sum() };
    let grad = |y: &[f64], i: usize| w[i] * (1.0 + (y[i] + delta).ln());
    let mut base = -phi(&xe) + phi(x);
    for i in 0..x.len() {
        base += grad(&xe, i) * xe[i] - grad(x, i) * x[i];
    }
    let coef: Vec<f64> = (0..x.len()).map(|i| -(grad(&xe, i) - grad(x, i))).collect();
    let best = best_integral(tree, region, &coef, leaf)?;
    Ok((base + best) / eta)
}

/// `max Σ coef·y` over integral `y ∈ A` with a server on `leaf`.
pub fn best_integral(tree: &HstTree, region: &AssignmentRegion, coef: &[f64], leaf: usize) -> Result<f64> {
    let k = region.k();
    let neg = f64::NEG_INFINITY;
    // table[v][m]: best value inside the subtree of v (own coordinates
    // included) with m servers below v.
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(tree.depth(v)));
    for v in order {
        let cap = tree.n_leaves(v).min(k);
        let mut acc = vec![neg; cap + 1];
        if tree.children(v).is_empty() {
            acc[0] = if v == leaf { neg } else { 0.0 };
            if cap >= 1 {
                acc[1] = 0.0;
            }
        } else {
            acc[0] = 0.0;
            let mut reach = 0;
            for &c in tree.children(v) {
                let tc = std::mem::take(&mut table[c]);
                let mut next = vec![neg; cap + 1];
                for a in 0..=reach {
                    if acc[a] == neg {
                        continue;
                    }
                    for (b, &val) in tc.iter().enumerate() {
                        if a + b > cap || val == neg {
                            continue;
                        }
                        next[a + b] = next[a + b].max(acc[a] + val);
                    }
                }
                reach = (reach + tc.len() - 1).min(cap);
                acc = next;
            }
        }
        if v != tree.root() {
            let r = region.range(v);
            for (m, slot) in acc.iter_mut().enumerate() {
                if *slot != neg {
                    *slot += (r.start + m..r.end).map(|i| coef[i]).sum::<f64>();
                }
            }
        }
        table[v] = acc;
    }
    let best = table[tree.root()].iter().copied().fold(neg, f64::max);
    if best == neg {
        return invalid("no integral placement serves the request");
    }
    Ok(best)
}

/// `sup_x max_{u,i} |1 + log(x_{u,i} + δ)|`, the `ℓ∞(1/w)` norm of `∇Φ`,
/// over the given points of `A`.
pub fn entropy_gradient_bound(points: &[Vec<f64>], delta: f64) -> f64 {
    points.iter().flat_map(|x| x.iter()).map(|&a| (1.0 + (a + delta).ln()).abs()).fold(0.0, f64::max)
}

/// The bound `1 + log(1/δ) + log 2` on the entropy gradient.
pub fn entropy_gradient_ceiling(delta: f64) -> f64 {
    1.0 + (1.0 / delta).ln() + 2f64.ln()
}

/// `|D̂_Φ(y′; x) − D̂_Φ(y; x)| / ‖y′ − y‖_{ℓ1(w)}` for two points of `A`,
/// which the gradient bound caps at [`entropy_gradient_ceiling`].
pub fn opt_move_ratio(region: &AssignmentRegion, x: &[f64], y: &[f64], y2: &[f64], delta: f64) -> f64 {
    let w = region.coordinate_weights();
    let (mut change, mut norm) = (0.0, 0.0);
    for i in 0..x.len() {
        let d = y2[i] - y[i];
        change += w[i] * (1.0 + (x[i] + delta).ln()) * d;
        norm += w[i] * d.abs();
    }
    if norm == 0.0 {
        0.0
    } else {
        change.abs() / norm
    }
}

/// Random points of `A`: convex combinations of random integral placements
/// with at most `k` servers.
pub fn sample_assignment_points<R: rand::Rng>(
    tree: &HstTree,
    region: &AssignmentRegion,
    rng: &mut R,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = tree.leaves().len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let parts = rng.gen_range(1..=4);
        let mut acc = vec![0.0; region.dim()];
        let mut total = 0.0;
        for _ in 0..parts {
            let m = rng.gen_range(0..=region.k());
            let mut leaves: Vec<usize> = (0..n).collect();
            for i in 0..m {
                let j = rng.gen_range(i..n);
                leaves.swap(i, j);
            }
            let mut counts = vec![0usize; n];
            for &l in &leaves[..m] {
                counts[l] = 1;
            }
            let p = region.integral_point(tree, &counts)?;
            let a: f64 = rng.gen::<f64>() + 1e-3;
            total += a;
            for (s, q) in acc.iter_mut().zip(&p) {
                *s += a * q;
            }
        }
        acc.iter_mut().for_each(|s| *s /= total);
        out.push(acc);
    }
    Ok(out)
}
