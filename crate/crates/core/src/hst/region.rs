use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::ops::Range;

use super::tree::HstTree;
use crate::error::{invalid, Result};
use crate::geometry::{Generator, Region, SparseVec};

/// Relative precision of the step-length bisection.
const BISECT_REL: f64 = 1e-13;
/// Growth of the worst violation tolerated inside one step.
const STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Internal {
    vertex: usize,
    /// The vertex's own coordinates; empty at the root.
    own: Range<usize>,
    /// Child coordinates in (child id, copy index) order.
    kids: Vec<usize>,
    /// First row label of this vertex's prefix constraints.
    base: usize,
}

/// The assignment polytope `A` of an HST with `k` servers, over coordinates
/// `x_{u,i}` for non-root `u` and `i ∈ [N_u]`.
///
/// Per internal vertex `u` and `m ∈ [N_u]` there is one prefix constraint
/// `Σ_{i≤m} x_{u,i} ≤ (sum of the m smallest child coordinates)`, with
/// `Σ_{i≤m} x_{𝕣,i} = (m − k)₊` at the root. Together with the sortedness
/// rows `x_{u,i} ≤ x_{u,i+1}` this is equivalent to the full subset family.
/// The rows `0 ≤ x ≤ 1` are left out: the dynamics never reach them from
/// the interior of the remaining constraints.
#[derive(Debug, Clone)]
pub struct AssignmentRegion {
    k: usize,
    ranges: Vec<Range<usize>>,
    owner: Vec<usize>,
    weights: Vec<f64>,
    internal: Vec<Internal>,
    prefix_rows: usize,
    dim: usize,
    tie_tol: f64,
}

impl AssignmentRegion {
    pub fn new(tree: &HstTree, k: usize) -> Result<Self> {
        let n = tree.leaves().len();
        if k == 0 || k > n {
            return invalid(format!("need 1 ≤ k ≤ {n} servers (got {k})"));
        }
        let mut ranges = vec![0..0; tree.len()];
        let mut owner = Vec::new();
        let mut weights = Vec::new();
        let mut at = 0;
        for v in 0..tree.len() {
            if v == tree.root() {
                continue;
            }
            let nv = tree.n_leaves(v);
            ranges[v] = at..at + nv;
            at += nv;
            owner.extend(std::iter::repeat(v).take(nv));
            weights.extend(std::iter::repeat(tree.weight(v)).take(nv));
        }
        let mut internal = Vec::new();
        let mut base = 0;
        for u in 0..tree.len() {
            if tree.children(u).is_empty() {
                continue;
            }
            let kids: Vec<usize> = tree.children(u).iter().flat_map(|&c| ranges[c].clone()).collect();
            internal.push(Internal { vertex: u, own: ranges[u].clone(), kids, base });
            base += tree.n_leaves(u);
        }
        Ok(Self { k, ranges, owner, weights, internal, prefix_rows: base, dim: at, tie_tol: 1e-9 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Coordinates `x_{v,1..N_v}`; empty for the root.
    pub fn range(&self, v: usize) -> Range<usize> {
        self.ranges[v].clone()
    }

    /// Vertex owning coordinate `i`.
    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    /// `w_u` repeated over `u`'s coordinates: the weights of the multiscale
    /// entropy.
    pub fn coordinate_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_vertices(&self) -> usize {
        self.ranges.len()
    }

    /// The integral point with `count[v]` servers below each vertex, given
    /// per leaf in canonical order: `x_{u,i} = 0` for `i ≤ m_u`, else 1.
    pub fn integral_point(&self, tree: &HstTree, servers_per_leaf: &[usize]) -> Result<Vec<f64>> {
        if servers_per_leaf.len() != tree.leaves().len() {
            return invalid("server counts need one entry per leaf");
        }
        let total: usize = servers_per_leaf.iter().sum();
        if total > self.k {
            return invalid(format!("{total} servers placed but k = {}", self.k));
        }
        let mut m = vec![0usize; tree.len()];
        for (i, &l) in tree.leaves().iter().enumerate() {
            if servers_per_leaf[i] > 1 {
                return invalid("at most one server per leaf in the integral embedding");
            }
            for v in tree.path_to_root(l) {
                m[v] += servers_per_leaf[i];
            }
        }
        let mut x = vec![1.0; self.dim];
        for v in 0..tree.len() {
            for (j, i) in self.ranges[v].clone().enumerate() {
                if j < m[v] {
                    x[i] = 0.0;
                }
            }
        }
        Ok(x)
    }

    /// `z_u = Σ_i (1 − x_{u,i})/(1 − δ)` on every vertex, with the root's
    /// fixed coordinates giving `z_𝕣 = k/(1 − δ)`.
    pub fn server_measure(&self, x: &[f64], delta: f64, root: usize) -> Vec<f64> {
        let mut z: Vec<f64> = self.ranges.iter().map(|r| r.clone().map(|i| 1.0 - x[i]).sum::<f64>() / (1.0 - delta)).collect();
        z[root] = self.k as f64 / (1.0 - delta);
        z
    }

    /// Rate of the server measure, `ż_u = −Σ_i ẋ_{u,i}/(1 − δ)` (zero at the
    /// root).
    pub fn server_rate(&self, v: &[f64], delta: f64) -> Vec<f64> {
        self.ranges.iter().map(|r| -r.clone().map(|i| v[i]).sum::<f64>() / (1.0 - delta)).collect()
    }

    /// Largest `x_{u,i} − x_{u,i+1}` over all vertices.
    pub fn sortedness_slack(&self, x: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for r in &self.ranges {
            for i in r.start..r.end.saturating_sub(1) {
                worst = worst.max(x[i] - x[i + 1]);
            }
        }
        worst
    }

    fn lhs(&self, node: &Internal, x: &[f64], m: usize) -> f64 {
        if node.own.is_empty() {
            m.saturating_sub(self.k) as f64
        } else {
            x[node.own.start..node.own.start + m].iter().sum()
        }
    }

    /// Child coordinates of `node` sorted by value, ties by index.
    fn sorted_kids(node: &Internal, x: &[f64]) -> Vec<usize> {
        let mut s = node.kids.clone();
        s.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        s
    }

    fn prefix_generator(&self, node: &Internal, m: usize, set: &mut [usize]) -> Generator {
        set.sort_unstable();
        let mut pairs: Vec<(usize, f64)> = Vec::with_capacity(2 * m);
        if !node.own.is_empty() {
            pairs.extend((node.own.start..node.own.start + m).map(|i| (i, 1.0)));
        }
        pairs.extend(set.iter().map(|&i| (i, -1.0)));
        let mut h = DefaultHasher::new();
        (0u8, node.vertex, m, &*set).hash(&mut h);
        Generator { key: h.finish(), normal: SparseVec::from_pairs(pairs) }
    }

    fn sorted_generator(i: usize) -> Generator {
        let mut h = DefaultHasher::new();
        (1u8, i).hash(&mut h);
        Generator { key: h.finish(), normal: SparseVec::from_pairs(vec![(i, 1.0), (i + 1, -1.0)]) }
    }

    /// Largest violation at `x` over every row.
    fn worst(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for node in &self.internal {
            let s = Self::sorted_kids(node, x);
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for m in 1..=s.len() {
                rhs += x[s[m - 1]];
                lhs = if node.own.is_empty() { m.saturating_sub(self.k) as f64 } else { lhs + x[node.own.start + m - 1] };
                let g = lhs - rhs;
                if g > best.0 {
                    best = (g, node.base + m - 1);
                }
            }
        }
        for r in &self.ranges {
            for i in r.start..r.end.saturating_sub(1) {
                let g = x[i] - x[i + 1];
                if g > best.0 {
                    best = (g, self.prefix_rows + i);
                }
            }
        }
        best
    }

    /// Checks a user-supplied point.
    pub fn check_point(&self, x: &[f64], tol: f64) -> Result<()> {
        if x.len() != self.dim {
            return invalid(format!("point has {} coordinates, expected {}", x.len(), self.dim));
        }
        let (v, row) = self.worst(x);
        if v > tol {
            return invalid(format!("point violates row {row} by {v:e}"));
        }
        Ok(())
    }
}

impl Region for AssignmentRegion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn violation(&self, x: &[f64]) -> (f64, usize) {
        self.worst(x)
    }

    fn tight_generators(&self, x: &[f64], tol: f64) -> Vec<Generator> {
        let mut out = Vec::new();
        for node in &self.internal {
            let s = Self::sorted_kids(node, x);
            let mut rhs = 0.0;
            for m in 1..=s.len() {
                rhs += x[s[m - 1]];
                if rhs - self.lhs(node, x, m) <= tol {
                    let mut set = s[..m].to_vec();
                    out.push(self.prefix_generator(node, m, &mut set));
                }
            }
        }
        for r in &self.ranges {
            for i in r.start..r.end.saturating_sub(1) {
                if x[i + 1] - x[i] <= tol {
                    out.push(Self::sorted_generator(i));
                }
            }
        }
        out
    }

    /// For each tight prefix row, the representative whose subset takes the
    /// tied child coordinates with the smallest velocity is the one `v`
    /// pushes hardest against.
    fn separate(&self, x: &[f64], v: &[f64], tol: f64, out: &mut Vec<Generator>) {
        let tie = self.tie_tol;
        for node in &self.internal {
            let s = Self::sorted_kids(node, x);
            let mut rhs = 0.0;
            for m in 1..=s.len() {
                rhs += x[s[m - 1]];
                if rhs - self.lhs(node, x, m) > tie {
                    continue;
                }
                let theta = x[s[m - 1]];
                let below: Vec<usize> = s.iter().copied().filter(|&i| x[i] < theta - tie).collect();
                let mut tied: Vec<usize> = s.iter().copied().filter(|&i| (x[i] - theta).abs() <= tie).collect();
                let Some(r) = m.checked_sub(below.len()) else { continue };
                if r > tied.len() {
                    continue;
                }
                tied.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
                let mut set: Vec<usize> = below.into_iter().chain(tied.into_iter().take(r)).collect();
                let g = self.prefix_generator(node, m, &mut set);
                if g.normal.dot(v) > tol * g.normal.norm2() {
                    out.push(g);
                }
            }
        }
    }

    /// The worst violation along `x + h v` is convex in `h`, so its sublevel
    /// set is an interval and bisection finds where it ends.
    fn max_step(&self, x: &[f64], v: &[f64], h_max: f64, _tol: f64) -> f64 {
        let level = self.worst(x).0.max(0.0) + STEP_SLACK;
        let at = |h: f64| -> f64 {
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
            self.worst(&y).0
        };
        if at(h_max) <= level {
            return h_max;
        }
        let (mut lo, mut hi) = (0.0, h_max);
        while hi - lo > BISECT_REL * h_max {
            let mid = 0.5 * (lo + hi);
            if at(mid) <= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Brute-force membership over the full subset family, for small trees.
/// Returns the largest `Σ_{i≤|S|} x_{u,i} − Σ_S x` over all `u` and all
/// nonempty `S ⊆ χ(u)`.
pub fn full_family_violation(region: &AssignmentRegion, x: &[f64]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for node in &region.internal {
        let c = node.kids.len();
        if c > 20 {
            return invalid("full subset family is too large to enumerate");
        }
        for mask in 1u32..(1 << c) {
            let m = mask.count_ones() as usize;
            let sum: f64 = (0..c).filter(|b| mask >> b & 1 == 1).map(|b| x[node.kids[b]]).sum();
            worst = worst.max(region.lhs(node, x, m) - sum);
        }
    }
    Ok(worst)
}

/// Spot check that tight subsets are closed under union: over every
/// internal vertex with at most `max_kids` child coordinates, enumerates the
/// subsets whose constraint is tight within `tol` and returns the number of
/// tight pairs examined and the largest slack of their unions.
pub fn union_closure_excess(region: &AssignmentRegion, x: &[f64], tol: f64, max_kids: usize) -> (usize, f64) {
    const MAX_TIGHT: usize = 256;
    let mut pairs = 0;
    let mut worst = 0.0f64;
    for node in &region.internal {
        let c = node.kids.len();
        if c > max_kids.min(20) {
            continue;
        }
        let mut sums = vec![0.0; 1 << c];
        let mut slack = vec![0.0; 1 << c];
        let mut tight = Vec::new();
        for mask in 1usize..(1 << c) {
            let low = mask.trailing_zeros() as usize;
            sums[mask] = sums[mask & (mask - 1)] + x[node.kids[low]];
            slack[mask] = sums[mask] - region.lhs(node, x, mask.count_ones() as usize);
            if slack[mask] <= tol && tight.len() < MAX_TIGHT {
                tight.push(mask);
            }
        }
        for (a, &s) in tight.iter().enumerate() {
            for &t in &tight[a + 1..] {
                pairs += 1;
                worst = worst.max(slack[s | t]);
            }
        }
    }
    (pairs, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn layout_counts_coordinates() {
        let t = HstTree::complete(2, 4, 2.0, 8.0).unwrap();
        let a = AssignmentRegion::new(&t, 3).unwrap();
        assert_eq!(a.dim(), 64);
        assert_eq!(a.internal.len(), 15);
        assert_eq!(a.prefix_rows, 16 + 2 * 8 + 4 * 4 + 8 * 2);
        let leaf = t.leaves()[5];
        assert_eq!(a.range(leaf).len(), 1);
        assert_eq!(a.owner(a.range(leaf).start), leaf);
    }

    #[test]
    fn integral_points_are_feasible_and_measure_servers() {
        let t = HstTree::complete(2, 3, 2.0, 4.0).unwrap();
        let a = AssignmentRegion::new(&t, 2).unwrap();
        let x = a.integral_point(&t, &[1, 0, 0, 0, 0, 1, 0, 0]).unwrap();
        assert!(a.violation(&x).0 <= 0.0);
        assert!(full_family_violation(&a, &x).unwrap() <= 0.0);
        let z = a.server_measure(&x, 0.0, t.root());
        let top = t.children(t.root());
        assert_eq!((z[top[0]], z[top[1]]), (1.0, 1.0));
        assert_eq!(z[t.root()], 2.0);
        assert!(a.integral_point(&t, &[1, 1, 1, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn prefix_family_agrees_with_full_family_on_sorted_points() {
        let t = HstTree::complete(3, 2, 2.0, 2.0).unwrap();
        let a = AssignmentRegion::new(&t, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let mut x: Vec<f64> = (0..a.dim()).map(|_| rng.gen::<f64>()).collect();
            for v in 0..t.len() {
                let r = a.range(v);
                x[r].sort_by(f64::total_cmp);
            }
            let full = full_family_violation(&a, &x).unwrap();
            let prefix = a.violation(&x).0;
            assert!((full.max(0.0) - prefix.max(0.0)).abs() < 1e-12, "{full} vs {prefix}");
        }
    }

    #[test]
    fn separation_finds_the_tied_representative() {
        // u has children a, b with equal coordinates, so the row (u, 1) ties
        // between them. Coordinates: u = 0..2, a = 2, b = 3, c = 4, d = 5.
        let e: Vec<(String, String, f64)> = [("r", "u", 2.0), ("u", "a", 1.0), ("u", "b", 1.0), ("r", "c", 2.0), ("c", "d", 1.0)]
            .iter()
            .map(|(p, c, w)| (p.to_string(), c.to_string(), *w))
            .collect();
        let t = HstTree::from_edges("r", &e, 2.0).unwrap();
        let a = AssignmentRegion::new(&t, 1).unwrap();
        let x = vec![0.5, 0.5, 0.5, 0.5, 1.0, 1.0];
        assert!(a.violation(&x).0 <= 1e-15);
        let canonical = SparseVec::from_pairs(vec![(0, 1.0), (2, -1.0)]);
        assert!(a.tight_generators(&x, 1e-9).iter().any(|g| g.normal == canonical));
        let mut extra = Vec::new();
        a.separate(&x, &[0.0, 0.0, 0.0, -1.0, 0.0, 0.0], 1e-12, &mut extra);
        let flipped = SparseVec::from_pairs(vec![(0, 1.0), (3, -1.0)]);
        assert!(extra.iter().any(|g| g.normal == flipped));
        assert!(!extra.iter().any(|g| g.normal == canonical));
    }

    #[test]
    fn max_step_stops_where_order_flips() {
        let e = vec![("r".into(), "a".into(), 1.0), ("r".into(), "b".into(), 1.0)];
        let t = HstTree::from_edges("r", &e, 2.0).unwrap();
        let a = AssignmentRegion::new(&t, 1).unwrap();
        // x_a + x_b ≥ 1 and both ≥ 0 (root rows with k = 1).
        let h = a.max_step(&[0.3, 0.7], &[1.0, -1.0], 10.0, 1e-9);
        assert!((h - 0.7).abs() < 1e-10, "{h}");
        assert_eq!(a.max_step(&[0.3, 0.9], &[1.0, 1.0], 10.0, 1e-9), 10.0);
    }
}
