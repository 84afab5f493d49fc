use super::tree::HstTree;
use crate::error::{invalid, Error, Result};
use crate::paging::sigma_map;

/// Mass below which transport bookkeeping treats a quantity as zero.
const MASS_TOL: f64 = 1e-12;
/// Allowed negative residual `y_u − Σ_c y_c` before a vector is rejected as
/// a supermeasure.
pub const SUPERMEASURE_TOL: f64 = 1e-9;
/// Largest supermeasure defect after σ that is repaired rather than
/// rejected.
const REPAIR_TOL: f64 = 1e-6;

/// `ẑ_v = Σ_{ℓ below v} z_ℓ` for a leaf measure indexed in canonical leaf
/// order.
pub fn lift(tree: &HstTree, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != tree.leaves().len() {
        return invalid(format!("leaf measure has {} entries for {} leaves", z.len(), tree.leaves().len()));
    }
    let mut out = vec![0.0; tree.len()];
    for (i, &l) in tree.leaves().iter().enumerate() {
        for v in tree.path_to_root(l) {
            out[v] += z[i];
        }
    }
    Ok(out)
}

/// `W¹(y, z) = ‖ŷ − ẑ‖_{ℓ1(w)}` for leaf measures of equal mass.
pub fn w1_distance(tree: &HstTree, y: &[f64], z: &[f64]) -> Result<f64> {
    let (a, b) = (lift(tree, y)?, lift(tree, z)?);
    let r = tree.root();
    if (a[r] - b[r]).abs() > 1e-9 * a[r].abs().max(1.0) {
        return invalid(format!("W¹ needs equal masses ({} vs {})", a[r], b[r]));
    }
    Ok((0..tree.len()).map(|v| tree.weight(v) * (a[v] - b[v]).abs()).sum())
}

/// `Σ_v w_v |a_v − b_v|` for two vertex measures.
pub fn weighted_l1(tree: &HstTree, a: &[f64], b: &[f64]) -> f64 {
    (0..tree.len()).map(|v| tree.weight(v) * (a[v] - b[v]).abs()).sum()
}

/// Most negative `y_u − Σ_{children} y_c` over internal vertices, with the
/// vertex attaining it.
pub fn supermeasure_defect(tree: &HstTree, y: &[f64]) -> (f64, usize) {
    let mut worst = (f64::INFINITY, tree.root());
    for u in 0..tree.len() {
        if tree.children(u).is_empty() {
            continue;
        }
        let r = y[u] - tree.children(u).iter().map(|&c| y[c]).sum::<f64>();
        if r < worst.0 {
            worst = (r, u);
        }
    }
    worst
}

/// Componentwise `σ` of an internal measure of mass `k + ε′` with
/// `ε′ ≤ eps`. The root is pinned to exactly `k` and the result is checked
/// to be a supermeasure.
pub fn sigma_round_measure(tree: &HstTree, z: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&eps) {
        return invalid(format!("σ needs 0 ≤ ε < 1 (got {eps})"));
    }
    if z.len() != tree.len() {
        return invalid("vertex measure has the wrong length");
    }
    let r = tree.root();
    let k = z[r].floor();
    if z[r] - k > eps + 1e-12 {
        return invalid(format!("root mass {} is not within ε of an integer", z[r]));
    }
    let mut y: Vec<f64> = z.iter().map(|&v| sigma_map(v.max(0.0), eps)).collect();
    y[r] = k;
    // The integrator keeps z an internal measure only up to its drift, which
    // σ can turn into a tiny supermeasure defect. Shrink children top-down
    // to absorb it; anything larger than REPAIR_TOL is reported below.
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by_key(|&v| tree.depth(v));
    for u in order {
        let s: f64 = tree.children(u).iter().map(|&c| y[c]).sum();
        if s > y[u] && s - y[u] <= REPAIR_TOL {
            let f = y[u] / s;
            for &c in tree.children(u) {
                y[c] *= f;
            }
        }
    }
    let (d, u) = supermeasure_defect(tree, &y);
    if d < -SUPERMEASURE_TOL {
        return Err(Error::Internal(format!(
            "σ-rounded measure fails the supermeasure inequality at {} by {d:e}",
            tree.label(u)
        )));
    }
    Ok(y)
}

/// Lazy realisation of an internal supermeasure path by actual mass on the
/// vertices of the tree.
///
/// The state is a vertex measure `P` of mass `k` with subtree sums
/// `P̂_v ≥ y_v` for every vertex. Initially `P` is the residual
/// `ỹ_u = y_u − Σ_c y_c`, i.e. parked mass sits where `y` leaves it. When a
/// new `y` creates a deficit at `v`, mass is pulled into `v` from the nearest
/// source: first mass parked at an ancestor, then surplus in sibling subtrees.
/// Nothing moves otherwise. `P` restricted to leaves dominates `y` on leaves.
#[derive(Debug, Clone)]
pub struct VertexTransport {
    mass: Vec<f64>,
    sub: Vec<f64>,
    cost: f64,
    /// Vertices by decreasing depth.
    order: Vec<usize>,
}

impl VertexTransport {
    pub fn new(tree: &HstTree, y0: &[f64]) -> Result<Self> {
        if y0.len() != tree.len() {
            return invalid("supermeasure has the wrong length");
        }
        let mut mass = vec![0.0; tree.len()];
        for u in 0..tree.len() {
            let r = y0[u] - tree.children(u).iter().map(|&c| y0[c]).sum::<f64>();
            if r < -SUPERMEASURE_TOL {
                return invalid(format!("negative residual {r:e} at vertex {}", tree.label(u)));
            }
            mass[u] = r.max(0.0);
        }
        let mut order: Vec<usize> = (0..tree.len()).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(tree.depth(v)));
        let mut t = Self { mass, sub: Vec::new(), cost: 0.0, order };
        t.resum(tree);
        Ok(t)
    }

    fn resum(&mut self, tree: &HstTree) {
        self.sub = self.mass.clone();
        for &v in &self.order {
            if let Some(p) = tree.parent(v) {
                self.sub[p] += self.sub[v];
            }
        }
    }

    /// Total transport cost so far.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Current mass on every vertex.
    pub fn placement(&self) -> &[f64] {
        &self.mass
    }

    /// Mass sitting on leaves, in canonical leaf order.
    pub fn leaf_measure(&self, tree: &HstTree) -> Vec<f64> {
        tree.leaves().iter().map(|&l| self.mass[l]).collect()
    }

    /// Appends zero mass for vertices added to the tree since construction.
    pub fn grow(&mut self, tree: &HstTree) {
        self.mass.resize(tree.len(), 0.0);
        self.order = (0..tree.len()).collect();
        self.order.sort_by_key(|&v| std::cmp::Reverse(tree.depth(v)));
        self.resum(tree);
    }

    fn shift(&mut self, tree: &HstTree, from: usize, to: usize, amount: f64) {
        self.mass[from] -= amount;
        self.mass[to] += amount;
        for v in tree.path_to_root(from) {
            self.sub[v] -= amount;
        }
        for v in tree.path_to_root(to) {
            self.sub[v] += amount;
        }
        self.cost += amount * tree.distance(from, to);
    }

    /// Follows surplus downward from `c` to a vertex holding parked mass.
    /// Returns the vertex and how much may be taken without creating a
    /// deficit on the way.
    fn find_source(&self, tree: &HstTree, c: usize, y: &[f64], cap: f64) -> Option<(usize, f64)> {
        let mut cur = c;
        let mut cap = cap.min(self.sub[c] - y[c]);
        loop {
            if cap <= MASS_TOL {
                return None;
            }
            if self.mass[cur] > MASS_TOL {
                return Some((cur, cap.min(self.mass[cur])));
            }
            let next = tree
                .children(cur)
                .iter()
                .copied()
                .max_by(|&a, &b| (self.sub[a] - y[a]).total_cmp(&(self.sub[b] - y[b])))
                .filter(|&ch| self.sub[ch] - y[ch] > MASS_TOL)?;
            cap = cap.min(self.sub[next] - y[next]);
            cur = next;
        }
    }

    /// Moves mass so that `P̂ ≥ y` again and returns the cost of this update.
    pub fn update(&mut self, tree: &HstTree, y: &[f64]) -> Result<f64> {
        if y.len() != tree.len() {
            return invalid("supermeasure has the wrong length");
        }
        let (d, u) = supermeasure_defect(tree, y);
        if d < -SUPERMEASURE_TOL {
            return invalid(format!("negative residual {d:e} at vertex {}", tree.label(u)));
        }
        let root = tree.root();
        if y[root] > self.sub[root] + 1e-9 {
            return invalid(format!("supermeasure mass {} exceeds the transported mass {}", y[root], self.sub[root]));
        }
        let before = self.cost;
        let order = self.order.clone();
        for v in order {
            let mut need = y[v] - self.sub[v];
            if need <= MASS_TOL {
                continue;
            }
            let mut child = v;
            while need > MASS_TOL {
                let Some(a) = tree.parent(child) else {
                    // Rounding in σ and in the subtree sums can leave a
                    // deficit at the level of the supermeasure tolerance.
                    if need <= SUPERMEASURE_TOL * y[root].max(1.0) {
                        break;
                    }
                    return Err(Error::Internal(format!(
                        "no source for deficit {need:e} at vertex {}",
                        tree.label(v)
                    )));
                };
                let take = need.min(self.mass[a]);
                if take > MASS_TOL {
                    self.shift(tree, a, v, take);
                    need -= take;
                }
                for &sib in tree.children(a) {
                    if sib == child {
                        continue;
                    }
                    while need > MASS_TOL {
                        let Some((src, amt)) = self.find_source(tree, sib, y, need) else { break };
                        self.shift(tree, src, v, amt);
                        need -= amt;
                    }
                }
                child = a;
            }
        }
        Ok(self.cost - before)
    }
}

/// A leaf trajectory realising a supermeasure path.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    /// Mass on leaves after each input point.
    pub leaves: Vec<Vec<f64>>,
    /// Mass still parked on internal vertices after each input point.
    pub parked: Vec<f64>,
    pub cost: f64,
    /// `Σ_t ‖y_{t+1} − y_t‖_{ℓ1(w)}`.
    pub input_variation: f64,
}

/// Converts a path of internal supermeasures into server mass on the tree,
/// see [`VertexTransport`].
pub fn supermeasure_to_leaves(tree: &HstTree, path: &[Vec<f64>]) -> Result<LeafPath> {
    let Some(first) = path.first() else {
        return invalid("empty supermeasure path");
    };
    let mut tr = VertexTransport::new(tree, first)?;
    let mut out = LeafPath { leaves: Vec::new(), parked: Vec::new(), cost: 0.0, input_variation: 0.0 };
    let mut prev: Option<&Vec<f64>> = None;
    for y in path {
        tr.update(tree, y)?;
        if let Some(p) = prev {
            out.input_variation += weighted_l1(tree, p, y);
        }
        let leaves = tr.leaf_measure(tree);
        out.parked.push(tr.sub[tree.root()] - leaves.iter().sum::<f64>());
        out.leaves.push(leaves);
        prev = Some(y);
    }
    out.cost = tr.cost();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tree6() -> HstTree {
        let e: Vec<(String, String, f64)> = vec![
            ("r", "a", 4.0),
            ("r", "b", 4.0),
            ("a", "a0", 2.0),
            ("a", "a1", 2.0),
            ("a", "a2", 2.0),
            ("b", "b0", 2.0),
            ("b", "b1", 2.0),
            ("b", "b2", 2.0),
        ]
        .into_iter()
        .map(|(p, c, w)| (p.to_string(), c.to_string(), w))
        .collect();
        HstTree::from_edges("r", &e, 2.0).unwrap()
    }

    #[test]
    fn lift_of_point_mass_is_its_root_path() {
        let t = tree6();
        let mut z = vec![0.0; 6];
        z[4] = 1.0;
        let l = lift(&t, &z).unwrap();
        let path = t.path_to_root(t.leaves()[4]);
        for v in 0..t.len() {
            assert_eq!(l[v], if path.contains(&v) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn lift_matches_direct_subtree_sums() {
        let t = HstTree::complete(2, 3, 2.0, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
        let l = lift(&t, &z).unwrap();
        for v in 0..t.len() {
            let direct: f64 = (0..8).filter(|&i| t.is_ancestor(v, t.leaves()[i])).map(|i| z[i]).sum();
            assert!((l[v] - direct).abs() < 1e-14);
        }
        let u = vec![3.0 / 8.0; 8];
        let lu = lift(&t, &u).unwrap();
        for v in 0..t.len() {
            assert!((lu[v] - 3.0 * t.n_leaves(v) as f64 / 8.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sibling_move_costs_twice_the_child_weight() {
        let t = tree6();
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let z = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(w1_distance(&t, &y, &z).unwrap(), 4.0);
        assert_eq!(w1_distance(&t, &y, &y).unwrap(), 0.0);
        assert!(w1_distance(&t, &y, &[0.5; 6]).is_err());
    }

    #[test]
    fn w1_matches_flow_oracle_on_integral_grid() {
        // Masses are multiples of 1/q, so the integral min-cost flow is the
        // exact transportation optimum.
        use crate::offline_opt::mcf::MinCostFlow;
        let t = tree6();
        let d = t.leaf_metric();
        let q = 1000i64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut a: Vec<i64> = (0..6).map(|_| rng.gen_range(0..q)).collect();
            let mut b: Vec<i64> = (0..6).map(|_| rng.gen_range(0..q)).collect();
            let (sa, sb): (i64, i64) = (a.iter().sum(), b.iter().sum());
            if sa > sb {
                b[0] += sa - sb;
            } else {
                a[0] += sb - sa;
            }
            let total: i64 = a.iter().sum();
            let mut g = MinCostFlow::new(14);
            for i in 0..6 {
                g.add_edge(12, i, a[i], 0);
                g.add_edge(6 + i, 13, b[i], 0);
                for j in 0..6 {
                    g.add_edge(i, 6 + j, total, d[i][j] as i64);
                }
            }
            let (f, c) = g.run(12, 13, total, false).unwrap();
            assert_eq!(f, total);
            let ya: Vec<f64> = a.iter().map(|&v| v as f64 / q as f64).collect();
            let yb: Vec<f64> = b.iter().map(|&v| v as f64 / q as f64).collect();
            let w = w1_distance(&t, &ya, &yb).unwrap();
            assert!((w - c as f64 / q as f64).abs() < 1e-8, "{w} vs {}", c as f64 / q as f64);
        }
    }

    #[test]
    fn sigma_rounding_keeps_integral_measures_and_zeroes_thin_subtrees() {
        let t = tree6();
        let z = lift(&t, &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(sigma_round_measure(&t, &z, 0.3).unwrap(), z);
        let mut z = lift(&t, &[1.0, 0.0, 0.9, 0.05, 0.03, 0.02]).unwrap();
        z[t.root()] = 2.0;
        let y = sigma_round_measure(&t, &z, 0.2).unwrap();
        let b = t.find("b").unwrap();
        for v in [b, t.find("b0").unwrap(), t.find("b1").unwrap()] {
            assert_eq!(y[v], 0.0);
        }
        assert_eq!(y[t.root()], 2.0);
    }

    #[test]
    fn sigma_rounding_of_random_internal_measures_is_a_supermeasure() {
        let t = HstTree::complete(2, 4, 2.0, 8.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let eps = 0.25;
        for _ in 0..200 {
            let mut z: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = z.iter().sum();
            let target = 3.0 + eps * rng.gen::<f64>();
            z.iter_mut().for_each(|v| *v *= target / s);
            let y = sigma_round_measure(&t, &lift(&t, &z).unwrap(), eps).unwrap();
            assert!(supermeasure_defect(&t, &y).0 >= -SUPERMEASURE_TOL);
        }
        assert!(sigma_round_measure(&t, &lift(&t, &[0.2; 16]).unwrap(), 0.1).is_err());
    }

    #[test]
    fn lifted_leaf_measures_pass_through() {
        let t = tree6();
        let p0 = lift(&t, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let p1 = lift(&t, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = supermeasure_to_leaves(&t, &[p0, p1]).unwrap();
        assert_eq!(out.leaves[0], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(out.leaves[1], vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(out.cost, 4.0);
    }

    #[test]
    fn parked_root_mass_walks_down_one_path() {
        let t = tree6();
        let mut y0 = vec![0.0; t.len()];
        y0[t.root()] = 1.0;
        let leaf = t.find("b1").unwrap();
        let mut y1 = vec![0.0; t.len()];
        for v in t.path_to_root(leaf) {
            y1[v] = 1.0;
        }
        let out = supermeasure_to_leaves(&t, &[y0, y1]).unwrap();
        assert_eq!(out.cost, 6.0);
        assert_eq!(out.parked, vec![1.0, 0.0]);
        assert_eq!(out.leaves[1][4], 1.0);
    }

    #[test]
    fn transport_rejects_non_supermeasures() {
        let t = tree6();
        let mut y = vec![0.0; t.len()];
        y[t.find("a0").unwrap()] = 1.0;
        let err = VertexTransport::new(&t, &y).unwrap_err().to_string();
        assert!(err.contains("vertex a"), "{err}");
    }

    #[test]
    fn transport_cost_tracks_supermeasure_variation() {
        let t = HstTree::complete(2, 3, 2.0, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        // A random walk of integral 2-server configurations, with residual
        // mass parked at internal vertices on alternate steps.
        let mut path = Vec::new();
        let mut pos = [0usize, 5usize];
        for step in 0..60 {
            let mut z = vec![0.0; 8];
            for &p in &pos {
                z[p] += 1.0;
            }
            let mut y = lift(&t, &z).unwrap();
            if step % 2 == 1 {
                let l = t.leaves()[pos[0]];
                y[l] -= 1.0;
            }
            path.push(y);
            pos[rng.gen_range(0..2)] = rng.gen_range(0..8);
        }
        let out = supermeasure_to_leaves(&t, &path).unwrap();
        assert!(out.cost <= out.input_variation + 1e-9, "{} > {}", out.cost, out.input_variation);
        for (y, l) in path.iter().zip(&out.leaves) {
            for (i, &leaf) in t.leaves().iter().enumerate() {
                assert!(l[i] >= y[leaf] - 1e-12);
            }
        }
    }
}
