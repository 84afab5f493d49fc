use std::collections::HashMap;

use super::metric::FiniteMetric;
use crate::error::{invalid, Result};

/// A τ-stack `(P⁰, …, P^M)` stored as block labels: `labels[j][x]` names the
/// block of `P^j` holding `x`. Level 0 is the trivial partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TauStack {
    tau: u32,
    labels: Vec<Vec<usize>>,
}

impl TauStack {
    /// Completes partial partitions of `0..n` by singletons. `levels[j−1]`
    /// lists the blocks of `P^j` for `j = 1..=M`.
    pub fn from_partial(n: usize, tau: u32, levels: &[Vec<Vec<usize>>]) -> Result<Self> {
        if tau < 2 {
            return invalid("τ must be at least 2");
        }
        let mut labels = vec![vec![0usize; n]];
        for (j, blocks) in levels.iter().enumerate() {
            let mut lab = vec![usize::MAX; n];
            for (b, block) in blocks.iter().enumerate() {
                for &x in block {
                    if x >= n {
                        return invalid(format!("point {x} out of range at level {}", j + 1));
                    }
                    if lab[x] != usize::MAX {
                        return invalid(format!("point {x} lies in two blocks at level {}", j + 1));
                    }
                    lab[x] = b;
                }
            }
            let mut next = blocks.len();
            for l in lab.iter_mut().filter(|l| **l == usize::MAX) {
                *l = next;
                next += 1;
            }
            labels.push(lab);
        }
        Ok(Self { tau, labels })
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    /// `M`, the deepest level.
    pub fn depth(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn num_points(&self) -> usize {
        self.labels[0].len()
    }

    /// `P^j(x)` as a sorted point list.
    pub fn block(&self, j: usize, x: usize) -> Vec<usize> {
        let l = self.labels[j][x];
        (0..self.num_points()).filter(|&y| self.labels[j][y] == l).collect()
    }

    pub fn same_block(&self, j: usize, x: usize, y: usize) -> bool {
        self.labels[j][x] == self.labels[j][y]
    }

    /// Blocks of `P^j`.
    pub fn blocks(&self, j: usize) -> Vec<Vec<usize>> {
        let mut by: HashMap<usize, Vec<usize>> = HashMap::new();
        for (x, &l) in self.labels[j].iter().enumerate() {
            by.entry(l).or_default().push(x);
        }
        let mut v: Vec<Vec<usize>> = by.into_values().collect();
        v.sort();
        v
    }

    /// Labels of the forced refinement `P̂^j = {S ∩ S′ : S ∈ P^j, S′ ∈ P̂^{j−1}}`.
    pub fn forced_refinement(&self) -> Vec<Vec<usize>> {
        let n = self.num_points();
        let mut out = vec![vec![0usize; n]];
        for j in 1..=self.depth() {
            let prev = &out[j - 1];
            let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
            let lab: Vec<usize> = (0..n)
                .map(|x| {
                    let key = (self.labels[j][x], prev[x]);
                    let fresh = ids.len();
                    *ids.entry(key).or_insert(fresh)
                })
                .collect();
            out.push(lab);
        }
        out
    }
}

/// A chain `X = ξ₀ ⊇ ξ₁ ⊇ … ⊇ ξ_len` of sorted point sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chain {
    sets: Vec<Vec<usize>>,
}

impl Chain {
    /// Checks nesting and `ξ₀ = X`.
    pub fn new(n: usize, mut sets: Vec<Vec<usize>>) -> Result<Self> {
        for s in sets.iter_mut() {
            s.sort_unstable();
            s.dedup();
        }
        if sets.first().map(|s| s.len() != n || s.iter().enumerate().any(|(i, &x)| i != x)).unwrap_or(true) {
            return invalid("a chain must start at the whole space");
        }
        for w in sets.windows(2) {
            if !w[1].iter().all(|x| w[0].binary_search(x).is_ok()) {
                return invalid("chain sets must be nested");
            }
        }
        Ok(Self { sets })
    }

    pub fn len(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.sets.len() <= 1
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// `min(ξ) = ξ_len`.
    pub fn tail(&self) -> &[usize] {
        self.sets.last().expect("chains are nonempty")
    }

    pub fn is_complete(&self, m: usize) -> bool {
        self.len() == m && self.tail().len() == 1
    }

    /// The prefix `(ξ₀, …, ξ_l)`.
    pub fn prefix(&self, l: usize) -> Chain {
        Chain { sets: self.sets[..=l].to_vec() }
    }
}

/// `F_𝒫(x) = (P̂⁰(x), …, P̂^M(x))`.
pub fn embed_point(stack: &TauStack, x: usize) -> Chain {
    embed_with(stack, &stack.forced_refinement(), x)
}

/// `F_𝒫` on every point, sharing the refinement.
pub fn embed_all(stack: &TauStack) -> Vec<Chain> {
    let hat = stack.forced_refinement();
    (0..stack.num_points()).map(|x| embed_with(stack, &hat, x)).collect()
}

fn embed_with(stack: &TauStack, hat: &[Vec<usize>], x: usize) -> Chain {
    let n = stack.num_points();
    let sets = hat.iter().map(|lab| (0..n).filter(|&y| lab[y] == lab[x]).collect()).collect();
    Chain { sets }
}

/// Length of the longest common prefix minus one, i.e. `len(lca(ξ, ξ′))`.
pub fn lca_len(a: &Chain, b: &Chain) -> usize {
    a.sets.iter().zip(&b.sets).take_while(|(x, y)| x == y).count().saturating_sub(1)
}

/// `d_τ(ξ, ξ′) = τ^{−len(lca(ξ, ξ′))}` for distinct chains, 0 otherwise.
pub fn chain_distance(a: &Chain, b: &Chain, tau: f64) -> f64 {
    if a == b {
        0.0
    } else {
        tau.powi(-(lca_len(a, b) as i32))
    }
}

/// `F_in(ξ)`, the single point of `ξ_M`.
pub fn invert_chain(xi: &Chain, m: usize) -> Result<usize> {
    if !xi.is_complete(m) {
        return invalid(format!("chain of length {} with a tail of {} points is not complete", xi.len(), xi.tail().len()));
    }
    Ok(xi.tail()[0])
}

/// Outcome of [`verify_stack_lemmas`]; every count must be zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StackReport {
    pub blocks: usize,
    pub pairs: usize,
    /// Blocks of `P^j` with diameter above `τ^{−j}`.
    pub diameter_violations: usize,
    /// Pairs with `d(x,y) > d_τ(F(x), F(y))`.
    pub contraction_violations: usize,
    /// Pairs with `d_τ(F(x), F(y)) > τ Σ_j τ^{−j} 1[P^j(x) ≠ P^j(y)]`.
    pub prestack_violations: usize,
    /// Points with `F_in(F(x)) ≠ x` or an incomplete chain.
    pub inverse_failures: usize,
}

impl StackReport {
    pub fn passed(&self) -> bool {
        self.diameter_violations == 0
            && self.contraction_violations == 0
            && self.prestack_violations == 0
            && self.inverse_failures == 0
    }

    pub fn merge(&mut self, o: &Self) {
        self.blocks += o.blocks;
        self.pairs += o.pairs;
        self.diameter_violations += o.diameter_violations;
        self.contraction_violations += o.contraction_violations;
        self.prestack_violations += o.prestack_violations;
        self.inverse_failures += o.inverse_failures;
    }
}

/// Exact (no tolerance) checks of the stack properties: block diameters,
/// non-contraction of `F_𝒫`, the prefix bound on `d_τ` and `F_in ∘ F_𝒫 = id`.
pub fn verify_stack_lemmas(stack: &TauStack, metric: &FiniteMetric) -> StackReport {
    let tau = stack.tau() as f64;
    let m = stack.depth();
    let n = stack.num_points();
    let mut rep = StackReport::default();
    for j in 1..=m {
        for b in stack.blocks(j) {
            rep.blocks += 1;
            if metric.diameter_of(&b) > tau.powi(-(j as i32)) {
                rep.diameter_violations += 1;
            }
        }
    }
    let chains = embed_all(stack);
    for (x, c) in chains.iter().enumerate() {
        if invert_chain(c, m).ok() != Some(x) {
            rep.inverse_failures += 1;
        }
    }
    for x in 0..n {
        for y in x + 1..n {
            rep.pairs += 1;
            let dt = chain_distance(&chains[x], &chains[y], tau);
            if metric.get(x, y) > dt {
                rep.contraction_violations += 1;
            }
            let bound: f64 = tau * (1..=m).filter(|&j| !stack.same_block(j, x, y)).map(|j| tau.powi(-(j as i32))).sum::<f64>();
            if dt > bound {
                rep.prestack_violations += 1;
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> FiniteMetric {
        FiniteMetric::from_points(&[vec![0.0], vec![0.1], vec![0.5], vec![1.0]], 1).unwrap()
    }

    #[test]
    fn forced_refinement_nests() {
        // P¹ joins {1,2} across the P̂... boundary that P² does not respect.
        let s = TauStack::from_partial(4, 4, &[vec![vec![0, 1], vec![2, 3]], vec![vec![1, 2]]]).unwrap();
        let c1 = embed_point(&s, 1);
        assert_eq!(c1.sets(), &[vec![0, 1, 2, 3], vec![0, 1], vec![1]]);
        let c2 = embed_point(&s, 2);
        assert_eq!(c2.sets(), &[vec![0, 1, 2, 3], vec![2, 3], vec![2]]);
        assert!(Chain::new(4, c1.sets().to_vec()).is_ok());
    }

    #[test]
    fn chain_distance_by_prefix() {
        let x = Chain::new(3, vec![vec![0, 1, 2], vec![0, 1], vec![0]]).unwrap();
        let y = Chain::new(3, vec![vec![0, 1, 2], vec![0, 1], vec![1]]).unwrap();
        let z = Chain::new(3, vec![vec![0, 1, 2], vec![2], vec![2]]).unwrap();
        assert_eq!(chain_distance(&x, &x, 4.0), 0.0);
        assert_eq!(chain_distance(&x, &z, 4.0), 1.0);
        assert_eq!(chain_distance(&x, &y, 4.0), 0.25);
        let a = Chain::new(3, vec![vec![0, 1, 2], vec![0, 1], vec![0, 1], vec![0]]).unwrap();
        let b = Chain::new(3, vec![vec![0, 1, 2], vec![0, 1], vec![0, 1], vec![1]]).unwrap();
        assert_eq!(chain_distance(&a, &b, 4.0), 1.0 / 16.0);
        assert!(Chain::new(3, vec![vec![0, 1], vec![0]]).is_err());
        assert!(Chain::new(3, vec![vec![0, 1, 2], vec![0], vec![1]]).is_err());
    }

    #[test]
    fn inverse_and_lemmas_on_a_valid_stack() {
        let m = line();
        // min distance 0.1 ⇒ M = 2 for τ = 4.
        assert_eq!(m.scale_count(4.0), 2);
        let s = TauStack::from_partial(4, 4, &[vec![vec![0, 1]], vec![]]).unwrap();
        let rep = verify_stack_lemmas(&s, &m);
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.pairs, 6);
        for x in 0..4 {
            assert_eq!(invert_chain(&embed_point(&s, x), 2).unwrap(), x);
        }
    }

    #[test]
    fn oversized_block_is_reported() {
        let m = line();
        let s = TauStack::from_partial(4, 4, &[vec![vec![0, 2]], vec![]]).unwrap();
        assert_eq!(verify_stack_lemmas(&s, &m).diameter_violations, 1);
        // The refinement splits a level-2 block that level 1 separates.
        let t = TauStack::from_partial(4, 4, &[vec![], vec![vec![0, 1]]]).unwrap();
        let r = verify_stack_lemmas(&t, &m);
        assert_eq!((r.diameter_violations, r.inverse_failures), (1, 0));
        let u = TauStack::from_partial(4, 4, &[vec![vec![0, 1]], vec![vec![0, 1]]]).unwrap();
        assert_eq!(verify_stack_lemmas(&u, &m).inverse_failures, 2);
        assert!(TauStack::from_partial(4, 4, &[vec![vec![0, 1], vec![1]]]).is_err());
    }
}
