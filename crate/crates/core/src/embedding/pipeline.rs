use std::collections::HashMap;

use super::chain::{embed_point, invert_chain, Chain};
use super::embedder::EmbedderState;
use super::metric::FiniteMetric;
use crate::error::{invalid, Result};
use crate::hst::{default_parameters, HstKServer, HstTree, PotentialVariant};
use crate::offline_opt::opt_kserver_flow;

/// Server mass a request leaf must hold after service.
const SERVED_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub tau: u32,
    pub seed: u64,
    /// Reported alongside the run; the algorithm itself does not depend on
    /// the potential.
    pub variant: PotentialVariant,
    /// Largest number of chain-tree leaves before the run stops early.
    pub leaf_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { tau: 4, seed: 0, variant: PotentialVariant::Weighted, leaf_cap: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub variant: PotentialVariant,
    /// Requests served before stopping.
    pub served: usize,
    /// False when the leaf cap stopped the run early.
    pub completed: bool,
    /// Transport cost on the chain tree; it dominates the cost in `X`
    /// because tree distances dominate `d_τ ≥ d`.
    pub alg_cost: f64,
    /// Offline optimum on the served prefix.
    pub opt_cost: f64,
    pub ratio: f64,
    pub leaves: usize,
    /// Requests whose leaf held less than one server after service or
    /// whose chain did not invert to the request.
    pub invalid_services: usize,
}

/// The chain tree built so far: vertices are chain prefixes, a vertex at
/// depth `d` has weight `τ^{1−d}`, leaves are complete chains.
struct ChainTree {
    tree: HstTree,
    index: HashMap<Chain, usize>,
    tau: f64,
    fresh: usize,
}

impl ChainTree {
    fn new(n: usize, m: usize, tau: u32, initial: &[Chain]) -> Result<Self> {
        let tf = tau as f64;
        let root = Chain::new(n, vec![(0..n).collect()])?;
        let mut edges: Vec<(String, String, f64)> = Vec::new();
        let mut labels: HashMap<Chain, String> = HashMap::new();
        labels.insert(root.clone(), "X".into());
        for c in initial {
            for l in 1..=m {
                let p = c.prefix(l);
                if labels.contains_key(&p) {
                    continue;
                }
                let name = format!("v{}", labels.len());
                edges.push((labels[&c.prefix(l - 1)].clone(), name.clone(), tf.powi(1 - l as i32)));
                labels.insert(p, name);
            }
        }
        let tree = HstTree::from_edges("X", &edges, tf)?;
        let index = labels.iter().map(|(c, name)| (c.clone(), tree.find(name).expect("label exists"))).collect();
        let fresh = labels.len();
        Ok(Self { tree, index, tau: tf, fresh })
    }

    /// Vertex id of `chain`, grown into the tree if it is new. Returns
    /// whether the tree changed.
    fn ensure(&mut self, chain: &Chain) -> Result<bool> {
        if self.index.contains_key(chain) {
            return Ok(false);
        }
        let m = chain.len();
        let mut at = m;
        while !self.index.contains_key(&chain.prefix(at)) {
            at -= 1;
        }
        let weights: Vec<f64> = (at + 1..=m).map(|l| self.tau.powi(1 - l as i32)).collect();
        let label = format!("v{}", self.fresh);
        self.fresh += m - at;
        let created = self.tree.add_path(self.index[&chain.prefix(at)], &weights, &label)?;
        for (l, v) in (at + 1..=m).zip(created) {
            self.index.insert(chain.prefix(l), v);
        }
        Ok(true)
    }
}

/// `F_in^{⊗k} ∘ A^𝒞 ∘ F_𝒫`: embeds each request with the current stack,
/// grows the chain tree as needed and serves the request leaf with the
/// fractional HST algorithm.
pub fn compose_full_pipeline(
    metric: &FiniteMetric,
    k: usize,
    requests: &[usize],
    rho0: &[usize],
    config: &PipelineConfig,
) -> Result<PipelineReport> {
    if rho0.len() != k {
        return invalid("initial placement must have k servers");
    }
    let mut sorted = rho0.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k {
        return invalid("initial servers must sit on distinct points");
    }
    let n = metric.len();
    let mut st = EmbedderState::new(metric, k, config.tau, config.seed)?;
    let m = st.depth();
    let stack0 = st.stack();
    let initial: Vec<Chain> = rho0.iter().map(|&x| embed_point(&stack0, x)).collect();
    let mut ct = ChainTree::new(n, m, config.tau, &initial)?;
    let leaf_of = |ct: &ChainTree, c: &Chain| -> usize {
        let v = ct.index[c];
        ct.tree.leaf_index(v).expect("complete chains are leaves")
    };
    let init_leaves: Vec<usize> = initial.iter().map(|c| leaf_of(&ct, c)).collect();
    let (delta, eps) = default_parameters(k);
    let mut alg = HstKServer::new(ct.tree.clone(), k, delta, eps, &init_leaves)?;
    let mut served = 0;
    let mut invalid_services = 0;
    let mut completed = true;
    for &r in requests {
        st.process_request(metric, r)?;
        let chain = embed_point(&st.stack(), r);
        if ct.ensure(&chain)? {
            if ct.tree.leaves().len() > config.leaf_cap {
                completed = false;
                break;
            }
            alg.extend(ct.tree.clone())?;
        }
        let leaf = leaf_of(&ct, &chain);
        alg.serve(leaf)?;
        let v = ct.tree.leaves()[leaf];
        if invert_chain(&chain, m).ok() != Some(r) || alg.placement()[v] < 1.0 - SERVED_TOL {
            invalid_services += 1;
        }
        served += 1;
    }
    let opt = opt_kserver_flow(&metric.distance_matrix()?, k, &requests[..served], rho0)?.cost;
    let alg_cost = alg.transport_cost();
    let ratio = if opt > 0.0 { alg_cost / opt } else if alg_cost <= 1e-9 { 1.0 } else { f64::INFINITY };
    Ok(PipelineReport {
        variant: config.variant,
        served,
        completed,
        alg_cost,
        opt_cost: opt,
        ratio,
        leaves: ct.tree.leaves().len(),
        invalid_services,
    })
}
