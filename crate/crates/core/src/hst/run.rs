use std::fmt;
use std::str::FromStr;

use super::dynamics::{default_policy, serve_leaf_request, verify_dynamics_lemmas, DynamicsReport};
use super::measures::{sigma_round_measure, weighted_l1, VertexTransport};
use super::potentials::{verify_depth_inequalities, DepthReport, PotentialSpec, PotentialVariant};
use super::region::AssignmentRegion;
use super::tree::HstTree;
use crate::error::{invalid, Error, Result};
use crate::geometry::Region;
use crate::mirror_flow::{StepPolicy, Trajectory};
use crate::offline_opt::{opt_kserver_flow, DistanceMatrix};

/// How much checking runs alongside the algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VerifyLevel {
    #[default]
    None,
    /// Structural lemmas only (cheap).
    Fast,
    /// Everything, including Bregman descent and the depth inequalities.
    Full,
}

impl FromStr for VerifyLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "fast" => Ok(Self::Fast),
            "full" => Ok(Self::Full),
            _ => Err(Error::Parse(format!("unknown verification level `{s}`"))),
        }
    }
}

impl fmt::Display for VerifyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Fast => "fast",
            Self::Full => "full",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KServerConfig {
    pub variant: PotentialVariant,
    /// Defaults to `1/(2k)`.
    pub delta: Option<f64>,
    /// Defaults to `kδ/(1−δ)`, so that the server measure has mass `k + ε`.
    pub eps: Option<f64>,
    pub verify: VerifyLevel,
    /// Initial server leaves (canonical leaf indices); defaults to the
    /// first `k` leaves.
    pub initial: Option<Vec<usize>>,
    pub policy: Option<StepPolicy>,
}

impl Default for KServerConfig {
    fn default() -> Self {
        Self {
            variant: PotentialVariant::Weighted,
            delta: None,
            eps: None,
            verify: VerifyLevel::None,
            initial: None,
            policy: None,
        }
    }
}

/// `δ = 1/(2k)` and the matching `ε = kδ/(1−δ)`.
pub fn default_parameters(k: usize) -> (f64, f64) {
    let delta = 1.0 / (2.0 * k as f64);
    (delta, k as f64 * delta / (1.0 - delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestLog {
    /// Canonical leaf index.
    pub leaf: usize,
    pub duration: f64,
    pub steps: usize,
    /// `Σ ‖Δz‖_{ℓ1(w)}` between samples of the fractional server measure.
    pub fractional_cost: f64,
    /// `Σ ‖Δy‖_{ℓ1(w)}` of the σ-rounded supermeasure.
    pub rounded_variation: f64,
    /// Cost of moving actual server mass for this request.
    pub transport_cost: f64,
}

/// Online state of the fractional algorithm on one tree.
#[derive(Debug, Clone)]
pub struct HstKServer {
    tree: HstTree,
    region: AssignmentRegion,
    x: Vec<f64>,
    k: usize,
    delta: f64,
    eps: f64,
    policy: StepPolicy,
    transport: VertexTransport,
    y: Vec<f64>,
}

impl HstKServer {
    /// Servers start integrally on the given leaves (canonical indices).
    pub fn new(tree: HstTree, k: usize, delta: f64, eps: f64, initial: &[usize]) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return invalid(format!("δ must lie in (0, 1) (got {delta})"));
        }
        let region = AssignmentRegion::new(&tree, k)?;
        if initial.len() != k {
            return invalid(format!("{} initial servers for k = {k}", initial.len()));
        }
        let mut counts = vec![0usize; tree.leaves().len()];
        for &l in initial {
            if l >= counts.len() {
                return invalid(format!("initial leaf {l} out of range"));
            }
            counts[l] += 1;
        }
        let x = region.integral_point(&tree, &counts)?;
        let z = region.server_measure(&x, delta, tree.root());
        let y = sigma_round_measure(&tree, &z, eps)?;
        let transport = VertexTransport::new(&tree, &y)?;
        let policy = default_policy(&tree);
        Ok(Self { tree, region, x, k, delta, eps, policy, transport, y })
    }

    pub fn with_policy(mut self, policy: StepPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn tree(&self) -> &HstTree {
        &self.tree
    }

    pub fn region(&self) -> &AssignmentRegion {
        &self.region
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Current fractional server measure on every vertex.
    pub fn server_measure(&self) -> Vec<f64> {
        self.region.server_measure(&self.x, self.delta, self.tree.root())
    }

    /// Server mass currently sitting on each vertex after leaf conversion.
    pub fn placement(&self) -> &[f64] {
        self.transport.placement()
    }

    pub fn transport_cost(&self) -> f64 {
        self.transport.cost()
    }

    /// Serves a request at the leaf with canonical index `leaf`.
    pub fn serve(&mut self, leaf: usize) -> Result<(Trajectory, RequestLog)> {
        let Some(&v) = self.tree.leaves().get(leaf) else {
            return invalid(format!("leaf index {leaf} out of range"));
        };
        let (x, traj) = serve_leaf_request(&self.tree, &self.region, &self.x, v, self.delta, &self.policy)?;
        let root = self.tree.root();
        let before = self.transport.cost();
        let mut frac = 0.0;
        let mut rounded = 0.0;
        let mut z_prev = self.region.server_measure(&self.x, self.delta, root);
        for s in &traj.samples {
            let z = self.region.server_measure(&s.x, self.delta, root);
            frac += weighted_l1(&self.tree, &z_prev, &z);
            let y = sigma_round_measure(&self.tree, &z, self.eps)?;
            rounded += weighted_l1(&self.tree, &self.y, &y);
            self.transport.update(&self.tree, &y)?;
            self.y = y;
            z_prev = z;
        }
        self.x = x;
        let log = RequestLog {
            leaf,
            duration: traj.terminal_time(),
            steps: traj.samples.len(),
            fractional_cost: frac,
            rounded_variation: rounded,
            transport_cost: self.transport.cost() - before,
        };
        Ok((traj, log))
    }

    /// Switches to `tree`, which must extend the current tree by
    /// [`HstTree::add_path`] (existing vertex ids unchanged). New coordinates
    /// are set to 1, i.e. no server mass moves onto the new vertices.
    pub fn extend(&mut self, tree: HstTree) -> Result<()> {
        let old = &self.tree;
        if tree.len() < old.len() || tree.root() != old.root() {
            return invalid("extension must keep every existing vertex");
        }
        for v in 0..old.len() {
            if tree.parent(v) != old.parent(v) {
                return invalid(format!("vertex {} changed parent", old.label(v)));
            }
        }
        let region = AssignmentRegion::new(&tree, self.k)?;
        let mut x = vec![1.0; region.dim()];
        for v in 0..old.len() {
            let (a, b) = (self.region.range(v), region.range(v));
            x[b.start..b.start + a.len()].copy_from_slice(&self.x[a]);
        }
        self.y.resize(tree.len(), 0.0);
        self.transport.grow(&tree);
        self.policy = default_policy(&tree);
        self.region = region;
        self.x = x;
        self.tree = tree;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KServerRun {
    /// Canonical leaf indices.
    pub requests: Vec<usize>,
    pub initial: Vec<usize>,
    /// Cost of the σ-rounded, leaf-converted algorithm.
    pub alg_cost: f64,
    /// Movement of the fractional server measure.
    pub fractional_cost: f64,
    /// Variation of the σ-rounded supermeasure.
    pub rounded_variation: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    pub logs: Vec<RequestLog>,
    pub dynamics: Option<DynamicsReport>,
    pub depth: Option<DepthReport>,
    pub final_state: Vec<f64>,
}

/// Runs the algorithm on a request sequence of canonical leaf indices and
/// compares with the offline optimum on the leaf metric.
pub fn run_kserver(tree: &HstTree, k: usize, requests: &[usize], config: &KServerConfig) -> Result<KServerRun> {
    run_kserver_adaptive(tree, k, requests.len(), |t, _| requests[t], config)
}

/// Like [`run_kserver`], asking `next(t, alg)` for each request so adaptive
/// adversaries can inspect the algorithm.
pub fn run_kserver_adaptive(
    tree: &HstTree,
    k: usize,
    count: usize,
    mut next: impl FnMut(usize, &HstKServer) -> usize,
    config: &KServerConfig,
) -> Result<KServerRun> {
    let (d0, e0) = default_parameters(k);
    let delta = config.delta.unwrap_or(d0);
    let eps = config.eps.unwrap_or(if config.delta.is_some() { k as f64 * delta / (1.0 - delta) } else { e0 });
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("ε must lie in (0, 1) (got {eps})"));
    }
    let initial = match &config.initial {
        Some(v) => v.clone(),
        None => (0..k).collect(),
    };
    let mut alg = HstKServer::new(tree.clone(), k, delta, eps, &initial)?;
    if let Some(p) = &config.policy {
        alg = alg.with_policy(p.clone());
    }
    let spec = PotentialSpec::new(config.variant, k, delta, eps);
    let mut dynamics = (config.verify != VerifyLevel::None).then(DynamicsReport::empty);
    let mut depth = (config.verify == VerifyLevel::Full).then(DepthReport::empty);
    let mut logs = Vec::with_capacity(count);
    let mut requests = Vec::with_capacity(count);
    for t in 0..count {
        let r = next(t, &alg);
        requests.push(r);
        let (traj, log) = alg.serve(r)?;
        let v = tree.leaves()[r];
        if let Some(rep) = dynamics.as_mut() {
            let full = config.verify == VerifyLevel::Full;
            rep.merge(&verify_dynamics_lemmas(tree, alg.region(), &traj, v, delta, full)?);
        }
        if let Some(rep) = depth.as_mut() {
            rep.merge(&verify_depth_inequalities(tree, alg.region(), &spec, &traj, v)?);
        }
        logs.push(log);
    }
    let metric = DistanceMatrix::from_rows(&tree.leaf_metric())?;
    let opt = opt_kserver_flow(&metric, k, &requests, &initial)?.cost;
    let alg_cost = alg.transport_cost();
    let ratio = if opt > 0.0 { alg_cost / opt } else if alg_cost <= 1e-9 { 1.0 } else { f64::INFINITY };
    Ok(KServerRun {
        requests,
        initial,
        alg_cost,
        fractional_cost: logs.iter().map(|l| l.fractional_cost).sum(),
        rounded_variation: logs.iter().map(|l| l.rounded_variation).sum(),
        opt_cost: opt,
        ratio,
        logs,
        dynamics,
        depth,
        final_state: alg.state().to_vec(),
    })
}
