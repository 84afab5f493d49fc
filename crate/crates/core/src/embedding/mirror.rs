use super::chain::{chain_distance, embed_all, Chain};
use super::embedder::{EmbedEvent, EmbedderState};
use super::metric::FiniteMetric;
use crate::error::{invalid, Result};
use crate::offline_opt::opt_kserver_flow;

/// An optimal schedule in which a request at an occupied point moves
/// nothing and otherwise exactly one server moves onto the request.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeSchedule {
    pub cost: f64,
    /// `Some((server, from))` when a server moves onto `requests[t]`.
    pub moves: Vec<Option<(usize, usize)>>,
    /// Positions after each request.
    pub configurations: Vec<Vec<usize>>,
}

/// Lazy relabelling of the min-cost-flow schedule. Each physical server
/// follows one flow server; when the request is already covered the two
/// labels are swapped instead of moving. By the triangle inequality the
/// cost never exceeds the flow schedule's, so the result is still optimal.
pub fn conservative_opt(metric: &FiniteMetric, k: usize, requests: &[usize], rho0: &[usize]) -> Result<ConservativeSchedule> {
    let d = metric.distance_matrix()?;
    let flow = opt_kserver_flow(&d, k, requests, rho0)?;
    // follow[p]: flow server tracked by physical server p.
    let mut follow: Vec<usize> = (0..k).collect();
    let mut pos = rho0.to_vec();
    let mut cost = 0.0;
    let mut moves = Vec::with_capacity(requests.len());
    let mut configurations = Vec::with_capacity(requests.len());
    for (t, &r) in requests.iter().enumerate() {
        let f = flow.moves[t].server;
        if let Some(p) = pos.iter().position(|&q| q == r) {
            if follow[p] != f {
                let other = follow.iter().position(|&g| g == f).expect("follow is a permutation");
                follow.swap(p, other);
            }
            moves.push(None);
        } else {
            let p = follow.iter().position(|&g| g == f).expect("follow is a permutation");
            cost += metric.get(pos[p], r);
            moves.push(Some((p, pos[p])));
            pos[p] = r;
        }
        configurations.push(pos.clone());
    }
    if cost > flow.cost + 1e-9 * flow.cost.max(1.0) {
        return Err(crate::Error::Internal(format!("lazy schedule costs {cost} > flow {}", flow.cost)));
    }
    Ok(ConservativeSchedule { cost, moves, configurations })
}

/// Cost of `F_𝒫^{⊗k} ∘ OPT` in `d_τ`, split by cause.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorReport {
    pub opt_cost: f64,
    /// Stack changes from resets, charged on OPT's current servers.
    pub reset_cost: f64,
    /// Stack changes from insertions.
    pub insertion_cost: f64,
    /// OPT's own moves, mirrored in the current stack.
    pub move_cost: f64,
    /// `M`.
    pub depth: usize,
    /// `K_j` at the end (index 0 unused).
    pub resets: Vec<u64>,
    /// Largest `k τ^{−j−1} K_j − OPT` over levels; `≤ 0` when the reset
    /// lemma holds.
    pub reset_excess: f64,
}

impl MirrorReport {
    pub fn mirrored_cost(&self) -> f64 {
        self.reset_cost + self.insertion_cost + self.move_cost
    }

    /// `mirrored / (M log k · OPT)`.
    pub fn normalized_ratio(&self, k: usize) -> f64 {
        let den = self.depth as f64 * (k as f64).ln() * self.opt_cost;
        if den > 0.0 {
            self.mirrored_cost() / den
        } else {
            f64::INFINITY
        }
    }
}

fn config_cost(a: &[Chain], b: &[Chain], servers: &[usize], tau: f64) -> f64 {
    servers.iter().map(|&x| chain_distance(&a[x], &b[x], tau)).sum()
}

/// Runs the embedder on `requests` and mirrors a conservative optimum
/// through the evolving stacks.
pub fn mirrored_opt_cost(
    metric: &FiniteMetric,
    k: usize,
    tau: u32,
    requests: &[usize],
    rho0: &[usize],
    seed: u64,
) -> Result<MirrorReport> {
    if rho0.len() != k {
        return invalid("initial placement must have k servers");
    }
    let opt = conservative_opt(metric, k, requests, rho0)?;
    let mut st = EmbedderState::new(metric, k, tau, seed)?;
    let tf = tau as f64;
    let mut chains = embed_all(&st.stack());
    let mut servers = rho0.to_vec();
    let (mut reset_cost, mut insertion_cost, mut move_cost) = (0.0, 0.0, 0.0);
    for (t, &r) in requests.iter().enumerate() {
        let ev = st.apply_resets();
        if !ev.is_empty() {
            let next = embed_all(&st.stack());
            reset_cost += config_cost(&chains, &next, &servers, tf);
            chains = next;
        }
        let ev = st.apply_insertions(metric, r)?;
        if ev.iter().any(|e| matches!(e, EmbedEvent::Insert { .. })) {
            let next = embed_all(&st.stack());
            insertion_cost += config_cost(&chains, &next, &servers, tf);
            chains = next;
        }
        if let Some((p, from)) = opt.moves[t] {
            move_cost += chain_distance(&chains[from], &chains[r], tf);
            servers[p] = r;
        }
    }
    let resets = st.reset_counts().to_vec();
    let reset_excess = (1..resets.len())
        .map(|j| k as f64 * tf.powi(-(j as i32) - 1) * resets[j] as f64 - opt.cost)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MirrorReport {
        opt_cost: opt.cost,
        reset_cost,
        insertion_cost,
        move_cost,
        depth: st.depth(),
        resets,
        reset_excess,
    })
}

/// `2τ²(3 + 4e)`: the constant `C` in `mirrored ≤ C·M·log k·OPT + O(1)`
/// obtained by adding the reset, insertion and stretch charges (valid for
/// `k ≥ 3`, where `log k ≥ 1`).
pub fn transfer_constant_bound(tau: u32) -> f64 {
    let t = tau as f64;
    2.0 * t * t * (3.0 + 4.0 * std::f64::consts::E)
}

/// Least-squares line `y = a + b x`.
pub fn affine_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return invalid("an affine fit needs at least two paired points");
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return invalid("affine fit needs distinct abscissae");
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn conservative_schedule_is_lazy_and_optimal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = FiniteMetric::random_euclidean(7, 2, &mut rng).unwrap();
            let reqs: Vec<usize> = (0..25).map(|_| rng.gen_range(0..7)).collect();
            let s = conservative_opt(&m, 3, &reqs, &[0, 1, 2]).unwrap();
            let flow = opt_kserver_flow(&m.distance_matrix().unwrap(), 3, &reqs, &[0, 1, 2]).unwrap();
            assert!((s.cost - flow.cost).abs() < 1e-9);
            let mut prev = vec![0, 1, 2];
            for (t, &r) in reqs.iter().enumerate() {
                let c = &s.configurations[t];
                assert!(c.contains(&r));
                let changed = c.iter().zip(&prev).filter(|(a, b)| a != b).count();
                if prev.contains(&r) {
                    assert_eq!(changed, 0);
                } else {
                    assert_eq!(changed, 1);
                }
                prev = c.clone();
            }
        }
    }

    #[test]
    fn affine_fit_recovers_a_line() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 0.5 * x).collect();
        let (a, b) = affine_fit(&xs, &ys).unwrap();
        assert!((a - 3.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
        assert!(affine_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mirrored_cost_respects_reset_accounting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = FiniteMetric::random_euclidean(10, 2, &mut rng).unwrap();
        let reqs: Vec<usize> = (0..80).map(|_| rng.gen_range(0..10)).collect();
        let rep = mirrored_opt_cost(&m, 3, 4, &reqs, &[0, 1, 2], 7).unwrap();
        assert!(rep.reset_excess <= 0.0, "{rep:?}");
        assert!(rep.mirrored_cost() >= rep.opt_cost - 1e-9);
        assert!(rep.normalized_ratio(3) <= transfer_constant_bound(4));
    }
}
