//! Offline optima used as ground truth: k-server by min-cost flow (with a
//! conservative schedule), an exhaustive DP oracle, and weighted paging by an
//! interval-packing flow with Belady's rule as the uniform-weight check.

pub(crate) mod mcf;

use std::collections::HashMap;

use mcf::MinCostFlow;

use crate::error::{invalid, Result};

/// Integer scale applied to distances inside the flow solver.
pub const DEFAULT_SCALE: f64 = 1e6;

/// Symmetric distance matrix on points `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[i * n + j] = f(i, j);
                }
            }
        }
        Self::from_flat(n, d)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return invalid("distance matrix must be square");
        }
        Self::from_flat(n, rows.iter().flatten().copied().collect())
    }

    fn from_flat(n: usize, d: Vec<f64>) -> Result<Self> {
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return invalid(format!("d({i},{i}) must be zero"));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !(v >= 0.0 && v.is_finite()) {
                    return invalid(format!("d({i},{j}) must be finite and nonnegative"));
                }
                if (v - d[j * n + i]).abs() > 1e-12 * (1.0 + v) {
                    return invalid(format!("d({i},{j}) is not symmetric"));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn max_distance(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Largest `d(i,k) − d(i,j) − d(j,k)` (nonpositive for a metric).
    pub fn triangle_defect(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    worst = worst.max(self.get(i, k) - self.get(i, j) - self.get(j, k));
                }
            }
        }
        worst.max(0.0)
    }
}

/// One step of a schedule: which server served request `t` and where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerMove {
    pub t: usize,
    pub server: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct KServerSolution {
    pub cost: f64,
    /// Exactly one move per request, always onto the requested point.
    pub moves: Vec<ServerMove>,
    /// Server positions after serving each request.
    pub configurations: Vec<Vec<usize>>,
}

fn check_instance(d: &DistanceMatrix, k: usize, requests: &[usize], rho0: &[usize]) -> Result<()> {
    if k == 0 || k > d.len() {
        return invalid(format!("need 1 ≤ k ≤ |X| (k = {k}, |X| = {})", d.len()));
    }
    if rho0.len() != k {
        return invalid("initial placement must have exactly k servers");
    }
    if let Some(p) = requests.iter().chain(rho0).find(|&&p| p >= d.len()) {
        return invalid(format!("point {p} outside the metric"));
    }
    Ok(())
}

/// Offline k-server optimum by min-cost flow, with `scale` turning distances
/// into integers. The returned schedule is conservative: at time `t` only the
/// server recorded in `moves[t]` moves, and it moves onto `requests[t]`.
pub fn opt_kserver_flow_scaled(
    d: &DistanceMatrix,
    k: usize,
    requests: &[usize],
    rho0: &[usize],
    scale: f64,
) -> Result<KServerSolution> {
    check_instance(d, k, requests, rho0)?;
    let t_len = requests.len();
    let q = |a: usize, b: usize| (d.get(a, b) * scale).round() as i64;
    let big = 2 * (d.max_distance() * scale).round() as i64 + 1;
    // Nodes: source, sink, servers, then in/out per request.
    let (src, sink) = (0, 1);
    let server = |i: usize| 2 + i;
    let inn = |t: usize| 2 + k + 2 * t;
    let out = |t: usize| 3 + k + 2 * t;
    let mut g = MinCostFlow::new(2 + k + 2 * t_len);
    for i in 0..k {
        g.add_edge(src, server(i), 1, 0);
        g.add_edge(server(i), sink, 1, 0);
        for (t, &r) in requests.iter().enumerate() {
            g.add_edge(server(i), inn(t), 1, q(rho0[i], r));
        }
    }
    for (t, &r) in requests.iter().enumerate() {
        g.add_edge(inn(t), out(t), 1, -big);
        g.add_edge(out(t), sink, 1, 0);
        for (s, &r2) in requests.iter().enumerate().skip(t + 1) {
            g.add_edge(out(t), inn(s), 1, q(r, r2));
        }
    }
    g.run(src, sink, k as i64, false)?;

    let mut server_of = vec![usize::MAX; t_len];
    for i in 0..k {
        let mut node = g.take_flow_from(server(i));
        while let Some(v) = node {
            if v == sink {
                break;
            }
            let t = (v - 2 - k) / 2;
            server_of[t] = i;
            let after = g.take_flow_from(inn(t)).filter(|&o| o == out(t));
            if after.is_none() {
                return Err(crate::Error::Internal("broken flow path".into()));
            }
            node = g.take_flow_from(out(t));
        }
    }
    if let Some(t) = server_of.iter().position(|&s| s == usize::MAX) {
        return Err(crate::Error::Internal(format!("request {t} left unserved by the flow")));
    }
    let mut pos = rho0.to_vec();
    let mut moves = Vec::with_capacity(t_len);
    let mut configurations = Vec::with_capacity(t_len);
    let mut cost = 0.0;
    for (t, &r) in requests.iter().enumerate() {
        let i = server_of[t];
        cost += d.get(pos[i], r);
        moves.push(ServerMove { t, server: i, from: pos[i], to: r });
        pos[i] = r;
        configurations.push(pos.clone());
    }
    Ok(KServerSolution { cost, moves, configurations })
}

pub fn opt_kserver_flow(d: &DistanceMatrix, k: usize, requests: &[usize], rho0: &[usize]) -> Result<KServerSolution> {
    opt_kserver_flow_scaled(d, k, requests, rho0, DEFAULT_SCALE)
}

/// Exact DP over all size-`k` multisets of points, with min-cost matching
/// between consecutive configurations. Gated to `|X| ≤ 7`, `T ≤ 8`, `k ≤ 4`.
pub fn opt_kserver_bruteforce(d: &DistanceMatrix, k: usize, requests: &[usize], rho0: &[usize]) -> Result<f64> {
    check_instance(d, k, requests, rho0)?;
    if d.len() > 7 || requests.len() > 8 || k > 4 {
        return invalid("brute force is limited to |X| ≤ 7, T ≤ 8, k ≤ 4");
    }
    let configs = multisets(d.len(), k);
    let perms = permutations(k);
    let matching = |a: &[usize], b: &[usize]| -> f64 {
        perms
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| d.get(a[i], b[j])).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    let mut start = rho0.to_vec();
    start.sort_unstable();
    let mut cost: HashMap<Vec<usize>, f64> = HashMap::from([(start, 0.0)]);
    for &r in requests {
        let mut next = HashMap::new();
        for c in configs.iter().filter(|c| c.contains(&r)) {
            let best = cost.iter().map(|(a, v)| v + matching(a, c)).fold(f64::INFINITY, f64::min);
            next.insert(c.clone(), best);
        }
        cost = next;
    }
    Ok(cost.values().copied().fold(f64::INFINITY, f64::min))
}

fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, lo: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for p in lo..n {
            cur.push(p);
            rec(n, k, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Offline weighted paging in the fetch-cost model: every page brought into
/// the cache costs its weight, and the cache starts with `initial` (at most
/// `k` distinct pages).
///
/// Keeping page `p` between two consecutive requests to it saves `w_p`; a
/// set of kept intervals is feasible iff at every time at most `k − 1` of
/// them span it, which a flow of `k − 1` units along the time line with one
/// bypass arc per interval encodes exactly.
pub fn opt_weighted_paging(weights: &[f64], k: usize, requests: &[usize], initial: &[usize]) -> Result<f64> {
    let seq = paging_sequence(weights, k, requests, initial)?;
    let scale = DEFAULT_SCALE / weights.iter().copied().fold(0.0, f64::max).max(1e-300);
    let len = seq.len();
    let mut last = vec![usize::MAX; weights.len()];
    let mut intervals = Vec::new();
    let mut free_saving = 0.0;
    for (t, &p) in seq.iter().enumerate() {
        if last[p] != usize::MAX {
            if last[p] + 1 == t {
                free_saving += weights[p];
            } else {
                intervals.push((last[p], t, p));
            }
        }
        last[p] = t;
    }
    let mut saving = free_saving;
    if k > 1 && !intervals.is_empty() {
        // Line node `s` sits between times `s` and `s + 1`; an interval
        // (a, b) occupies times a+1..b−1, i.e. line arcs a → b−1.
        let mut g = MinCostFlow::new(len);
        for s in 0..len - 1 {
            g.add_edge(s, s + 1, (k - 1) as i64, 0);
        }
        let mut handles = Vec::new();
        for &(a, b, p) in &intervals {
            handles.push((g.add_edge(a, b - 1, 1, -(weights[p] * scale).round() as i64), p));
        }
        g.run(0, len - 1, (k - 1) as i64, true)?;
        saving += handles.iter().filter(|(h, _)| g.flow_on(*h) > 0).map(|(_, p)| weights[*p]).sum::<f64>();
    }
    let total: f64 = requests.iter().map(|&p| weights[p]).sum();
    Ok((total - saving).max(0.0))
}

/// Virtual requests for the initial cache followed by the real ones.
fn paging_sequence(weights: &[f64], k: usize, requests: &[usize], initial: &[usize]) -> Result<Vec<usize>> {
    let n = weights.len();
    if k == 0 || k >= n {
        return invalid("weighted paging needs 1 ≤ k < n");
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return invalid("page weights must be positive");
    }
    let mut init = initial.to_vec();
    init.sort_unstable();
    init.dedup();
    if init.len() != initial.len() || init.len() > k {
        return invalid("initial cache must hold at most k distinct pages");
    }
    if let Some(p) = requests.iter().chain(initial).find(|&&p| p >= n) {
        return invalid(format!("page {p} out of range"));
    }
    Ok(initial.iter().chain(requests).copied().collect())
}

/// Number of misses of Belady's farthest-in-future rule starting from `initial`.
pub fn belady_misses(n: usize, k: usize, requests: &[usize], initial: &[usize]) -> Result<usize> {
    paging_sequence(&vec![1.0; n], k, requests, initial)?;
    let mut cache: Vec<usize> = initial.to_vec();
    let mut misses = 0;
    for (t, &p) in requests.iter().enumerate() {
        if cache.contains(&p) {
            continue;
        }
        misses += 1;
        if cache.len() == k {
            let next_use = |q: usize| requests[t + 1..].iter().position(|&r| r == q).unwrap_or(usize::MAX);
            let (victim, _) = cache.iter().enumerate().max_by_key(|(_, &q)| next_use(q)).expect("cache is full");
            cache.swap_remove(victim);
        }
        cache.push(p);
    }
    Ok(misses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |i, j| (i as f64 - j as f64).abs()).unwrap()
    }

    #[test]
    fn requests_at_a_server_cost_nothing() {
        let sol = opt_kserver_flow(&line(3), 2, &[2, 2, 2], &[0, 2]).unwrap();
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn alternating_two_points_single_server() {
        let d = line(2);
        for m in 1..5 {
            let reqs: Vec<usize> = (0..2 * m).map(|t| (t + 1) % 2).collect();
            let sol = opt_kserver_flow(&d, 1, &reqs, &[0]).unwrap();
            // Starting at 0 with first request at 1: every request moves.
            assert_eq!(sol.cost, (2 * m) as f64);
            let sol = opt_kserver_flow(&d, 1, &reqs[1..], &[0]).unwrap();
            assert_eq!(sol.cost, (2 * m - 2) as f64);
        }
    }

    #[test]
    fn alternating_from_first_point_costs_2m_minus_1() {
        // 2m requests alternating 1,0,1,0,... starting with a server on 1 gives
        // the hand count; starting on 0 the sequence 0,1,0,1 costs 2m−1.
        let d = line(2);
        let reqs: Vec<usize> = (0..6).map(|t| t % 2).collect();
        assert_eq!(opt_kserver_flow(&d, 1, &reqs, &[0]).unwrap().cost, 5.0);
    }

    #[test]
    fn flow_matches_bruteforce_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let pts: Vec<(f64, f64)> = (0..5).map(|_| (rng.gen(), rng.gen())).collect();
            let d = DistanceMatrix::from_fn(5, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt())
                .unwrap();
            let reqs: Vec<usize> = (0..6).map(|_| rng.gen_range(0..5)).collect();
            let flow = opt_kserver_flow(&d, 2, &reqs, &[0, 1]).unwrap();
            let brute = opt_kserver_bruteforce(&d, 2, &reqs, &[0, 1]).unwrap();
            assert!((flow.cost - brute).abs() < 1e-5, "{} vs {}", flow.cost, brute);
        }
    }

    #[test]
    fn schedule_is_conservative_and_consistent() {
        let d = line(6);
        let reqs = [5, 0, 3, 5, 1, 0, 4];
        let sol = opt_kserver_flow(&d, 2, &reqs, &[0, 0]).unwrap();
        let mut total = 0.0;
        for (t, m) in sol.moves.iter().enumerate() {
            assert_eq!(m.to, reqs[t]);
            total += d.get(m.from, m.to);
            assert!(sol.configurations[t].contains(&reqs[t]));
        }
        assert_eq!(total, sol.cost);
    }

    #[test]
    fn rejects_too_many_servers() {
        assert!(opt_kserver_flow(&line(2), 3, &[0], &[0, 0, 1]).is_err());
    }

    #[test]
    fn weighted_paging_matches_belady_on_uniform_weights() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for k in 1..4 {
            for _ in 0..30 {
                let n = 5;
                let reqs: Vec<usize> = (0..25).map(|_| rng.gen_range(0..n)).collect();
                let init: Vec<usize> = (0..k).collect();
                let opt = opt_weighted_paging(&vec![1.0; n], k, &reqs, &init).unwrap();
                let bel = belady_misses(n, k, &reqs, &init).unwrap();
                assert_eq!(opt, bel as f64, "k={k} reqs={reqs:?}");
            }
        }
    }

    #[test]
    fn weighted_paging_prefers_evicting_light_pages() {
        // k = 1, pages 0 (heavy) and 1 (light): any request for the other page
        // must fetch it; the hand count is just the sum of fetched weights.
        let w = [10.0, 1.0, 1.0];
        assert_eq!(opt_weighted_paging(&w, 1, &[0, 1, 0], &[0]).unwrap(), 11.0);
        // k = 2 keeps the heavy page throughout and alternates the light ones.
        assert_eq!(opt_weighted_paging(&w, 2, &[1, 0, 2, 0, 1, 0, 2], &[0, 1]).unwrap(), 3.0);
    }
}
