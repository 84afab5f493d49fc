use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::chain::TauStack;
use super::metric::FiniteMetric;
use crate::error::{invalid, Result};

/// `μ_j([0, r])` for the truncated exponential
/// `dμ_j(r) = (kτ^j log k/(k−1)) e^{−rτ^j log k}` on `[0, τ^{−j}]`.
///
/// Written as `(k − k^{1−s})/(k − 1)` with `s = rτ^j`, so both endpoints are
/// exact in floating point.
pub fn radius_cdf(j: i32, k: usize, tau: f64, r: f64) -> f64 {
    let kk = k as f64;
    let s = (r * tau.powi(j)).clamp(0.0, 1.0);
    (kk - kk.powf(1.0 - s)) / (kk - 1.0)
}

/// Inverse-CDF sample from `μ_j`.
pub fn sample_radius<R: Rng + ?Sized>(j: i32, k: usize, tau: f64, rng: &mut R) -> Result<f64> {
    if k < 2 {
        return invalid("the radius distribution needs k ≥ 2");
    }
    let kk = k as f64;
    let u: f64 = rng.gen();
    let s = 1.0 - (kk - u * (kk - 1.0)).ln() / kk.ln();
    Ok(s.clamp(0.0, 1.0) * tau.powi(-j))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedEvent {
    /// Level-`level` reset at request `t` (clears levels `level..=M`).
    Reset { t: usize, level: usize },
    Insert { t: usize, level: usize, center: usize, radius: f64 },
}

/// Request-driven construction of an adapted τ-stack.
///
/// For every level `j ∈ 1..=M` the state holds the centers `N^j` in
/// insertion order with their radii, and the partial partition `P^j` as an
/// owner map: `owner[j][x]` is the index in `N^j` of the center whose block
/// holds `x`.
#[derive(Debug, Clone)]
pub struct EmbedderState {
    k: usize,
    tau: u32,
    m: usize,
    n: usize,
    seed: u64,
    rng: ChaCha8Rng,
    centers: Vec<Vec<(usize, f64)>>,
    owner: Vec<Vec<Option<usize>>>,
    resets: Vec<u64>,
    t: usize,
    events: Vec<EmbedEvent>,
    warning: Option<String>,
}

impl EmbedderState {
    /// With `k = 1` the radius distribution degenerates; radii are then fixed
    /// at `τ^{−j−1}` and a warning is recorded.
    pub fn new(metric: &FiniteMetric, k: usize, tau: u32, seed: u64) -> Result<Self> {
        if k == 0 {
            return invalid("k must be positive");
        }
        if tau < 4 {
            return invalid("the embedding needs τ ≥ 4");
        }
        let m = metric.scale_count(tau as f64);
        let n = metric.len();
        let warning = (k == 1).then(|| "k = 1: deterministic radii τ^{-j-1} are used".to_string());
        Ok(Self {
            k,
            tau,
            m,
            n,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            centers: vec![Vec::new(); m + 1],
            owner: vec![vec![None; n]; m + 1],
            resets: vec![0; m + 1],
            t: 0,
            events: Vec::new(),
            warning,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    /// `M`.
    pub fn depth(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Requests processed so far.
    pub fn time(&self) -> usize {
        self.t
    }

    /// `N^j` with radii, in insertion order.
    pub fn centers(&self, j: usize) -> &[(usize, f64)] {
        &self.centers[j]
    }

    /// `K_j`, the number of level-`j` resets so far (index 0 unused).
    pub fn reset_counts(&self) -> &[u64] {
        &self.resets
    }

    pub fn events(&self) -> &[EmbedEvent] {
        &self.events
    }

    fn level_radius(&self, j: usize) -> f64 {
        (self.tau as f64).powi(-(j as i32) - 1)
    }

    /// The reset half of a request: level `j` resets when `|N^j| ≥ 2k`.
    /// Resets only look at center counts, so running all of them before any
    /// insertion gives the same result as interleaving per level.
    pub fn apply_resets(&mut self) -> Vec<EmbedEvent> {
        let mut out = Vec::new();
        for j in 1..=self.m {
            if self.centers[j].len() >= 2 * self.k {
                for i in j..=self.m {
                    self.centers[i].clear();
                    self.owner[i].iter_mut().for_each(|o| *o = None);
                }
                self.resets[j] += 1;
                out.push(EmbedEvent::Reset { t: self.t, level: j });
            }
        }
        self.events.extend(out.iter().cloned());
        out
    }

    /// The insertion half of a request; advances time.
    pub fn apply_insertions(&mut self, metric: &FiniteMetric, request: usize) -> Result<Vec<EmbedEvent>> {
        if request >= self.n {
            return invalid(format!("request {request} outside the metric"));
        }
        let tau = self.tau as f64;
        let mut out = Vec::new();
        for j in 1..=self.m {
            let base = self.level_radius(j);
            if metric.dist_to_set(request, self.centers[j].iter().map(|c| c.0)) <= base {
                continue;
            }
            let extra = if self.k >= 2 { sample_radius(j as i32 + 1, self.k, tau, &mut self.rng)? } else { 0.0 };
            let radius = base + extra;
            let idx = self.centers[j].len();
            self.centers[j].push((request, radius));
            for x in 0..self.n {
                if self.owner[j][x].is_none() && metric.get(request, x) <= radius {
                    self.owner[j][x] = Some(idx);
                }
            }
            out.push(EmbedEvent::Insert { t: self.t, level: j, center: request, radius });
        }
        self.t += 1;
        self.events.extend(out.iter().cloned());
        Ok(out)
    }

    /// Processes one request: resets, then insertions.
    pub fn process_request(&mut self, metric: &FiniteMetric, request: usize) -> Result<Vec<EmbedEvent>> {
        let mut ev = self.apply_resets();
        ev.extend(self.apply_insertions(metric, request)?);
        Ok(ev)
    }

    /// The current stack, partial partitions completed by singletons.
    pub fn stack(&self) -> TauStack {
        let levels: Vec<Vec<Vec<usize>>> = (1..=self.m)
            .map(|j| {
                let mut blocks = vec![Vec::new(); self.centers[j].len()];
                for (x, o) in self.owner[j].iter().enumerate() {
                    if let Some(c) = o {
                        blocks[*c].push(x);
                    }
                }
                blocks.retain(|b| !b.is_empty());
                blocks
            })
            .collect();
        TauStack::from_partial(self.n, self.tau, &levels).expect("owner maps are partitions")
    }
}

/// Monte Carlo estimate of a separation probability with its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationEstimate {
    pub trials: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// `(2+4e)·d(x,y)·τ^{j+1}·log k`.
    pub bound: f64,
}

impl SeparationEstimate {
    /// `estimate ≤ bound + 3·stderr`.
    pub fn within_bound(&self) -> bool {
        self.estimate <= self.bound + 3.0 * self.stderr
    }
}

/// Estimates `Pr[P^j_t(x) ≠ P^j_t(y)]` after the request prefix over the
/// radius randomness.
///
/// The centers depend only on the requests, so they are computed once; each
/// trial resamples the level-`j` radii from its own stream `(seed, trial)`
/// and assigns `x` and `y` to the first center whose ball holds them.
pub fn separation_probability_mc(
    metric: &FiniteMetric,
    k: usize,
    tau: u32,
    prefix: &[usize],
    j: usize,
    (x, y): (usize, usize),
    trials: usize,
    seed: u64,
) -> Result<SeparationEstimate> {
    if k < 2 {
        return invalid("separation bounds need k ≥ 2");
    }
    if trials == 0 {
        return invalid("at least one trial is needed");
    }
    let mut st = EmbedderState::new(metric, k, tau, seed)?;
    if j == 0 || j > st.depth() {
        return invalid(format!("level {j} outside 1..={}", st.depth()));
    }
    for &r in prefix {
        st.process_request(metric, r)?;
    }
    let tf = tau as f64;
    let centers: Vec<usize> = st.centers(j).iter().map(|c| c.0).collect();
    if metric.dist_to_set(y, centers.iter().copied()) > tf.powi(-(j as i32) - 1) {
        return invalid("y is farther than τ^{-j-1} from every level-j center");
    }
    let base = tf.powi(-(j as i32) - 1);
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64 + 1);
            let mut bx = None;
            let mut by = None;
            for (i, &c) in centers.iter().enumerate() {
                let r = base + sample_radius(j as i32 + 1, k, tf, &mut rng).expect("k ≥ 2 checked");
                if bx.is_none() && metric.get(c, x) <= r {
                    bx = Some(i);
                }
                if by.is_none() && metric.get(c, y) <= r {
                    by = Some(i);
                }
            }
            let same = x == y || (bx.is_some() && bx == by);
            usize::from(!same)
        })
        .sum();
    let p = hits as f64 / trials as f64;
    let stderr = (p * (1.0 - p) / trials as f64).sqrt();
    let bound = (2.0 + 4.0 * std::f64::consts::E) * metric.get(x, y) * tf.powi(j as i32 + 1) * (k as f64).ln();
    Ok(SeparationEstimate { trials, estimate: p, stderr, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::chain::verify_stack_lemmas;

    fn grid() -> FiniteMetric {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64, (i / 3) as f64]).collect();
        FiniteMetric::from_points(&pts, 1).unwrap()
    }

    #[test]
    fn cdf_endpoints_and_support() {
        for k in [2, 3, 7] {
            for j in [1, 2, 3] {
                assert_eq!(radius_cdf(j, k, 4.0, 0.0), 0.0);
                assert_eq!(radius_cdf(j, k, 4.0, 4f64.powi(-j)), 1.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let r = sample_radius(2, 3, 4.0, &mut rng).unwrap();
            assert!((0.0..=1.0 / 16.0).contains(&r));
        }
        assert!(sample_radius(1, 1, 4.0, &mut rng).is_err());
    }

    #[test]
    fn first_request_inserts_everywhere_and_repeats_do_nothing() {
        let m = grid();
        let mut st = EmbedderState::new(&m, 2, 4, 9).unwrap();
        let ev = st.process_request(&m, 4).unwrap();
        assert_eq!(ev.len(), st.depth());
        assert!(ev.iter().all(|e| matches!(e, EmbedEvent::Insert { center: 4, .. })));
        for _ in 0..5 {
            assert!(st.process_request(&m, 4).unwrap().is_empty());
        }
        for (j, c) in (1..=st.depth()).map(|j| (j, st.centers(j))) {
            let base = 4f64.powi(-(j as i32) - 1);
            assert!(c[0].1 >= base && c[0].1 <= 2.0 * base);
        }
    }

    #[test]
    fn resets_fire_after_two_k_far_centers() {
        let m = grid();
        let k = 2;
        let mut st = EmbedderState::new(&m, k, 4, 5).unwrap();
        // Level-1 radius is 1/16 while grid neighbours are 1/4 apart, so
        // every distinct request inserts at level 1.
        for r in [0, 2, 6, 8, 4] {
            st.process_request(&m, r).unwrap();
        }
        assert_eq!(st.reset_counts()[1], 1);
        assert_eq!(st.centers(1).len(), 1);
        assert!(verify_stack_lemmas(&st.stack(), &m).passed());
    }

    #[test]
    fn event_logs_are_deterministic() {
        let m = grid();
        let run = || {
            let mut st = EmbedderState::new(&m, 3, 4, 42).unwrap();
            for r in [1, 5, 7, 0, 3, 8, 2, 6, 4, 1] {
                st.process_request(&m, r).unwrap();
            }
            st.events().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn separation_of_identical_points_is_zero() {
        let m = grid();
        let e = separation_probability_mc(&m, 2, 4, &[4, 0], 1, (4, 4), 200, 1).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert!(separation_probability_mc(&m, 2, 4, &[4], 1, (0, 8), 10, 1).is_err());
    }
}
