//! Fractional weighted paging by entropic mirror descent on the antipaging
//! polytope `P_δ = {x ∈ [δ,1]ⁿ : Σx = n − k}`, and the σ-transform that
//! turns the resulting `k/(1−δ)`-server schedule into a genuine fractional
//! `k`-paging schedule.
//!
//! `x_i` is the fractional absence of page `i`; the cache holds
//! `z_i = (1 − x_i)/(1 − δ)`. A request for `r` drives `x_r` down to `δ`.

mod dynamics;
mod rounding;

pub use dynamics::{mu_value, paging_velocity, serve_page_request, PagingSample, PhaseLog, ServeLog};
pub use rounding::{cache_measure, round_paging, sigma_map, RoundedSchedule};

use crate::error::{invalid, Result};
use crate::offline_opt::opt_weighted_paging;

#[derive(Debug, Clone, PartialEq)]
pub struct PagingInstance {
    weights: Vec<f64>,
    k: usize,
    delta: f64,
}

impl PagingInstance {
    /// `delta` defaults to `1/(2k)`.
    pub fn new(weights: Vec<f64>, k: usize, delta: Option<f64>) -> Result<Self> {
        let n = weights.len();
        if k == 0 || k >= n {
            return invalid(format!("need 1 ≤ k < n (k = {k}, n = {n})"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return invalid("page weights must be positive and finite");
        }
        let delta = delta.unwrap_or(1.0 / (2.0 * k as f64));
        if !(delta > 0.0 && delta < 1.0) || n as f64 * delta > (n - k) as f64 {
            return invalid(format!("δ = {delta} leaves P_δ empty"));
        }
        Ok(Self { weights, k, delta })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `ε = δk/(1−δ)`, so that the cache mass `k/(1−δ)` equals `k + ε`.
    pub fn eps(&self) -> f64 {
        self.delta * self.k as f64 / (1.0 - self.delta)
    }

    /// The integral state with `cache` resident, pulled toward the barycenter
    /// just far enough to enter `P_δ`. Cached pages land exactly on `x = δ`.
    pub fn initial_state(&self, cache: &[usize]) -> Result<Vec<f64>> {
        let (n, k) = (self.n(), self.k);
        let mut sorted = cache.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k || sorted.iter().any(|&p| p >= n) {
            return invalid("initial cache must list k distinct valid pages");
        }
        let bary = (n - k) as f64 / n as f64;
        let theta = self.delta / bary;
        let mut x = vec![1.0 - theta + theta * bary; n];
        for &p in &sorted {
            x[p] = self.delta;
        }
        Ok(x)
    }

    /// `max_i |1 + log x_i|`, the `ℓ∞(1/w)` norm of `∇Φ(x)`.
    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| (1.0 + v.ln()).abs()).fold(0.0, f64::max)
    }
}

/// The first `k` distinct requested pages, topped up with the smallest unused
/// page indices.
pub fn default_initial_cache(n: usize, k: usize, requests: &[usize]) -> Vec<usize> {
    let mut cache = Vec::with_capacity(k);
    for p in requests.iter().copied().chain(0..n) {
        if cache.len() == k {
            break;
        }
        if !cache.contains(&p) {
            cache.push(p);
        }
    }
    cache
}

/// Pointwise checks accumulated over the samples of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PagingChecks {
    pub samples: usize,
    /// Largest `slope − (−x_r)` of `D̂_Φ(x̂; x(t))` over integral `x̂` with `x̂_r = 0`.
    pub descent_excess: f64,
    /// Largest `|Σx − (n − k)|`.
    pub mass_error: f64,
    /// Largest `w_r|∂_t x_r| / x_r − 1` while `x_r < 1`.
    pub movement_excess: f64,
    /// Largest `−∂_t x_i` over non-requested pages.
    pub monotonicity_excess: f64,
    /// Largest `x_i − 1` or `δ − x_i`.
    pub box_excess: f64,
}

impl PagingChecks {
    fn new() -> Self {
        Self {
            samples: 0,
            descent_excess: f64::NEG_INFINITY,
            mass_error: 0.0,
            movement_excess: f64::NEG_INFINITY,
            monotonicity_excess: f64::NEG_INFINITY,
            box_excess: f64::NEG_INFINITY,
        }
    }

    fn absorb(&mut self, inst: &PagingInstance, r: usize, s: &PagingSample) {
        let (n, k, w) = (inst.n(), inst.k(), inst.weights());
        self.samples += 1;
        self.mass_error = self.mass_error.max((s.x.iter().sum::<f64>() - (n - k) as f64).abs());
        if s.x[r] < 1.0 {
            self.movement_excess = self.movement_excess.max(w[r] * s.v[r].abs() / s.x[r] - 1.0);
        }
        for i in 0..n {
            self.box_excess = self.box_excess.max(s.x[i] - 1.0).max(inst.delta() - s.x[i]);
            if i != r {
                self.monotonicity_excess = self.monotonicity_excess.max(-s.v[i]);
            }
        }
        self.descent_excess = self.descent_excess.max(descent_slope_excess(inst, r, &s.x, &s.v));
    }

    fn merge(&mut self, o: &Self) {
        self.samples += o.samples;
        self.descent_excess = self.descent_excess.max(o.descent_excess);
        self.mass_error = self.mass_error.max(o.mass_error);
        self.movement_excess = self.movement_excess.max(o.movement_excess);
        self.monotonicity_excess = self.monotonicity_excess.max(o.monotonicity_excess);
        self.box_excess = self.box_excess.max(o.box_excess);
    }
}

/// Step used for the forward difference of `D̂_Φ(x̂; x(t))`.
const FD_STEP: f64 = 1e-7;

/// Worst case over integral `x̂ ∈ P` with `x̂_r = 0` of
/// `[D̂(x̂; x + ηv) − D̂(x̂; x)]/η + x_r`.
///
/// The difference is affine in `x̂` with coefficient
/// `c = −(∇Φ(x + ηv) − ∇Φ(x))/η`, so the maximiser puts `x̂ = 1` on the
/// `n − k` largest `c_i` with `i ≠ r`.
pub fn descent_slope_excess(inst: &PagingInstance, r: usize, x: &[f64], v: &[f64]) -> f64 {
    let (n, k, w) = (inst.n(), inst.k(), inst.weights());
    let eta = FD_STEP;
    let xe: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eta * b).collect();
    let phi = |y: &[f64]| -> f64 { y.iter().zip(w).map(|(a, wi)| wi * a * a.ln()).sum() };
    let grad = |y: &[f64], i: usize| w[i] * (1.0 + y[i].ln());
    // Part independent of x̂: −Φ(x') + ∇Φ(x')·x' + Φ(x) − ∇Φ(x)·x.
    let mut base = -phi(&xe) + phi(x);
    for i in 0..n {
        base += grad(&xe, i) * xe[i] - grad(x, i) * x[i];
    }
    let mut c: Vec<f64> = (0..n).filter(|&i| i != r).map(|i| -(grad(&xe, i) - grad(x, i))).collect();
    c.sort_by(|a, b| b.total_cmp(a));
    let lin: f64 = c.iter().take(n - k).sum();
    (base + lin) / eta + x[r]
}

/// Largest `‖∇Φ(x)‖_{ℓ∞(1/w)}` over random points of `P_δ` (uniform box
/// samples shifted and clamped onto the mass constraint).
pub fn sampled_gradient_bound<R: rand::Rng>(inst: &PagingInstance, rng: &mut R, samples: usize) -> f64 {
    let (n, k, delta) = (inst.n(), inst.k(), inst.delta());
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(delta..=1.0)).collect();
        // Shift and clamp to hit the mass n − k (monotone in the shift).
        let target = (n - k) as f64;
        let mass = |s: f64| u.iter().map(|v| (v + s).clamp(delta, 1.0)).sum::<f64>();
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x: Vec<f64> = u.iter().map(|v| (v + hi).clamp(delta, 1.0)).collect();
        worst = worst.max(inst.gradient_norm(&x));
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub page: usize,
    pub duration: f64,
    pub phases: usize,
    /// `∫ w_r|∂_t x_r|`, the charged movement of the fractional dynamics.
    pub into_cost: f64,
    /// Fetch cost of the rounded schedule for this request.
    pub fetch_cost: f64,
}

#[derive(Debug, Clone)]
pub struct PagingRun {
    pub requests: Vec<usize>,
    pub initial_cache: Vec<usize>,
    /// Fetch cost of the σ-rounded schedule.
    pub alg_cost: f64,
    /// `Σ ∫ w_r|∂_t x_r|` before rounding.
    pub fractional_into_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    pub records: Vec<RequestRecord>,
    pub checks: Option<PagingChecks>,
    pub final_state: Vec<f64>,
}

/// Serves `count` requests, asking `next(t, x)` for each one so adaptive
/// adversaries can inspect the state.
pub fn run_paging_adaptive(
    inst: &PagingInstance,
    initial_cache: &[usize],
    count: usize,
    mut next: impl FnMut(usize, &[f64]) -> usize,
    verify: bool,
) -> Result<PagingRun> {
    let mut x = inst.initial_state(initial_cache)?;
    let eps = inst.eps();
    let mut requests = Vec::with_capacity(count);
    let mut records = Vec::with_capacity(count);
    let mut checks = verify.then(PagingChecks::new);
    let (mut alg, mut frac) = (0.0, 0.0);
    for t in 0..count {
        let r = next(t, &x);
        if r >= inst.n() {
            return invalid(format!("request {r} out of range"));
        }
        let z_before = cache_measure(&x, inst.delta());
        let (y, log) = serve_page_request(&x, inst, r)?;
        let z_after = cache_measure(&y, inst.delta());
        // Only z_r grows during a request, so the fetch cost is its σ increment.
        let fetch: f64 = (0..inst.n())
            .map(|i| inst.weights()[i] * (sigma_map(z_after[i], eps) - sigma_map(z_before[i], eps)).max(0.0))
            .sum();
        if let Some(c) = checks.as_mut() {
            let mut local = PagingChecks::new();
            for s in &log.samples {
                local.absorb(inst, r, s);
            }
            c.merge(&local);
        }
        alg += fetch;
        frac += log.into_cost;
        records.push(RequestRecord {
            page: r,
            duration: log.duration,
            phases: log.phases.len(),
            into_cost: log.into_cost,
            fetch_cost: fetch,
        });
        requests.push(r);
        x = y;
    }
    let opt = opt_weighted_paging(inst.weights(), inst.k(), &requests, initial_cache)?;
    let ratio = if opt > 0.0 { alg / opt } else if alg == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(PagingRun {
        requests,
        initial_cache: initial_cache.to_vec(),
        alg_cost: alg,
        fractional_into_cost: frac,
        opt_cost: opt,
        ratio,
        records,
        checks,
        final_state: x,
    })
}

/// Serves a fixed request sequence from the default initial cache.
pub fn run_paging(inst: &PagingInstance, requests: &[usize], verify: bool) -> Result<PagingRun> {
    let cache = default_initial_cache(inst.n(), inst.k(), requests);
    run_paging_adaptive(inst, &cache, requests.len(), |t, _| requests[t], verify)
}
