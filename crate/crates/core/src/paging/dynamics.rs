use super::PagingInstance;
use crate::error::{Error, Result};

/// `μ = (x_r/w_r) / Σ_{i : x_i < 1} x_i/w_i`. The requested page always
/// counts as free: once it is requested it leaves the face `x_r = 1`
/// immediately, so its own upper-bound multiplier vanishes.
pub fn mu_value(x: &[f64], w: &[f64], r: usize) -> f64 {
    let den: f64 = (0..x.len()).filter(|&i| i == r || x[i] < 1.0).map(|i| x[i] / w[i]).sum();
    (x[r] / w[r]) / den
}

/// Velocity `∂_t x_i = (x_i/w_i)(−1_{i=r} − λ_i + μ)` with `λ_i = μ` on
/// saturated pages other than `r`.
pub fn paging_velocity(x: &[f64], w: &[f64], r: usize, saturated: &[bool]) -> (Vec<f64>, f64) {
    let den: f64 = (0..x.len()).filter(|&i| !saturated[i]).map(|i| x[i] / w[i]).sum();
    let mu = (x[r] / w[r]) / den;
    let v = (0..x.len())
        .map(|i| {
            if saturated[i] {
                0.0
            } else {
                let drive = if i == r { -1.0 } else { 0.0 };
                x[i] / w[i] * (drive + mu)
            }
        })
        .collect();
    (v, mu)
}

/// One phase of a request: the saturated set is fixed throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLog {
    pub saturated: Vec<usize>,
    pub mu_start: f64,
    pub mu_end: f64,
    pub duration: f64,
    /// `∫ w_r |∂_t x_r|` over the phase.
    pub into_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PagingSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServeLog {
    pub request: usize,
    pub phases: Vec<PhaseLog>,
    pub duration: f64,
    pub into_cost: f64,
    /// RK4 nodes including both endpoints (empty for an already served page).
    pub samples: Vec<PagingSample>,
}

/// Relative change of any free coordinate allowed in one RK4 step.
const REL_STEP: f64 = 0.02;
const EVENT_TOL: f64 = 1e-15;

/// Serves request `r` from `x ∈ P_δ`: integrates the entropic dynamics phase
/// by phase with RK4 until `x_r = δ`. Phases end when a free page saturates
/// at 1.
pub fn serve_page_request(x: &[f64], inst: &PagingInstance, r: usize) -> Result<(Vec<f64>, ServeLog)> {
    let n = inst.n();
    let w = inst.weights();
    let delta = inst.delta();
    if r >= n {
        return Err(Error::Invalid(format!("page {r} out of range")));
    }
    if x.len() != n {
        return Err(Error::Invalid("state has the wrong dimension".into()));
    }
    let mut log = ServeLog { request: r, ..ServeLog::default() };
    if x[r] <= delta {
        return Ok((x.to_vec(), log));
    }
    let mut x = x.to_vec();
    let mut saturated: Vec<bool> = (0..n).map(|i| i != r && x[i] >= 1.0).collect();
    let mut t = 0.0;
    let (v0, mu0) = paging_velocity(&x, w, r, &saturated);
    log.samples.push(PagingSample { t, x: x.clone(), v: v0, mu: mu0 });

    loop {
        if saturated.iter().enumerate().all(|(i, &s)| s || i == r) {
            return Err(Error::Internal("no free page besides the requested one".into()));
        }
        let (_, mu_start) = paging_velocity(&x, w, r, &saturated);
        let mut phase = PhaseLog {
            saturated: (0..n).filter(|&i| saturated[i]).collect(),
            mu_start,
            mu_end: mu_start,
            duration: 0.0,
            into_cost: 0.0,
        };
        let ended = loop {
            let (v, _) = paging_velocity(&x, w, r, &saturated);
            let mut h = f64::INFINITY;
            for i in 0..n {
                if v[i] != 0.0 {
                    h = h.min(REL_STEP * x[i] / v[i].abs());
                }
            }
            let mut next = rk4(&x, w, r, &saturated, h);
            // Which event, if any, falls inside this step?
            let crosses = |y: &[f64]| y[r] <= delta || (0..n).any(|i| !saturated[i] && i != r && y[i] >= 1.0);
            let mut event = None;
            if crosses(&next) {
                let (mut lo, mut hi) = (0.0, h);
                while hi - lo > EVENT_TOL * h.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if crosses(&rk4(&x, w, r, &saturated, mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if mid == lo && mid == hi {
                        break;
                    }
                }
                h = hi;
                next = rk4(&x, w, r, &saturated, h);
                if next[r] <= delta {
                    next[r] = delta;
                    event = Some(None);
                } else {
                    let i = (0..n)
                        .filter(|&i| !saturated[i] && i != r)
                        .max_by(|&a, &b| next[a].total_cmp(&next[b]))
                        .expect("a free page exists");
                    next[i] = 1.0;
                    event = Some(Some(i));
                }
            }
            phase.into_cost += w[r] * (x[r] - next[r]);
            phase.duration += h;
            t += h;
            x = next;
            let (vn, mun) = paging_velocity(&x, w, r, &saturated);
            phase.mu_end = mun;
            log.samples.push(PagingSample { t, x: x.clone(), v: vn, mu: mun });
            if let Some(e) = event {
                break e;
            }
        };
        log.into_cost += phase.into_cost;
        log.duration += phase.duration;
        log.phases.push(phase);
        match ended {
            None => return Ok((x, log)),
            Some(i) => saturated[i] = true,
        }
    }
}

fn rk4(x: &[f64], w: &[f64], r: usize, saturated: &[bool], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    let (k1, _) = paging_velocity(x, w, r, saturated);
    let (k2, _) = paging_velocity(&add(x, &k1, h / 2.0), w, r, saturated);
    let (k3, _) = paging_velocity(&add(x, &k2, h / 2.0), w, r, saturated);
    let (k4, _) = paging_velocity(&add(x, &k3, h), w, r, saturated);
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_hand_values() {
        assert_eq!(mu_value(&[0.5, 0.5], &[1.0, 1.0], 0), 0.5);
        assert!((mu_value(&[0.5, 1.0, 0.5], &[1.0, 1.0, 2.0], 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mu_value(&[0.3, 1.0, 1.0], &[1.0, 1.0, 1.0], 0), 1.0);
    }

    #[test]
    fn two_pages_reach_forced_terminal_point() {
        let inst = PagingInstance::new(vec![1.0, 1.0], 1, Some(0.25)).unwrap();
        let (x, log) = serve_page_request(&[0.5, 0.5], &inst, 0).unwrap();
        assert_eq!(x[0], 0.25);
        assert!((x[1] - 0.75).abs() < 1e-14);
        assert_eq!(log.phases.len(), 1);
        assert!((log.into_cost - 0.25).abs() < 1e-14);
    }

    #[test]
    fn served_page_is_identity() {
        let inst = PagingInstance::new(vec![1.0; 3], 1, None).unwrap();
        let x = [0.5, 1.0, 0.5];
        let (y, log) = serve_page_request(&x, &inst, 0).unwrap();
        assert_eq!(y, vec![0.5, 1.0, 0.5]);
        // δ = 1/2 here, so page 0 already sits on the floor.
        assert_eq!(log.into_cost, 0.0);
    }

    #[test]
    fn saturated_page_stays_put() {
        let inst = PagingInstance::new(vec![1.0; 3], 1, Some(0.1)).unwrap();
        let (_, log) = serve_page_request(&[0.6, 1.0, 0.4], &inst, 0).unwrap();
        for s in &log.samples {
            assert_eq!(s.x[1], 1.0);
            assert_eq!(s.v[1], 0.0);
        }
    }

    #[test]
    fn saturation_event_opens_a_new_phase() {
        let inst = PagingInstance::new(vec![1.0, 1.0, 1.0], 1, Some(0.05)).unwrap();
        let (x, log) = serve_page_request(&[0.9, 0.15, 0.95], &inst, 0).unwrap();
        assert_eq!(log.phases.len(), 2);
        assert_eq!(log.phases[1].saturated, vec![2]);
        assert_eq!(x[2], 1.0);
        assert!((x.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }
}
