use crate::error::{invalid, Result};

/// Collapses `[ℓ, ℓ+ε]` to `ℓ` for every integer `ℓ ≥ 0` and is affine with
/// slope `1/(1−ε)` on `[ℓ+ε, ℓ+1]`.
pub fn sigma_map(v: f64, eps: f64) -> f64 {
    let l = v.floor();
    let frac = v - l;
    if frac <= eps {
        l
    } else {
        l + (frac - eps) / (1.0 - eps)
    }
}

/// `z = (1 − x)/(1 − δ)`.
pub fn cache_measure(x: &[f64], delta: f64) -> Vec<f64> {
    x.iter().map(|v| (1.0 - v) / (1.0 - delta)).collect()
}

/// A rounded cache schedule on the weighted star: page masses `σ(z)` plus the
/// parked mass `k − Σσ(z)` at the center.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundedSchedule {
    pub cache: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    /// `Σ w_i |Δσ(z_i)|`; routing through the center costs the same.
    pub movement_cost: f64,
    /// `Σ w_i (Δσ(z_i))₊`, the mass moved into pages.
    pub fetch_cost: f64,
    /// `Σ w_i |Δz_i|` of the unrounded path.
    pub raw_cost: f64,
}

/// Rounds a sampled path in `P_δ` (with monotone coordinates between
/// samples) to a fractional `k`-paging schedule.
pub fn round_paging(path: &[Vec<f64>], weights: &[f64], k: usize, delta: f64) -> Result<RoundedSchedule> {
    let eps = delta * k as f64 / (1.0 - delta);
    if eps >= 1.0 {
        return invalid(format!("ε = {eps} ≥ 1: δ too large for rounding"));
    }
    let mut cache = Vec::with_capacity(path.len());
    let mut center = Vec::with_capacity(path.len());
    let (mut movement, mut fetch, mut raw) = (0.0, 0.0, 0.0);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for x in path {
        if x.len() != weights.len() {
            return invalid("path point has the wrong dimension");
        }
        let z = cache_measure(x, delta);
        let s: Vec<f64> = z.iter().map(|&v| sigma_map(v, eps)).collect();
        let total: f64 = s.iter().sum();
        if total > k as f64 + 1e-9 {
            return invalid(format!("rounded mass {total} exceeds k"));
        }
        if let Some((pz, ps)) = &prev {
            for i in 0..weights.len() {
                let d = s[i] - ps[i];
                movement += weights[i] * d.abs();
                fetch += weights[i] * d.max(0.0);
                raw += weights[i] * (z[i] - pz[i]).abs();
            }
        }
        center.push(k as f64 - total);
        cache.push(s.clone());
        prev = Some((z, s));
    }
    Ok(RoundedSchedule { cache, center, movement_cost: movement, fetch_cost: fetch, raw_cost: raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_hand_values() {
        assert_eq!(sigma_map(0.25, 0.5), 0.0);
        assert_eq!(sigma_map(0.75, 0.5), 0.5);
        assert_eq!(sigma_map(1.0, 0.5), 1.0);
        for m in 0..5 {
            assert_eq!(sigma_map(m as f64, 0.3), m as f64);
            assert_eq!(sigma_map(m as f64 + 0.3, 0.3), m as f64);
        }
    }

    #[test]
    fn constant_path_costs_nothing() {
        let x = vec![0.25, 0.75, 1.0];
        let r = round_paging(&[x.clone(), x], &[1.0, 2.0, 3.0], 1, 0.25).unwrap();
        assert_eq!(r.movement_cost, 0.0);
        assert_eq!(r.center.len(), 2);
    }

    #[test]
    fn elementary_move_respects_lipschitz_bound() {
        let (w, delta, k) = ([1.0, 2.0, 4.0], 0.2, 1);
        let eps = delta * k as f64 / (1.0 - delta);
        let m = 0.3;
        let a = vec![0.5, 0.7, 0.8];
        let b = vec![0.5 - m, 0.7 + m, 0.8];
        let r = round_paging(&[a, b], &w, k, delta).unwrap();
        let bound = (w[0] + w[1]) * m / ((1.0 - delta) * (1.0 - eps));
        assert!(r.movement_cost <= bound + 1e-12);
        assert!(r.movement_cost <= r.raw_cost / (1.0 - eps) + 1e-12);
    }
}
