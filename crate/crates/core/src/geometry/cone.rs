use std::collections::HashSet;

use super::metric::LocalMetric;
use super::nnls::{self, NnlsOptions};
use super::sparse::SparseVec;
use crate::error::{invalid, Result};

/// `{Σ c_g g : c_g ≥ 0}` for a finite list of nonzero generators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratedCone {
    generators: Vec<Vec<f64>>,
}

impl GeneratedCone {
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(n) = generators.first().map(|g| g.len()) {
            for (i, g) in generators.iter().enumerate() {
                if g.len() != n {
                    return invalid(format!("generator {i} has length {} (expected {n})", g.len()));
                }
                if g.iter().all(|&v| v == 0.0) {
                    return invalid(format!("generator {i} is zero"));
                }
            }
        }
        Ok(Self { generators })
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Drops generators that are positive multiples of an earlier one.
    pub fn deduplicated(&self) -> Self {
        let mut seen = HashSet::new();
        let generators = self
            .generators
            .iter()
            .filter(|g| {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let key: Vec<i64> = g.iter().map(|v| (v / norm * 1e9).round() as i64).collect();
                seen.insert(key)
            })
            .cloned()
            .collect();
        Self { generators }
    }

    /// Is `v` in the polar cone, i.e. `⟨v,g⟩_M ≤ tol` for every generator?
    pub fn polar_contains(&self, v: &[f64], metric: &LocalMetric, tol: f64) -> bool {
        self.generators.iter().all(|g| metric.inner(v, g) <= tol)
    }

    /// Is `x` in the cone, up to a metric residual of `tol`?
    pub fn contains(&self, x: &[f64], metric: &LocalMetric, tol: f64) -> Result<bool> {
        let (u, _) = moreau_decompose(self, x, metric)?;
        let d: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - b).collect();
        Ok(metric.norm(&d) <= tol)
    }
}

/// Full output of a Moreau decomposition, including the cone multipliers.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// One coefficient per generator of the (deduplicated) cone.
    pub coefficients: Vec<f64>,
    pub cone: GeneratedCone,
}

/// Splits `x = u + v` with `u` the `M`-projection of `x` onto `N` and `v` in
/// the polar of `N`, so that `⟨u,v⟩_M = 0`.
pub fn moreau_decompose(cone: &GeneratedCone, x: &[f64], metric: &LocalMetric) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = moreau_decompose_full(cone, x, metric, &[])?;
    Ok((d.u, d.v))
}

/// As [`moreau_decompose`], with an optional warm-start guess of generator
/// indices and the multipliers returned.
pub fn moreau_decompose_full(
    cone: &GeneratedCone,
    x: &[f64],
    metric: &LocalMetric,
    warm: &[usize],
) -> Result<Decomposition> {
    if metric.dim() != x.len() {
        return invalid("metric and point dimensions differ");
    }
    if let Some(g) = cone.generators.first() {
        if g.len() != x.len() {
            return invalid("cone and point dimensions differ");
        }
    }
    let cone = cone.deduplicated();
    let cols: Vec<SparseVec> = cone.generators.iter().map(|g| SparseVec::from_dense(g)).collect();
    let proj = nnls::project(&cols, x, metric.diag(), warm, &NnlsOptions::default())?;
    let v = x.iter().zip(&proj.u).map(|(a, b)| a - b).collect();
    Ok(Decomposition { u: proj.u, v, coefficients: proj.lambda, cone })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthant2() -> GeneratedCone {
        GeneratedCone::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap()
    }

    #[test]
    fn hand_checked_projection() {
        let (u, v) = moreau_decompose(&orthant2(), &[-1.0, 2.0, 3.0], &LocalMetric::identity(3)).unwrap();
        assert_eq!(u, vec![0.0, 2.0, 0.0]);
        assert_eq!(v, vec![-1.0, 0.0, 3.0]);
    }

    #[test]
    fn points_in_cone_and_polar_are_fixed() {
        let m = LocalMetric::identity(3);
        let (u, v) = moreau_decompose(&orthant2(), &[1.0, 1.0, 0.0], &m).unwrap();
        assert_eq!((u, v), (vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]));
        let (u, v) = moreau_decompose(&orthant2(), &[-1.0, -1.0, 5.0], &m).unwrap();
        assert_eq!((u, v), (vec![0.0, 0.0, 0.0], vec![-1.0, -1.0, 5.0]));
    }

    #[test]
    fn zero_generator_rejected() {
        assert!(GeneratedCone::new(vec![vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn dedup_keeps_first_of_parallel_pair() {
        let c = GeneratedCone::new(vec![vec![1.0, 1.0], vec![3.0, 3.0], vec![-1.0, -1.0]]).unwrap();
        assert_eq!(c.deduplicated().generators().len(), 2);
    }

    #[test]
    fn weighted_metric_projection_is_orthogonal() {
        let c = GeneratedCone::new(vec![vec![1.0, 1.0]]).unwrap();
        let m = LocalMetric::new(vec![1.0, 3.0]).unwrap();
        let (u, v) = moreau_decompose(&c, &[1.0, 0.0], &m).unwrap();
        // λ = ⟨x,g⟩_M / ⟨g,g⟩_M = 1/4.
        assert!((u[0] - 0.25).abs() < 1e-15 && (u[1] - 0.25).abs() < 1e-15);
        assert!(m.inner(&u, &v).abs() < 1e-15);
    }
}
