use crate::error::{invalid, Result};

/// Diagonal local metric `H(x) = (∇²Φ(x))⁻¹` at a point.
///
/// Dual vectors (drives, normals) are measured with `⟨a,b⟩_x = a·Hb`;
/// velocities are measured with the inverse diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMetric {
    diag: Vec<f64>,
    inv: Vec<f64>,
}

impl LocalMetric {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return invalid(format!("metric entry {i} is {} (must be positive and finite)", diag[i]));
        }
        let inv = diag.iter().map(|d| 1.0 / d).collect();
        Ok(Self { diag, inv })
    }

    /// Builds the metric from the Hessian diagonal of a separable potential.
    pub fn from_hessian(hess: &[f64]) -> Result<Self> {
        if let Some(i) = hess.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return invalid(format!("hessian entry {i} is {} (must be positive and finite)", hess[i]));
        }
        Ok(Self { diag: hess.iter().map(|d| 1.0 / d).collect(), inv: hess.to_vec() })
    }

    pub fn identity(n: usize) -> Self {
        Self { diag: vec![1.0; n], inv: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entries of `H`.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Entries of `H⁻¹ = ∇²Φ`.
    pub fn inv_diag(&self) -> &[f64] {
        &self.inv
    }

    /// `a·Hb`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.diag).map(|((x, y), h)| x * h * y).sum()
    }

    /// `‖a‖_x = sqrt(a·Ha)`, the norm on drives.
    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// `‖v‖_{x,*} = sqrt(v·H⁻¹v)`, the norm on velocities.
    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.inv).map(|(x, g)| x * x * g).sum::<f64>().sqrt()
    }

    /// `Ha`.
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(&self.diag).map(|(x, h)| x * h).collect()
    }

    /// `H⁻¹v`.
    pub fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.inv).map(|(x, g)| x * g).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_entries() {
        assert!(LocalMetric::new(vec![1.0, 0.0]).is_err());
        assert!(LocalMetric::new(vec![1.0, f64::NAN]).is_err());
        assert!(LocalMetric::from_hessian(&[-1.0]).is_err());
    }

    #[test]
    fn norms_are_dual() {
        let m = LocalMetric::new(vec![2.0, 0.5]).unwrap();
        let a = [1.0, 3.0];
        // v = Ha has ‖v‖_{x,*} = ‖a‖_x.
        let v = m.apply(&a);
        assert!((m.dual_norm(&v) - m.norm(&a)).abs() < 1e-14);
        assert_eq!(m.apply_inv(&v), a.to_vec());
        assert!((m.inner(&a, &a) - (2.0 + 4.5)).abs() < 1e-14);
    }
}
