use crate::error::{invalid, Result};
use crate::geometry::LocalMetric;

/// A separable mirror map `Φ` with its gradient and Hessian diagonal.
pub trait MetricField: Sync {
    fn dim(&self) -> usize;

    fn in_domain(&self, x: &[f64]) -> bool;

    fn potential(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Diagonal of `∇²Φ(x)`.
    fn hessian_diag(&self, x: &[f64]) -> Vec<f64>;

    /// `H(x) = (∇²Φ(x))⁻¹`.
    fn metric(&self, x: &[f64]) -> Result<LocalMetric> {
        if !self.in_domain(x) {
            return invalid("point outside the domain of the mirror map");
        }
        LocalMetric::from_hessian(&self.hessian_diag(x))
    }

    /// Distance along coordinate `i` to where the metric degenerates; step
    /// control keeps relative moves small compared to it.
    fn natural_scale(&self, _x: &[f64], _i: usize) -> f64 {
        f64::INFINITY
    }
}

/// `Φ(x) = Σ w_i (x_i + s) log(x_i + s)`, so `H(x)_i = (x_i + s)/w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropicField {
    weights: Vec<f64>,
    shift: f64,
}

impl EntropicField {
    pub fn new(weights: Vec<f64>, shift: f64) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return invalid("entropic weights must be positive and finite");
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return invalid("entropic shift must be nonnegative");
        }
        Ok(Self { weights, shift })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
}

impl MetricField for EntropicField {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.weights.len() && x.iter().all(|v| v + self.shift > 0.0)
    }

    fn potential(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.weights)
            .map(|(v, w)| {
                let y = v + self.shift;
                w * y * y.ln()
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.weights).map(|(v, w)| w * (1.0 + (v + self.shift).ln())).collect()
    }

    fn hessian_diag(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.weights).map(|(v, w)| w / (v + self.shift)).collect()
    }

    fn metric(&self, x: &[f64]) -> Result<LocalMetric> {
        if !self.in_domain(x) {
            return invalid("point outside the domain of the entropic map");
        }
        LocalMetric::new(x.iter().zip(&self.weights).map(|(v, w)| (v + self.shift) / w).collect())
    }

    fn natural_scale(&self, x: &[f64], i: usize) -> f64 {
        x[i] + self.shift
    }
}

/// `Φ(x) = ½‖x‖²`, the Euclidean geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticField {
    pub n: usize,
}

impl MetricField for QuadraticField {
    fn dim(&self) -> usize {
        self.n
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.n && x.iter().all(|v| v.is_finite())
    }

    fn potential(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn hessian_diag(&self, _x: &[f64]) -> Vec<f64> {
        vec![1.0; self.n]
    }
}

/// The drive `f(t, x)`.
pub trait ControlField: Sync {
    fn eval(&self, t: f64, x: &[f64]) -> Vec<f64>;
}

impl<F> ControlField for F
where
    F: Fn(f64, &[f64]) -> Vec<f64> + Sync,
{
    fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self(t, x)
    }
}

/// A time- and state-independent drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantControl(pub Vec<f64>);

impl ConstantControl {
    /// `−e_i` in dimension `n`, the drive of a request at coordinate `i`.
    pub fn negative_unit(n: usize, i: usize) -> Self {
        let mut f = vec![0.0; n];
        f[i] = -1.0;
        Self(f)
    }
}

impl ControlField for ConstantControl {
    fn eval(&self, _t: f64, _x: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// Largest relative discrepancy between `∇Φ` and central differences of `Φ`
/// over the given points.
pub fn gradient_fd_error<F: MetricField + ?Sized>(field: &F, points: &[Vec<f64>], step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = field.gradient(x);
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += step;
            b[i] -= step;
            let fd = (field.potential(&a) - field.potential(&b)) / (2.0 * step);
            worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
        }
    }
    worst
}
