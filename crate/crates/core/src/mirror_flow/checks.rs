use super::field::{ControlField, MetricField};
use super::integrate::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::geometry::Region;

/// `D̂_Φ(y; x) = −Φ(x) − ⟨∇Φ(x), y − x⟩`, the Bregman divergence without the
/// `Φ(y)` term.
pub fn bregman_hat<F: MetricField + ?Sized>(field: &F, y: &[f64], x: &[f64]) -> Result<f64> {
    if !field.in_domain(x) {
        return invalid("bregman_hat: x outside the domain of the mirror map");
    }
    if y.len() != x.len() {
        return invalid("bregman_hat: dimension mismatch");
    }
    let g = field.gradient(x);
    Ok(-field.potential(x) - g.iter().zip(y.iter().zip(x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum::<f64>())
}

/// Per-interval result of a slope check: the chord slope of some scalar along
/// the trajectory against its allowed bound.
#[derive(Debug, Clone, Default)]
pub struct SlopeReport {
    pub intervals: usize,
    /// Largest `slope − bound` seen (negative when everything passes).
    pub max_excess: f64,
    /// Sample indices `i` whose interval `[t_i, t_{i+1}]` exceeded `tol`.
    pub violations: Vec<usize>,
}

impl SlopeReport {
    pub fn new() -> Self {
        Self { intervals: 0, max_excess: f64::NEG_INFINITY, violations: Vec::new() }
    }

    pub fn record(&mut self, index: usize, excess: f64, tol: f64) {
        self.intervals += 1;
        self.max_excess = self.max_excess.max(excess);
        if excess > tol {
            self.violations.push(index);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `d/dt D̂_Φ(y; x(t)) ≤ ⟨f(t, x(t)), x(t) − y⟩` between consecutive
/// samples. The chord slope is compared against the larger endpoint value of
/// the right-hand side, which bounds it by the mean value theorem when the
/// right-hand side is monotone over the step.
pub fn check_descent_inequality<R, F, C>(
    traj: &Trajectory,
    region: &R,
    field: &F,
    control: &C,
    y: &[f64],
    tol: f64,
) -> Result<SlopeReport>
where
    R: Region + ?Sized,
    F: MetricField + ?Sized,
    C: ControlField + ?Sized,
{
    let (viol, row) = region.violation(y);
    if viol > 1e-9 {
        return Err(Error::Infeasible { row, violation: viol });
    }
    let rhs = |t: f64, x: &[f64]| -> f64 {
        let f = control.eval(t, x);
        f.iter().zip(x.iter().zip(y)).map(|(fi, (xi, yi))| fi * (xi - yi)).sum()
    };
    let mut report = SlopeReport::new();
    let mut prev: Option<(f64, f64, f64)> = None;
    for (i, s) in traj.samples.iter().enumerate() {
        let d = bregman_hat(field, y, &s.x)?;
        let r = rhs(s.t, &s.x);
        if let Some((t0, d0, r0)) = prev {
            let dt = s.t - t0;
            if dt > 0.0 {
                report.record(i - 1, (d - d0) / dt - r0.max(r), tol);
            }
        }
        prev = Some((s.t, d, r));
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct OrthogonalityReport {
    pub checked: usize,
    /// Largest `|⟨g, v⟩| / (‖g‖‖v‖)` over carried generators.
    pub max_ratio: f64,
    pub violations: Vec<usize>,
}

/// At each sample, every recorded generator with positive multiplier must be
/// orthogonal to the velocity. Requires a trajectory integrated with
/// `record_generators`.
pub fn check_orthogonality(traj: &Trajectory, tol: f64) -> OrthogonalityReport {
    let mut rep = OrthogonalityReport::default();
    for (i, s) in traj.samples.iter().enumerate() {
        let vn = s.v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut bad = false;
        for (g, lam) in s.generators.iter().zip(&s.multipliers) {
            if *lam <= 0.0 {
                continue;
            }
            rep.checked += 1;
            let gn = g.normal.norm2();
            let ip = g.normal.dot(&s.v).abs();
            let ratio = if vn == 0.0 { 0.0 } else { ip / (gn * vn) };
            rep.max_ratio = rep.max_ratio.max(ratio);
            if ratio > tol {
                bad = true;
            }
        }
        if bad {
            rep.violations.push(i);
        }
    }
    rep
}

/// Largest `‖v‖_{x,*} − ‖f‖_x` along the trajectory.
pub fn velocity_bound_excess<F, C>(traj: &Trajectory, field: &F, control: &C) -> Result<f64>
where
    F: MetricField + ?Sized,
    C: ControlField + ?Sized,
{
    let mut worst = f64::NEG_INFINITY;
    for s in &traj.samples {
        let m = field.metric(&s.x)?;
        let f = control.eval(s.t, &s.x);
        worst = worst.max(m.dual_norm(&s.v) - m.norm(&f));
    }
    Ok(worst)
}

/// Largest constraint violation over the samples.
pub fn max_drift<R: Region + ?Sized>(traj: &Trajectory, region: &R) -> f64 {
    traj.samples.iter().map(|s| region.violation(&s.x).0.max(0.0)).fold(0.0, f64::max)
}
