use super::field::{ControlField, MetricField};
use crate::error::{Error, Result};
use crate::geometry::{least_action, Generator, LeastActionOptions, Region, WarmStart};

/// A scalar stopping function; integration stops when it crosses from
/// positive to `≤ 0`.
pub struct Event {
    pub label: String,
    func: Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
}

impl Event {
    pub fn new(label: impl Into<String>, func: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), func: Box::new(func) }
    }

    /// Fires when `x_i` falls to `level`.
    pub fn coordinate_below(i: usize, level: f64) -> Self {
        Self::new(format!("x[{i}] = {level}"), move |_, x| x[i] - level)
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.func)(t, x)
    }
}

impl std::fmt::Debug for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Event").field("label", &self.label).finish()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepPolicy {
    pub h_max: f64,
    pub h_min: f64,
    /// Relative move per step along each coordinate, measured against the
    /// field's natural scale.
    pub safety: f64,
    /// Use `h_max` verbatim (apart from faces, events and the horizon).
    pub fixed: bool,
    pub drift_tol: f64,
    pub time_tol: f64,
    pub max_steps: usize,
    pub record_generators: bool,
    pub least_action: LeastActionOptions,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            h_max: 0.05,
            h_min: 1e-14,
            safety: 0.02,
            fixed: false,
            drift_tol: 1e-7,
            time_tol: 1e-13,
            max_steps: 2_000_000,
            record_generators: false,
            least_action: LeastActionOptions::default(),
        }
    }
}

impl StepPolicy {
    pub fn fixed(h: f64) -> Self {
        Self { h_max: h, fixed: true, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    /// Least-action velocity at `x`.
    pub v: Vec<f64>,
    /// Generators with positive multiplier, when recording is enabled.
    pub generators: Vec<Generator>,
    pub multipliers: Vec<f64>,
    /// Step taken from this sample (zero for the last one).
    pub step: f64,
    /// Constraint violation at `x` after repair.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    Horizon,
    Event { index: usize, label: String },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stop: StopReason,
    pub repairs: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn terminal_time(&self) -> f64 {
        self.last().t
    }
}

/// Forward-Euler integration of `∂_t x = least_action(K, x, H(x), f(t, x))`.
///
/// Steps are clipped to the next face of `K` and to the natural scale of
/// `Φ`, event crossings are localised by bisection on the step, and drift
/// beyond `drift_tol` is repaired by a local metric projection.
pub fn integrate<R, F, C>(
    region: &R,
    field: &F,
    control: &C,
    x0: &[f64],
    events: &[Event],
    horizon: f64,
    policy: &StepPolicy,
) -> Result<Trajectory>
where
    R: Region + ?Sized,
    F: MetricField + ?Sized,
    C: ControlField + ?Sized,
{
    let (viol, row) = region.violation(x0);
    if viol > policy.drift_tol {
        return Err(Error::Infeasible { row, violation: viol });
    }
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut samples = Vec::new();
    let mut warm = WarmStart::default();
    let mut repairs = 0;
    let mut tiny_steps = 0usize;

    for (i, e) in events.iter().enumerate() {
        if e.value(t, &x) <= 0.0 {
            let s = make_sample(region, field, control, &x, t, policy, &mut warm)?;
            samples.push(s);
            return Ok(Trajectory { samples, stop: StopReason::Event { index: i, label: e.label.clone() }, repairs });
        }
    }

    loop {
        let mut sample = make_sample(region, field, control, &x, t, policy, &mut warm)?;
        if t >= horizon || samples.len() >= policy.max_steps {
            if t < horizon {
                return Err(Error::StepUnderflow { t, steps: samples.len() });
            }
            samples.push(sample);
            return Ok(Trajectory { samples, stop: StopReason::Horizon, repairs });
        }
        let v = sample.v.clone();

        let mut h = policy.h_max.min(horizon - t);
        if !policy.fixed {
            for (i, vi) in v.iter().enumerate() {
                if *vi != 0.0 {
                    h = h.min(policy.safety * field.natural_scale(&x, i) / vi.abs());
                }
            }
        }
        let hit = region.max_step(&x, &v, h, policy.least_action.active_tol);
        let face_limited = hit < h;
        h = hit.max(0.0);
        if h < policy.h_min {
            if !face_limited {
                return Err(Error::StepUnderflow { t, steps: samples.len() });
            }
            tiny_steps += 1;
            if tiny_steps > 10_000 {
                return Err(Error::StepUnderflow { t, steps: samples.len() });
            }
        } else {
            tiny_steps = 0;
        }

        let step_to = |s: f64| -> Vec<f64> { x.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let mut x_new = step_to(h);

        // Earliest event crossing within the step.
        let mut fired: Option<(usize, f64)> = None;
        for (i, e) in events.iter().enumerate() {
            if e.value(t + h, &x_new) <= 0.0 {
                let s = locate_crossing(e, t, h, &step_to, policy.time_tol);
                if fired.map_or(true, |(_, s0)| s < s0) {
                    fired = Some((i, s));
                }
            }
        }
        if let Some((idx, s)) = fired {
            sample.step = s;
            samples.push(sample);
            let mut xe = step_to(s);
            let violation = region.violation(&xe).0;
            if violation > policy.drift_tol {
                let metric = field.metric(&xe)?;
                region.repair(&mut xe, &metric);
                repairs += 1;
            }
            let last = make_sample(region, field, control, &xe, t + s, policy, &mut warm)?;
            samples.push(last);
            return Ok(Trajectory {
                samples,
                stop: StopReason::Event { index: idx, label: events[idx].label.clone() },
                repairs,
            });
        }

        let violation = region.violation(&x_new).0;
        if violation > policy.drift_tol {
            let metric = field.metric(&x)?;
            region.repair(&mut x_new, &metric);
            repairs += 1;
        }
        sample.step = h;
        samples.push(sample);
        x = x_new;
        t += h;
        if horizon - t <= policy.time_tol * horizon.abs().max(1.0) {
            t = horizon;
        }
    }
}

fn make_sample<R, F, C>(
    region: &R,
    field: &F,
    control: &C,
    x: &[f64],
    t: f64,
    policy: &StepPolicy,
    warm: &mut WarmStart,
) -> Result<Sample>
where
    R: Region + ?Sized,
    F: MetricField + ?Sized,
    C: ControlField + ?Sized,
{
    let metric = field.metric(x)?;
    let f = control.eval(t, x);
    let la = least_action(region, x, &metric, &f, &policy.least_action, Some(warm))?;
    let (generators, multipliers) =
        if policy.record_generators { (la.generators, la.multipliers) } else { (Vec::new(), Vec::new()) };
    Ok(Sample {
        t,
        x: x.to_vec(),
        v: la.velocity,
        generators,
        multipliers,
        step: 0.0,
        residual: region.violation(x).0.max(0.0),
    })
}

/// Bisection for the first `s ∈ (0, h]` with `e ≤ 0` along the step, finished
/// by a secant update so linear events land on the surface.
fn locate_crossing(e: &Event, t: f64, h: f64, step_to: &dyn Fn(f64) -> Vec<f64>, time_tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    let mut f_lo = e.value(t, &step_to(0.0));
    let mut f_hi = e.value(t + h, &step_to(h));
    for _ in 0..200 {
        if hi - lo <= time_tol * h.max(1e-300) {
            break;
        }
        // Secant guess, safeguarded toward the midpoint.
        let mut s = if f_lo > f_hi { lo + (hi - lo) * f_lo / (f_lo - f_hi) } else { 0.5 * (lo + hi) };
        if !(s > lo && s < hi) {
            s = 0.5 * (lo + hi);
        }
        let fs = e.value(t + s, &step_to(s));
        if fs <= 0.0 {
            hi = s;
            f_hi = fs;
            if fs == 0.0 {
                break;
            }
        } else {
            lo = s;
            f_lo = fs;
        }
        // Mix in a bisection step to guarantee shrinkage.
        let mid = 0.5 * (lo + hi);
        let fm = e.value(t + mid, &step_to(mid));
        if fm <= 0.0 {
            hi = mid;
            f_hi = fm;
        } else {
            lo = mid;
            f_lo = fm;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyhedron;
    use crate::mirror_flow::{ConstantControl, EntropicField, QuadraticField};

    #[test]
    fn linear_flow_stops_at_event() {
        let k = Polyhedron::builder(1).boxed(-1e6, 1e6).build().unwrap();
        let traj = integrate(
            &k,
            &QuadraticField { n: 1 },
            &ConstantControl(vec![-1.0]),
            &[1.0],
            &[Event::coordinate_below(0, 0.0)],
            10.0,
            &StepPolicy::fixed(0.03),
        )
        .unwrap();
        assert!(matches!(traj.stop, StopReason::Event { index: 0, .. }));
        assert!((traj.terminal_time() - 1.0).abs() < 1e-12);
        assert!(traj.last().x[0].abs() < 1e-12);
    }

    #[test]
    fn drive_into_face_is_absorbed() {
        let k = Polyhedron::builder(1).boxed(0.0, 1.0).build().unwrap();
        let traj = integrate(
            &k,
            &QuadraticField { n: 1 },
            &ConstantControl(vec![1.0]),
            &[1.0],
            &[],
            1.0,
            &StepPolicy::fixed(0.1),
        )
        .unwrap();
        assert_eq!(traj.stop, StopReason::Horizon);
        assert!(traj.samples.iter().all(|s| s.v[0] == 0.0 && s.x[0] == 1.0));
        assert_eq!(traj.terminal_time(), 1.0);
    }

    #[test]
    fn simplex_flow_keeps_symmetry() {
        let k = Polyhedron::builder(3).boxed(0.0, 1.0).eq(vec![1.0; 3], 1.0).build().unwrap();
        let field = EntropicField::new(vec![1.0; 3], 0.0).unwrap();
        let x0 = [1.0 / 3.0; 3];
        let traj = integrate(&k, &field, &ConstantControl::negative_unit(3, 0), &x0, &[], 1.0, &StepPolicy::fixed(0.01))
            .unwrap();
        let x = &traj.last().x;
        assert!(x[0] < 1.0 / 3.0);
        assert!((x[1] - x[2]).abs() < 1e-14);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_start_rejected() {
        let k = Polyhedron::builder(1).boxed(0.0, 1.0).build().unwrap();
        let r = integrate(&k, &QuadraticField { n: 1 }, &ConstantControl(vec![1.0]), &[2.0], &[], 1.0, &StepPolicy::default());
        assert!(matches!(r, Err(Error::Infeasible { .. })));
    }

    #[test]
    fn identical_inputs_are_bitwise_reproducible() {
        let k = Polyhedron::builder(3).boxed(0.0, 1.0).eq(vec![1.0; 3], 1.0).build().unwrap();
        let field = EntropicField::new(vec![1.0, 2.0, 0.5], 0.0).unwrap();
        let run = || {
            integrate(&k, &field, &ConstantControl::negative_unit(3, 1), &[0.2, 0.5, 0.3], &[], 2.0, &StepPolicy::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.samples.len(), b.samples.len());
        for (p, q) in a.samples.iter().zip(&b.samples) {
            assert_eq!(p.x, q.x);
            assert_eq!(p.t.to_bits(), q.t.to_bits());
        }
    }
}
