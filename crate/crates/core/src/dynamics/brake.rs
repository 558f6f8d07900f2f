use nalgebra::DVector;
use serde::Serialize;

use super::stepper::{PhasePoint, Stepper};
use super::{integrate, IntegratorOptions, Trajectory};
use crate::error::Result;
use crate::system::{MechanicalSystem, State};
use crate::tol;

/// Instant where the solution comes to rest on the Hill boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrakeEvent {
    pub t_brake: f64,
    pub q_brake: Vec<f64>,
    pub residual_speed: f64,
    pub f_brake: f64,
}

/// Brake instants of `traj`: minima of `|v|` located by bisection on
/// `d|v|^2/dt = -2 v . grad V` and accepted when the speed there is within `brake_tol`.
pub fn detect_brake(
    system: &MechanicalSystem,
    traj: &Trajectory,
    brake_tol: f64,
) -> Result<Vec<BrakeEvent>> {
    let stepper = Stepper::new(system);
    let rate = |p: &PhasePoint| p.v.dot(&p.accel);
    let mut events: Vec<BrakeEvent> = Vec::new();
    let points: Vec<PhasePoint> = traj
        .samples
        .iter()
        .map(|s| stepper.start(s.time, &s.state, false))
        .collect();
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ra, rb) = (rate(a), rate(b));
        if !(ra < 0.0 && rb >= 0.0) {
            continue;
        }
        // bisection from the left sample using partial steps
        let (mut lo, mut hi) = (0.0, b.t - a.t);
        let mut best = b.clone();
        for _ in 0..tol::BRAKE_BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            let p = stepper.advance(a, mid);
            if rate(&p) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
                best = p;
            }
            if hi - lo <= f64::EPSILON * a.t.abs().max(1.0) {
                break;
            }
        }
        let speed = best.v.norm();
        if speed <= brake_tol {
            let t_brake = if hi == b.t - a.t { b.t } else { a.t + hi };
            if events
                .last()
                .is_some_and(|e| (e.t_brake - t_brake).abs() < 1e-12)
            {
                continue;
            }
            events.push(BrakeEvent {
                t_brake,
                f_brake: system.f(&best.q),
                q_brake: best.q.iter().copied().collect(),
                residual_speed: speed,
            });
        }
    }
    // a span may end (or start) exactly at the brake instant, where the sign
    // change of the rate is lost to rounding
    for p in [points.first(), points.last()].into_iter().flatten() {
        let speed = p.v.norm();
        if speed <= brake_tol && !events.iter().any(|e| (e.t_brake - p.t).abs() < 1e-9) {
            events.push(BrakeEvent {
                t_brake: p.t,
                f_brake: system.f(&p.q),
                q_brake: p.q.iter().copied().collect(),
                residual_speed: speed,
            });
        }
    }
    events.sort_by(|a, b| a.t_brake.total_cmp(&b.t_brake));
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrakeReflection {
    /// `max_h |gamma(t0 + h) - gamma(t0 - h)|` over the sampled `h <= h_max`.
    pub mismatch: f64,
    /// `|gamma(t0 + h_max) - (q0 - h_max^2 grad V(q0) / 2)|`.
    pub taylor_residual: f64,
    /// log2 ratio of the Taylor residual at `h_max` and `h_max / 2` (about 4 when nonzero).
    pub taylor_order: Option<f64>,
}

/// Integrate forward and backward from the brake state and compare the two arcs.
pub fn brake_reflection_check(
    system: &MechanicalSystem,
    event: &BrakeEvent,
    h_max: f64,
    opts: &IntegratorOptions,
) -> Result<BrakeReflection> {
    let q0 = DVector::from_column_slice(&event.q_brake);
    let rest = State::new(q0.clone(), DVector::zeros(q0.len()));
    let fwd = integrate(system, &rest, (0.0, h_max), opts)?;
    let bwd = integrate(system, &rest, (0.0, -h_max), opts)?;
    let mismatch = fwd
        .samples
        .iter()
        .zip(bwd.samples.iter().rev())
        .map(|(a, b)| (&a.state.q - &b.state.q).norm())
        .fold(0.0, f64::max);
    let grad = system.potential().gradient(&q0);
    let residual = |h: f64| -> Result<f64> {
        let end = integrate(system, &rest, (0.0, h), opts)?;
        let taylor = &q0 - &grad * (0.5 * h * h);
        Ok((&end.last().state.q - taylor).norm())
    };
    let r_full = residual(h_max)?;
    let r_half = residual(0.5 * h_max)?;
    let taylor_order = (r_full > 1e-13 && r_half > 0.0).then(|| (r_full / r_half).log2());
    Ok(BrakeReflection {
        mismatch,
        taylor_residual: r_full,
        taylor_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_brake_at_origin() {
        let sys = MechanicalSystem::model(2, 0.5);
        let init = State::from_slices(&[0.0, 1.0], &[0.0, -1.0]);
        let traj = integrate(&sys, &init, (0.0, 3.0), &IntegratorOptions::default()).unwrap();
        let events = detect_brake(&sys, &traj, tol::BRAKE).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert!((e.t_brake - 2.0).abs() < 1e-9);
        assert!(e.q_brake[0].abs() < 1e-12 && e.q_brake[1].abs() < 1e-12);
        assert!(e.residual_speed <= tol::BRAKE);
        assert!(e.f_brake.abs() < 1e-9);
    }

    #[test]
    fn model_brake_at_endpoint_of_span() {
        let sys = MechanicalSystem::model(2, 0.5);
        let init = State::from_slices(&[0.0, 1.0], &[0.0, -1.0]);
        let traj = integrate(&sys, &init, (0.0, 2.0), &IntegratorOptions::default()).unwrap();
        let events = detect_brake(&sys, &traj, tol::BRAKE).unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].t_brake - 2.0).abs() < 1e-9);
    }

    #[test]
    fn oblique_throw_never_brakes() {
        let sys = MechanicalSystem::model(2, 0.5);
        let c = 0.5f64.sqrt();
        let init = State::from_slices(&[0.0, 1.0], &[c, -c]);
        let traj = integrate(&sys, &init, (0.0, 5.0), &IntegratorOptions::default()).unwrap();
        assert!(detect_brake(&sys, &traj, tol::BRAKE).unwrap().is_empty());
        let y_min = traj
            .samples
            .iter()
            .map(|s| s.state.q[1])
            .fold(f64::INFINITY, f64::min);
        assert!((y_min - 0.5).abs() < 1e-6);
    }

    #[test]
    fn oscillator_radial_brake_on_unit_circle() {
        let sys = MechanicalSystem::oscillator(2);
        let init = State::from_slices(&[0.9, 0.0], &[0.19f64.sqrt(), 0.0]);
        let traj = integrate(&sys, &init, (0.0, 1.5), &IntegratorOptions::default()).unwrap();
        let events = detect_brake(&sys, &traj, tol::BRAKE).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert!((e.q_brake[0] - 1.0).abs() < 1e-10);
        assert!(e.q_brake[1].abs() < 1e-12);
        assert!((e.t_brake - (0.19f64.sqrt() / 0.9).atan()).abs() < 1e-9);
    }

    #[test]
    fn reflection_symmetry_and_taylor_law() {
        let model = MechanicalSystem::model(2, 0.5);
        let ev = BrakeEvent {
            t_brake: 2.0,
            q_brake: vec![0.0, 0.0],
            residual_speed: 0.0,
            f_brake: 0.0,
        };
        let r = brake_reflection_check(&model, &ev, 0.01, &IntegratorOptions::default()).unwrap();
        assert!(r.mismatch < 1e-15);
        assert!(r.taylor_residual < 1e-15);

        let osc = MechanicalSystem::oscillator(2);
        let ev = BrakeEvent {
            t_brake: 0.0,
            q_brake: vec![1.0, 0.0],
            residual_speed: 0.0,
            f_brake: 0.0,
        };
        let r = brake_reflection_check(&osc, &ev, 0.1, &IntegratorOptions::default()).unwrap();
        assert!(r.mismatch < 1e-9);
        // cos h = 1 - h^2/2 + h^4/24: residual ~ h^4 / 24
        assert!((r.taylor_residual - 0.1f64.powi(4) / 24.0).abs() < 1e-8);
        assert!((r.taylor_order.unwrap() - 4.0).abs() < 0.05);
    }
}
