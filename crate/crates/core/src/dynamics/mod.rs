//! Newton flow `q'' = -grad V(q)` with optional tangent (variational) flow,
//! brake-orbit detection and reparameterization.

mod brake;
pub(crate) mod reparam;
pub mod stepper;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use brake::{brake_reflection_check, detect_brake, BrakeEvent, BrakeReflection};
pub use reparam::{reparameterize, resample, Parameterization};
pub use stepper::{PhasePoint, Stepper};

use crate::error::{HillError, Result};
use crate::system::{MechanicalSystem, State};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scheme {
    /// Fixed-step composed velocity Verlet.
    Symplectic,
    /// Dormand-Prince 5(4) with step control; cross-check mode without tangent flow.
    AdaptiveRk { rtol: f64, atol: f64, min_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub step: f64,
    pub scheme: Scheme,
    pub tol_boundary: f64,
    pub energy_tol: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            step: tol::STEP,
            scheme: Scheme::Symplectic,
            tol_boundary: tol::BOUNDARY,
            energy_tol: tol::ENERGY,
        }
    }
}

impl IntegratorOptions {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(HillError::config("step", "integration step must be positive"));
        }
        if !(self.tol_boundary > 0.0) || !(self.energy_tol > 0.0) {
            return Err(HillError::config("tolerances", "tolerances must be positive"));
        }
        if let Scheme::AdaptiveRk {
            rtol,
            atol,
            min_step,
        } = self.scheme
        {
            if !(rtol > 0.0 && atol > 0.0 && min_step > 0.0) {
                return Err(HillError::config("scheme", "adaptive tolerances must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Termination {
    Completed,
    /// Stopped before `t` because the next step left the closed Hill region.
    LeftHillRegion { t: f64, f: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorMeta {
    pub step: f64,
    pub scheme: Scheme,
    pub tol_boundary: f64,
    pub energy_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Curve parameter (Newtonian time or JM arclength).
    pub param: f64,
    /// Newtonian time.
    pub time: f64,
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub parameter: Parameterization,
    pub samples: Vec<Sample>,
    /// Tangent matrices aligned with `samples`, identity at the initial time.
    pub tangent: Option<Vec<DMatrix<f64>>>,
    pub meta: IntegratorMeta,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        &self.samples[self.samples.len() - 1]
    }

    /// Largest `|H(t) - H(t0)|` over the samples.
    pub fn energy_drift(&self, system: &MechanicalSystem) -> f64 {
        let h0 = system.hamiltonian(&self.first().state);
        self.samples
            .iter()
            .map(|s| (system.hamiltonian(&s.state) - h0).abs())
            .fold(0.0, f64::max)
    }

    pub fn within_energy_tol(&self, system: &MechanicalSystem) -> bool {
        self.energy_drift(system) <= self.meta.energy_tol
    }
}

/// Integrate Newton's equations over `t_span` (which may run backwards).
///
/// Samples are always returned in increasing time order. Integration stops
/// early, with [`Termination::LeftHillRegion`], once a step lands where
/// `f < -tol_boundary`.
pub fn integrate(
    system: &MechanicalSystem,
    init: &State,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    run(system, init, t_span, opts, false)
}

/// As [`integrate`], also carrying the tangent flow `M(t)`.
pub fn integrate_with_variations(
    system: &MechanicalSystem,
    init: &State,
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !matches!(opts.scheme, Scheme::Symplectic) {
        return Err(HillError::config(
            "scheme",
            "tangent flow is only available with the symplectic scheme",
        ));
    }
    run(system, init, t_span, opts, true)
}

fn run(
    system: &MechanicalSystem,
    init: &State,
    (t0, t1): (f64, f64),
    opts: &IntegratorOptions,
    with_tangent: bool,
) -> Result<Trajectory> {
    system.check_state(init)?;
    opts.validate()?;
    if !(t1 != t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(HillError::config("t_span", "time span must be finite and nondegenerate"));
    }
    let meta = IntegratorMeta {
        step: opts.step,
        scheme: opts.scheme,
        tol_boundary: opts.tol_boundary,
        energy_tol: opts.energy_tol,
    };
    let (mut points, termination) = match opts.scheme {
        Scheme::Symplectic => symplectic_points(system, init, t0, t1, opts, with_tangent),
        Scheme::AdaptiveRk {
            rtol,
            atol,
            min_step,
        } => adaptive_points(system, init, t0, t1, opts, rtol, atol, min_step)?,
    };
    if t1 < t0 {
        points.reverse();
    }
    let tangent = with_tangent.then(|| {
        points
            .iter()
            .map(|p| p.tangent.clone().expect("tangent carried"))
            .collect()
    });
    let samples = points
        .into_iter()
        .map(|p| Sample {
            param: p.t,
            time: p.t,
            state: State::new(p.q, p.v),
        })
        .collect();
    Ok(Trajectory {
        parameter: Parameterization::NewtonianTime,
        samples,
        tangent,
        meta,
        termination,
    })
}

/// Fixed-grid times `t0 + k h` followed by one partial step landing on `t1`.
pub(crate) fn step_schedule(t0: f64, t1: f64, step: f64) -> impl Iterator<Item = f64> {
    let span = t1 - t0;
    let dir = span.signum();
    let full = (span.abs() / step).floor() as usize;
    let remainder = span.abs() - full as f64 * step;
    let extra = remainder > 1e-9 * step;
    (1..=full)
        .map(move |k| t0 + dir * step * k as f64)
        .chain(extra.then_some(t1))
        .map(move |t| if (t - t1).abs() <= 1e-12 * step { t1 } else { t })
}

fn symplectic_points(
    system: &MechanicalSystem,
    init: &State,
    t0: f64,
    t1: f64,
    opts: &IntegratorOptions,
    with_tangent: bool,
) -> (Vec<PhasePoint>, Termination) {
    let stepper = Stepper::new(system);
    let mut cur = stepper.start(t0, init, with_tangent);
    let mut points = vec![cur.clone()];
    for t_next in step_schedule(t0, t1, opts.step) {
        let next = stepper.advance(&cur, t_next - cur.t);
        let next = PhasePoint { t: t_next, ..next };
        let f = system.f(&next.q);
        if f < -opts.tol_boundary {
            return (points, Termination::LeftHillRegion { t: t_next, f });
        }
        points.push(next.clone());
        cur = next;
    }
    (points, Termination::Completed)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_points(
    system: &MechanicalSystem,
    init: &State,
    t0: f64,
    t1: f64,
    opts: &IntegratorOptions,
    rtol: f64,
    atol: f64,
    min_step: f64,
) -> Result<(Vec<PhasePoint>, Termination)> {
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut state = init.clone();
    let mut h = opts.step;
    let start = Stepper::new(system).start(t0, init, false);
    let mut points = vec![start];
    while (t1 - t) * dir > 0.0 {
        h = h.min((t1 - t).abs());
        let (next, err, scale) = stepper::dopri_step(system, &state, dir * h);
        let tol = atol + rtol * scale;
        if err <= tol {
            t = if (t1 - (t + dir * h)).abs() <= 1e-14 * t1.abs().max(1.0) {
                t1
            } else {
                t + dir * h
            };
            let f = system.f(&next.q);
            if f < -opts.tol_boundary {
                return Ok((points, Termination::LeftHillRegion { t, f }));
            }
            state = next;
            points.push(Stepper::new(system).start(t, &state, false));
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < min_step && (t1 - t).abs() > min_step {
            return Err(HillError::IntegrationFailure {
                t,
                message: format!("step size {h:e} fell below the minimum {min_step:e}"),
                last_state: Box::new(state),
            });
        }
    }
    Ok((points, Termination::Completed))
}
