use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Sample, Trajectory};
use crate::error::{HillError, Result};
use crate::system::{jm_cumulative, MechanicalSystem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    NewtonianTime,
    /// `ds = sqrt(f) |v| dt`
    JmArclength,
}

/// Change the curve parameter of `traj`; the sampled states are untouched.
pub fn reparameterize(
    system: &MechanicalSystem,
    traj: &Trajectory,
    parameter: Parameterization,
) -> Result<Trajectory> {
    let params: Vec<f64> = match parameter {
        Parameterization::NewtonianTime => traj.samples.iter().map(|s| s.time).collect(),
        Parameterization::JmArclength => {
            for s in &traj.samples {
                let f = system.conformal_factor(&s.state.q)?;
                if f <= 0.0 {
                    return Err(HillError::Domain {
                        message: format!(
                            "JM arclength undefined at t = {}: sample not interior",
                            s.time
                        ),
                        f,
                    });
                }
            }
            jm_cumulative(system, traj)?
        }
    };
    let samples = traj
        .samples
        .iter()
        .zip(params)
        .map(|(s, param)| Sample {
            param,
            ..s.clone()
        })
        .collect();
    Ok(Trajectory {
        parameter,
        samples,
        tangent: traj.tangent.clone(),
        meta: traj.meta,
        termination: traj.termination,
    })
}

fn param_rate(system: &MechanicalSystem, p: Parameterization, s: &State) -> f64 {
    match p {
        Parameterization::NewtonianTime => 1.0,
        Parameterization::JmArclength => system.f(&s.q).max(0.0).sqrt() * s.v.norm(),
    }
}

/// Evaluate `traj` at new parameter values by cubic Hermite interpolation
/// (positions, velocities and Newtonian time). The tangent flow is dropped.
pub fn resample(
    system: &MechanicalSystem,
    traj: &Trajectory,
    params: &[f64],
) -> Result<Trajectory> {
    let ps: Vec<f64> = traj.samples.iter().map(|s| s.param).collect();
    let (lo, hi) = (ps[0], ps[ps.len() - 1]);
    let mut samples = Vec::with_capacity(params.len());
    for &p in params {
        if p < lo - 1e-12 * hi.abs().max(1.0) || p > hi + 1e-12 * hi.abs().max(1.0) {
            return Err(HillError::config(
                "params",
                format!("parameter {p} outside [{lo}, {hi}]"),
            ));
        }
        let k = match ps.partition_point(|&x| x <= p) {
            0 => 0,
            i if i >= ps.len() => ps.len() - 2,
            i => i - 1,
        };
        let (a, b) = (&traj.samples[k], &traj.samples[k + 1]);
        let h = b.param - a.param;
        let u = (p - a.param) / h;
        let ra = param_rate(system, traj.parameter, &a.state);
        let rb = param_rate(system, traj.parameter, &b.state);
        let acc_a = system.force(&a.state.q);
        let acc_b = system.force(&b.state.q);
        let q = hermite_vec(&a.state.q, &(&a.state.v / ra), &b.state.q, &(&b.state.v / rb), h, u);
        let v = hermite_vec(&a.state.v, &(acc_a / ra), &b.state.v, &(acc_b / rb), h, u);
        let time = hermite(a.time, 1.0 / ra, b.time, 1.0 / rb, h, u);
        samples.push(Sample {
            param: p,
            time,
            state: State::new(q, v),
        });
    }
    Ok(Trajectory {
        parameter: traj.parameter,
        samples,
        tangent: None,
        meta: traj.meta,
        termination: traj.termination,
    })
}

pub(crate) fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * d1
}

pub(crate) fn hermite_vec(
    y0: &DVector<f64>,
    d0: &DVector<f64>,
    y1: &DVector<f64>,
    d1: &DVector<f64>,
    h: f64,
    u: f64,
) -> DVector<f64> {
    DVector::from_fn(y0.len(), |i, _| hermite(y0[i], d0[i], y1[i], d1[i], h, u))
}

/// Derivative with respect to the abscissa of the Hermite cubic.
pub(crate) fn hermite_slope(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, u: f64) -> f64 {
    let u2 = u * u;
    ((6.0 * u2 - 6.0 * u) * y0
        + (3.0 * u2 - 4.0 * u + 1.0) * h * d0
        + (-6.0 * u2 + 6.0 * u) * y1
        + (3.0 * u2 - 2.0 * u) * h * d1)
        / h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorOptions};
    use crate::system::jm_length;

    fn thirty_degree_arc() -> (MechanicalSystem, Trajectory) {
        let sys = MechanicalSystem::model(2, 0.5);
        let th = 30f64.to_radians();
        let init = State::from_slices(&[0.0, 1.0], &[th.sin(), -th.cos()]);
        let t_star = 2.0 / th.cos();
        let traj = integrate(&sys, &init, (0.0, t_star), &IntegratorOptions::default()).unwrap();
        (sys, traj)
    }

    #[test]
    fn newtonian_time_is_identity() {
        let (sys, traj) = thirty_degree_arc();
        let r = reparameterize(&sys, &traj, Parameterization::NewtonianTime).unwrap();
        assert_eq!(r.samples, traj.samples);
    }

    #[test]
    fn arclength_total_equals_jm_length() {
        let (sys, traj) = thirty_degree_arc();
        let r = reparameterize(&sys, &traj, Parameterization::JmArclength).unwrap();
        assert!((r.last().param - jm_length(&sys, &traj).unwrap()).abs() < 1e-10);
        assert!(r.samples.windows(2).all(|w| w[0].param < w[1].param));
    }

    #[test]
    fn round_trip_through_arclength_recovers_positions() {
        let (sys, traj) = thirty_degree_arc();
        let arc = reparameterize(&sys, &traj, Parameterization::JmArclength).unwrap();
        let total = arc.last().param;
        let grid: Vec<f64> = (0..=1500).map(|k| total * k as f64 / 1500.0).collect();
        let uniform = resample(&sys, &arc, &grid).unwrap();
        let back = reparameterize(&sys, &uniform, Parameterization::NewtonianTime).unwrap();
        let times: Vec<f64> = traj
            .samples
            .iter()
            .map(|s| s.time)
            .filter(|&t| t >= back.first().time && t <= back.last().time)
            .collect();
        let again = resample(&sys, &back, &times).unwrap();
        for (s, t) in again.samples.iter().zip(&times) {
            let k = traj.samples.iter().position(|x| x.time == *t).unwrap();
            assert!((&s.state.q - &traj.samples[k].state.q).norm() < 1e-6);
        }
    }

    #[test]
    fn arclength_rejects_boundary_samples() {
        let sys = MechanicalSystem::model(2, 0.5);
        let init = State::from_slices(&[0.0, 1.0], &[0.0, -1.0]);
        let traj = integrate(&sys, &init, (0.0, 2.0), &IntegratorOptions::default()).unwrap();
        assert!(matches!(
            reparameterize(&sys, &traj, Parameterization::JmArclength),
            Err(HillError::Domain { .. })
        ));
    }
}
