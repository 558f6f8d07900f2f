//! Mechanical systems with Euclidean kinetic metric, the Hill region and JM length.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{check_dim, HillError, Result};
use crate::potential::PolynomialPotential;
use crate::quadrature;

/// Potential plus a fixed energy level `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalSystem {
    potential: PolynomialPotential,
    energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl State {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        Self { q, v }
    }

    pub fn from_slices(q: &[f64], v: &[f64]) -> Self {
        Self {
            q: DVector::from_column_slice(q),
            v: DVector::from_column_slice(v),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HillRegion {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HillClass {
    pub region: HillRegion,
    pub f: f64,
    pub tol: f64,
    /// Boundary point with non-vanishing `grad f`; always false off the boundary.
    pub regular: bool,
    pub grad_f_norm: f64,
}

impl MechanicalSystem {
    pub fn new(potential: PolynomialPotential, energy: f64) -> Self {
        Self { potential, energy }
    }

    /// Constant-force model: `V = -g y`, `E = 0`, Hill region `y >= 0`.
    pub fn model(dimension: usize, g: f64) -> Self {
        Self::new(PolynomialPotential::constant_force(dimension, g), 0.0)
    }

    /// Oscillator `V = |q|^2 / 2` at energy 1/2; the Hill boundary is the unit sphere.
    pub fn oscillator(dimension: usize) -> Self {
        Self::new(PolynomialPotential::harmonic(dimension, 1.0), 0.5)
    }

    pub fn dimension(&self) -> usize {
        self.potential.dimension()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn potential(&self) -> &PolynomialPotential {
        &self.potential
    }

    /// `f = 2(E - V)`.
    pub fn conformal_factor(&self, q: &DVector<f64>) -> Result<f64> {
        check_dim(self.dimension(), q.len())?;
        Ok(self.f(q))
    }

    pub(crate) fn f(&self, q: &DVector<f64>) -> f64 {
        2.0 * (self.energy - self.potential.value(q))
    }

    /// `grad f = -2 grad V`.
    pub fn grad_f(&self, q: &DVector<f64>) -> DVector<f64> {
        self.potential.gradient(q) * -2.0
    }

    pub fn force(&self, q: &DVector<f64>) -> DVector<f64> {
        -self.potential.gradient(q)
    }

    pub fn hessian_v(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.potential.hessian(q)
    }

    pub fn hamiltonian(&self, s: &State) -> f64 {
        0.5 * s.v.norm_squared() + self.potential.value(&s.q)
    }

    pub fn check_state(&self, s: &State) -> Result<()> {
        check_dim(self.dimension(), s.q.len())?;
        check_dim(self.dimension(), s.v.len())
    }

    /// Classify `q` against the Hill region with window `tol_boundary` on f.
    pub fn hill_classify(&self, q: &DVector<f64>, tol_boundary: f64) -> Result<HillClass> {
        if !(tol_boundary > 0.0) {
            return Err(HillError::config("tol_boundary", "must be positive"));
        }
        let f = self.conformal_factor(q)?;
        let region = if f.abs() <= tol_boundary {
            HillRegion::Boundary
        } else if f > 0.0 {
            HillRegion::Interior
        } else {
            HillRegion::Exterior
        };
        let grad_f_norm = self.grad_f(q).norm();
        Ok(HillClass {
            region,
            f,
            tol: tol_boundary,
            regular: region == HillRegion::Boundary && grad_f_norm > tol_boundary.sqrt(),
            grad_f_norm,
        })
    }

    /// State at `q` moving along `direction` with the speed fixed by the energy level.
    pub fn state_on_shell(&self, q: DVector<f64>, direction: &DVector<f64>) -> Result<State> {
        let f = self.conformal_factor(&q)?;
        if f < 0.0 {
            return Err(HillError::Domain {
                message: "point outside the Hill region".into(),
                f,
            });
        }
        let norm = direction.norm();
        if norm == 0.0 {
            return Ok(State::new(q, DVector::zeros(self.dimension())));
        }
        Ok(State::new(q, direction * (f.sqrt() / norm)))
    }
}

/// JM length of a trajectory: integral of `sqrt(max(f, 0)) |v| dt`.
///
/// Samples with `f` below `-tol` (the trajectory's boundary window) are rejected.
pub fn jm_length(system: &MechanicalSystem, traj: &Trajectory) -> Result<f64> {
    Ok(jm_cumulative(system, traj)?.last().copied().unwrap_or(0.0))
}

/// Running JM length at every sample.
pub fn jm_cumulative(system: &MechanicalSystem, traj: &Trajectory) -> Result<Vec<f64>> {
    let tol = traj.meta.tol_boundary;
    let mut ts = Vec::with_capacity(traj.samples.len());
    let mut gs = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let f = system.conformal_factor(&s.state.q)?;
        if f < -tol {
            return Err(HillError::Domain {
                message: format!("sample at t = {} lies outside the Hill region", s.time),
                f,
            });
        }
        ts.push(s.time);
        gs.push(f.max(0.0).sqrt() * s.state.v.norm());
    }
    Ok(quadrature::cumulative(&ts, &gs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn conformal_factor_examples() {
        let model = MechanicalSystem::model(2, 0.5);
        assert_eq!(model.conformal_factor(&dv(&[7.0, 0.3])).unwrap(), 0.3);
        let osc = MechanicalSystem::oscillator(2);
        assert_eq!(osc.conformal_factor(&dv(&[1.0, 0.0])).unwrap(), 0.0);
        assert!((osc.conformal_factor(&dv(&[0.9, 0.0])).unwrap() - 0.19).abs() < 1e-15);
        assert!(osc.conformal_factor(&dv(&[0.9])).is_err());
    }

    #[test]
    fn classification_examples() {
        let model = MechanicalSystem::model(2, 0.5);
        let c = model.hill_classify(&dv(&[0.0, 1e-12]), 1e-9).unwrap();
        assert_eq!(c.region, HillRegion::Boundary);
        assert!(c.regular);
        assert!((c.grad_f_norm - 1.0).abs() < 1e-15);
        let c = model.hill_classify(&dv(&[5.0, 0.5]), 1e-9).unwrap();
        assert_eq!(c.region, HillRegion::Interior);
        assert!(!c.regular);
        let osc = MechanicalSystem::oscillator(2);
        let c = osc.hill_classify(&dv(&[1.1, 0.0]), 1e-9).unwrap();
        assert_eq!(c.region, HillRegion::Exterior);
        assert!((c.f + 0.21).abs() < 1e-14);
        assert!(osc.hill_classify(&dv(&[1.1, 0.0]), 0.0).is_err());
    }

    #[test]
    fn singular_boundary_point_is_not_regular() {
        // V = x^2 at E = 0: f = -2x^2 vanishes with its gradient at the origin
        let pot = PolynomialPotential::new(
            1,
            vec![crate::potential::Term {
                coeff: 1.0,
                exponents: vec![2],
            }],
        )
        .unwrap();
        let sys = MechanicalSystem::new(pot, 0.0);
        let c = sys.hill_classify(&dv(&[0.0]), 1e-9).unwrap();
        assert_eq!(c.region, HillRegion::Boundary);
        assert!(!c.regular);
    }

    #[test]
    fn classification_is_stable_under_halving_tolerance() {
        let osc = MechanicalSystem::oscillator(2);
        let tol = 1e-3;
        for i in 0..200 {
            let r = 0.9 + 0.001 * i as f64;
            let q = dv(&[r * 0.6, r * 0.8]);
            let c = osc.hill_classify(&q, tol).unwrap();
            if c.f.abs() > 2.0 * tol {
                assert_eq!(c.region, osc.hill_classify(&q, tol / 2.0).unwrap().region);
            }
        }
    }
}
