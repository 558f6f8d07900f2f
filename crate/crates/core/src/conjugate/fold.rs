use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{family_map_eval, ConjugateEvent, ConjugateOptions, FamilyMap};
use crate::error::{HillError, Result};

/// Local normal form data of the family map at a conjugate point.
/// Parameter-space vectors are in `(t, u_1, ..., u_{n-1})` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `sigma_min / sigma_max`.
    pub sigma_ratio: f64,
    /// `sigma_{n-1} / sigma_max`; 1 in the plane.
    pub second_sigma_ratio: f64,
    pub kernel: Vec<f64>,
    pub det_gradient: Vec<f64>,
    pub critical_tangent: Vec<f64>,
    pub transversality_angle_deg: f64,
    pub det_derivative_along_kernel: f64,
    pub certified: bool,
}

/// Right singular vector of the smallest singular value, oriented so its
/// largest component is positive.
pub fn kernel_direction(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = svd.singular_values.argmin().0;
    let mut v = vt.row(k).transpose();
    if v[v.iamax()] < 0.0 {
        v = -v;
    }
    v
}

/// Classify the singularity of the family map at `event`.
///
/// The gradient of `det dGamma` in parameter space comes from central
/// differences of step `1e-5`; the critical set is its zero level.
pub fn fold_check(
    fam: &FamilyMap,
    event: &ConjugateEvent,
    opts: &ConjugateOptions,
) -> Result<FoldReport> {
    let mut sigmas: Vec<f64> = event.dgamma.singular_values().iter().copied().collect();
    sigmas.sort_by(|a, b| b.total_cmp(a));
    let n = sigmas.len();
    let s1 = sigmas[0];
    if !(s1 > 0.0) {
        return Err(HillError::DegenerateSingularity { sigma_ratio: 0.0 });
    }
    let ratio = sigmas[n - 1] / s1;
    let second = sigmas[n - 2] / s1;
    if second < opts.rank_tol {
        return Err(HillError::DegenerateSingularity {
            sigma_ratio: second,
        });
    }
    let kernel = event.kernel.clone();

    const DELTA: f64 = 1e-5;
    let det_at = |t: f64, u: &[f64]| -> Result<f64> { Ok(family_map_eval(fam, u, t)?.det) };
    let mut grad = vec![0.0; n];
    grad[0] = (det_at(event.t_star + DELTA, &event.theta)? - det_at(event.t_star - DELTA, &event.theta)?)
        / (2.0 * DELTA);
    for i in 0..n - 1 {
        let mut up = event.theta.clone();
        let mut um = event.theta.clone();
        up[i] += DELTA;
        um[i] -= DELTA;
        grad[i + 1] = (det_at(event.t_star, &up)? - det_at(event.t_star, &um)?) / (2.0 * DELTA);
    }
    let grad = DVector::from_vec(grad);
    let gnorm = grad.norm();
    let along = grad.dot(&kernel);
    let angle = if gnorm > 0.0 {
        (along.abs() / gnorm).clamp(0.0, 1.0).asin().to_degrees()
    } else {
        0.0
    };
    // tangent of {det = 0} closest to the first chart axis
    let mut axis = DVector::zeros(n);
    axis[1] = 1.0;
    let mut tangent = if gnorm > 0.0 {
        &axis - &grad * (grad.dot(&axis) / (gnorm * gnorm))
    } else {
        axis.clone()
    };
    if tangent.norm() < 1e-12 {
        tangent = DVector::zeros(n);
        tangent[0] = 1.0;
    }
    let tangent = tangent.normalize();

    let scale = s1.powi(n as i32 - 1);
    let certified = ratio < opts.rank_tol
        && along.abs() > opts.fold_tol * scale
        && angle > opts.angle_tol_deg;
    Ok(FoldReport {
        singular_values: sigmas,
        sigma_ratio: ratio,
        second_sigma_ratio: second,
        kernel: kernel.iter().copied().collect(),
        det_gradient: grad.iter().copied().collect(),
        critical_tangent: tangent.iter().copied().collect(),
        transversality_angle_deg: angle,
        det_derivative_along_kernel: along,
        certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::detect_conjugate;
    use crate::dynamics::IntegratorOptions;
    use crate::model::{fold_certificate_model, ModelPoint, ThrowParams};
    use crate::system::MechanicalSystem;

    fn family(system: MechanicalSystem, base: &[f64], t_max: f64) -> FamilyMap {
        FamilyMap::new(
            system,
            DVector::from_column_slice(base),
            t_max,
            IntegratorOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn model_folds_match_closed_form() {
        let fam = family(MechanicalSystem::model(2, 0.5), &[0.0, 1.0], 8.0);
        let opts = ConjugateOptions::default();
        let p = ModelPoint::planar(0.0, 1.0).unwrap();
        for deg in [0.0, 30.0, -45.0] {
            let th = f64::to_radians(deg);
            let ev = detect_conjugate(&fam, &[th], &opts).unwrap().unwrap();
            let r = fold_check(&fam, &ev, &opts).unwrap();
            let exact = fold_certificate_model(&p, &ThrowParams::planar(th, 0.5))
                .unwrap()
                .unwrap();
            assert!(r.certified, "{deg}: {r:?}");
            for i in 0..2 {
                assert!((r.kernel[i] - exact.kernel[i]).abs() < 1e-6, "{deg}");
                assert!((r.critical_tangent[i] - exact.critical_tangent[i]).abs() < 1e-5);
            }
            assert!((r.det_derivative_along_kernel - exact.det_derivative_along_kernel).abs() < 1e-5);
            assert!((r.transversality_angle_deg - exact.transversality_angle_deg).abs() < 1e-3);
        }
        let ev = detect_conjugate(&fam, &[30f64.to_radians()], &opts).unwrap().unwrap();
        let r = fold_check(&fam, &ev, &opts).unwrap();
        assert!((r.kernel[0] / r.kernel[1] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn brake_point_is_a_fold() {
        let fam = family(MechanicalSystem::model(2, 0.5), &[0.0, 1.0], 8.0);
        let opts = ConjugateOptions::default();
        let ev = detect_conjugate(&fam, &[0.0], &opts).unwrap().unwrap();
        let r = fold_check(&fam, &ev, &opts).unwrap();
        assert!(r.certified);
        assert!((r.kernel[0] - 1.0).abs() < 1e-8);
        assert!((r.critical_tangent[1] - 1.0).abs() < 1e-8);
        assert!((r.transversality_angle_deg - 90.0).abs() < 1e-3);
    }

    #[test]
    fn oscillator_folds_certified() {
        let fam = family(MechanicalSystem::oscillator(2), &[0.9, 0.0], 3.0);
        let opts = ConjugateOptions::default();
        for k in 0..=12 {
            let th = f64::to_radians(-60.0 + 10.0 * k as f64);
            let ev = detect_conjugate(&fam, &[th], &opts).unwrap().unwrap();
            let r = fold_check(&fam, &ev, &opts).unwrap();
            assert!(r.certified, "{k}: {r:?}");
            assert!(r.sigma_ratio < 1e-6);
        }
    }

    #[test]
    fn rank_zero_differential_is_degenerate() {
        let fam = family(MechanicalSystem::model(3, 0.5), &[0.0, 0.0, 1.0], 8.0);
        let opts = ConjugateOptions::default();
        let mut ev = detect_conjugate(&fam, &[0.2, 0.0], &opts).unwrap().unwrap();
        // collapse the differential onto one direction
        let c = ev.dgamma.column(0).into_owned();
        ev.dgamma = DMatrix::from_columns(&[c.clone(), c.clone() * 2.0, c * 3.0]);
        assert!(matches!(
            fold_check(&fam, &ev, &opts),
            Err(HillError::DegenerateSingularity { .. })
        ));
    }

    #[test]
    fn three_dimensional_model_fold() {
        let fam = family(MechanicalSystem::model(3, 0.5), &[0.0, 0.0, 1.0], 8.0);
        let opts = ConjugateOptions::default();
        let ev = detect_conjugate(&fam, &[0.3, -0.2], &opts).unwrap().unwrap();
        let r = fold_check(&fam, &ev, &opts).unwrap();
        assert!(r.certified, "{r:?}");
        assert!(r.second_sigma_ratio > 1e-2);
        let th = f64::hypot(0.3, -0.2);
        assert!((ev.t_star - 2.0 / th.cos()).abs() < 1e-8);
        assert!((ev.point[2] - th.tan().powi(2)).abs() < 1e-8);
    }
}
