//! Closed-form constant-force model: `x'' = 0`, `y'' = g` on the half space `y >= 0`.
//!
//! Throws leave `P0 = (x0, y0)` at energy zero, so the speed is `sqrt(2 g y0)`.
//! The throw angle `theta` is measured from the straight-down direction; the
//! horizontal part of the velocity points along a unit `azimuth` in `R^{n-1}`.
//! With `v1 = sqrt(2 g y0) sin(theta)` and `v2 = sqrt(2 g y0) cos(theta)` the
//! throw is `x = x0 + v1 t azimuth`, `y = y0 - v2 t + g t^2 / 2`.

use nalgebra::{DVector, Matrix2};
use serde::Serialize;

use crate::conjugate::FoldReport;
use crate::error::{HillError, Result};
use crate::system::State;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub x0: Vec<f64>,
    pub y0: f64,
}

impl ModelPoint {
    pub fn new(x0: Vec<f64>, y0: f64) -> Result<Self> {
        if !(y0 > 0.0) {
            return Err(HillError::config("base", "model base point needs y0 > 0"));
        }
        Ok(Self { x0, y0 })
    }

    pub fn planar(x0: f64, y0: f64) -> Result<Self> {
        Self::new(vec![x0], y0)
    }

    /// Build from an ambient point whose last coordinate is the height.
    pub fn from_ambient(q: &[f64]) -> Result<Self> {
        let (y, x) = q.split_last().ok_or_else(|| HillError::config("base", "empty point"))?;
        Self::new(x.to_vec(), *y)
    }

    pub fn dimension(&self) -> usize {
        self.x0.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThrowParams {
    pub theta: f64,
    pub azimuth: Vec<f64>,
    pub g: f64,
}

impl ThrowParams {
    pub fn planar(theta: f64, g: f64) -> Self {
        Self {
            theta,
            azimuth: vec![1.0],
            g,
        }
    }

    pub fn planar_deg(theta_deg: f64) -> Self {
        Self::planar(theta_deg.to_radians(), 0.5)
    }

    fn speed(&self, p: &ModelPoint) -> f64 {
        (2.0 * self.g * p.y0).sqrt()
    }

    pub fn v1(&self, p: &ModelPoint) -> f64 {
        self.speed(p) * self.theta.sin()
    }

    pub fn v2(&self, p: &ModelPoint) -> f64 {
        self.speed(p) * self.theta.cos()
    }
}

pub fn ballistic_state(p: &ModelPoint, tp: &ThrowParams, t: f64) -> State {
    let (v1, v2, g) = (tp.v1(p), tp.v2(p), tp.g);
    let n = p.dimension();
    let mut q = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    for i in 0..n - 1 {
        q[i] = p.x0[i] + v1 * t * tp.azimuth[i];
        v[i] = v1 * tp.azimuth[i];
    }
    q[n - 1] = p.y0 - v2 * t + 0.5 * g * t * t;
    v[n - 1] = -v2 + g * t;
    State::new(q, v)
}

/// Newtonian time of the conjugate point along the throw: `t* = 2 y0 / v2`.
/// `None` when the throw has no downward component.
pub fn critical_time(p: &ModelPoint, tp: &ThrowParams) -> Option<f64> {
    let v2 = tp.v2(p);
    // cos(90 deg) rounds to a tiny positive number
    (v2 > 1e-12 * tp.speed(p)).then(|| 2.0 * p.y0 / v2)
}

/// Conjugate point `(x0 + 2 y0 tan(theta) azimuth, y0 tan^2(theta))`.
pub fn envelope_point(p: &ModelPoint, tp: &ThrowParams) -> Option<DVector<f64>> {
    critical_time(p, tp)?;
    let tan = tp.theta.tan();
    let n = p.dimension();
    let mut out = DVector::zeros(n);
    for i in 0..n - 1 {
        out[i] = p.x0[i] + 2.0 * p.y0 * tan * tp.azimuth[i];
    }
    out[n - 1] = p.y0 * tan * tan;
    Some(out)
}

/// Height of the envelope `|x - x0|^2 / (4 y0)` above the horizontal position `x`.
pub fn envelope_height(p: &ModelPoint, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().zip(&p.x0).map(|(a, b)| (a - b).powi(2)).sum();
    r2 / (4.0 * p.y0)
}

/// Lowest height reached by the throw, `v1^2 / (2g)` once the vertex is ahead.
pub fn min_height(p: &ModelPoint, tp: &ThrowParams) -> f64 {
    if tp.v2(p) > 0.0 {
        tp.v1(p).powi(2) / (2.0 * tp.g)
    } else {
        p.y0
    }
}

/// Planar family differential with columns `(d/dt, d/dtheta)` and its determinant
/// `t g (2 y0 - v2 t)`.
pub fn gamma_jacobian(p: &ModelPoint, tp: &ThrowParams, t: f64) -> Result<(Matrix2<f64>, f64)> {
    if p.dimension() != 2 {
        return Err(HillError::DimensionMismatch {
            expected: 2,
            got: p.dimension(),
        });
    }
    let (v1, v2, g) = (tp.v1(p), tp.v2(p), tp.g);
    let m = Matrix2::new(v1, v2 * t, -v2 + g * t, v1 * t);
    Ok((m, t * g * (2.0 * p.y0 - v2 * t)))
}

/// Gradient of the family determinant in `(t, theta)`.
fn det_gradient(p: &ModelPoint, tp: &ThrowParams, t: f64) -> [f64; 2] {
    let (v1, v2, g) = (tp.v1(p), tp.v2(p), tp.g);
    [g * (2.0 * p.y0 - 2.0 * v2 * t), g * t * t * v1]
}

/// Closed-form fold data at the conjugate point of a planar throw.
pub fn fold_certificate_model(p: &ModelPoint, tp: &ThrowParams) -> Result<Option<FoldReport>> {
    let Some(t_star) = critical_time(p, tp) else {
        return Ok(None);
    };
    let (m, _) = gamma_jacobian(p, tp, t_star)?;
    let sv = m.svd(false, false).singular_values;
    let mut sigmas = vec![sv[0], sv[1]];
    sigmas.sort_by(|a, b| b.total_cmp(a));
    let raw = [tp.v2(p) * t_star, -tp.v1(p)];
    let norm = raw[0].hypot(raw[1]);
    let kernel = vec![raw[0] / norm, raw[1] / norm];
    let grad = det_gradient(p, tp, t_star);
    let gnorm = grad[0].hypot(grad[1]);
    let critical_tangent = vec![grad[1] / gnorm, -grad[0] / gnorm];
    let along = grad[0] * kernel[0] + grad[1] * kernel[1];
    let angle = (along.abs() / gnorm).clamp(0.0, 1.0).asin().to_degrees();
    Ok(Some(FoldReport {
        singular_values: sigmas.clone(),
        sigma_ratio: sigmas[1] / sigmas[0],
        second_sigma_ratio: 1.0,
        kernel,
        det_gradient: grad.to_vec(),
        critical_tangent,
        transversality_angle_deg: angle,
        det_derivative_along_kernel: along,
        certified: true,
    }))
}

/// Second-order data of the family at the brake point `(theta, t) = (0, t_b)`:
/// `x = dx_dtheta * theta + ...`, `y = y_hh * h^2 + y_thth * theta^2 + ...`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrakeTaylor {
    pub t_brake: f64,
    pub dx_dtheta: f64,
    pub y_hh: f64,
    pub y_thth: f64,
}

pub fn brake_taylor(p: &ModelPoint, g: f64) -> BrakeTaylor {
    BrakeTaylor {
        t_brake: (2.0 * p.y0 / g).sqrt(),
        dx_dtheta: 2.0 * p.y0,
        y_hh: 0.5 * g,
        y_thth: p.y0,
    }
}

/// Samples of the envelope hypersurface (the envelope parabola rotated about the
/// vertical axis through the base point).
pub fn envelope_hypersurface(
    p: &ModelPoint,
    theta_max: f64,
    n_theta: usize,
    n_azimuth: usize,
) -> Vec<DVector<f64>> {
    let n = p.dimension();
    let mut out = Vec::new();
    if n == 2 {
        for k in 0..n_theta {
            let th = -theta_max + 2.0 * theta_max * k as f64 / (n_theta.max(2) - 1) as f64;
            out.extend(envelope_point(p, &ThrowParams::planar(th, 0.5)));
        }
        return out;
    }
    for az in azimuths(n - 1, n_azimuth) {
        for k in 0..n_theta {
            let th = theta_max * k as f64 / (n_theta.max(2) - 1) as f64;
            let tp = ThrowParams {
                theta: th,
                azimuth: az.clone(),
                g: 0.5,
            };
            out.extend(envelope_point(p, &tp));
        }
    }
    out
}

/// Unit horizontal directions: a circle for `m = 2`, signed axes otherwise.
fn azimuths(m: usize, count: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let phi = std::f64::consts::TAU * k as f64 / count as f64;
                vec![phi.cos(), phi.sin()]
            })
            .collect(),
        _ => (0..2 * m)
            .map(|k| {
                let mut a = vec![0.0; m];
                a[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                a
            })
            .collect(),
    }
}
