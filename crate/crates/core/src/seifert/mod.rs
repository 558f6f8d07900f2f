//! Seifert cylinder coordinates `(x, y)` near a regular Hill-boundary point.
//!
//! Vertical lines `x = const` are brake orbits started from rest on the
//! boundary. Along each of them `y = ((3/2) d_JM)^{2/3}`, where `d_JM` is the JM
//! length back to the boundary, so the JM metric reads `y dy^2` on vertical
//! lines and equals `y (dx^2 + dy^2)` exactly in the constant-force model.
//! Horizontal coordinates are tangent-plane coordinates scaled by
//! `|grad f(q0)|^{1/3}`, which normalizes the `dx^2` coefficient to `y` at `q0`.
//!
//! The chart is tabulated: each brake orbit on a grid of boundary points is
//! stored as a cubic Hermite table in `y`, and tables are blended across `x`
//! with Catmull-Rom weights so that the chart is C^1.

mod props;
mod scan;
mod trace;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use props::{
    chart_metric_check, property1_check, property3_check, property4_check, property5_check,
    MetricGrid, PropertyReport, SampleSpec,
};
pub use scan::{rescale_compare, theorem1_scan, RescalePoint, RescaleReport, ScanPair, ScanReport};
pub use trace::{trace_in_chart, ChartTrace, Exit, TraceLimits};

use crate::conjugate::orthonormal_frame;
use crate::dynamics::reparam::{hermite, hermite_slope};
use crate::dynamics::{integrate, IntegratorOptions};
use crate::error::{check_dim, HillError, Result};
use crate::system::{jm_cumulative, MechanicalSystem, State};
use crate::tol;

/// Grid nodes beyond each end of the x range.
const PAD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartOptions {
    /// Boundary nodes per horizontal axis across `[-extent, extent]`.
    pub nodes: usize,
    /// Integrator samples along each brake orbit.
    pub samples_per_orbit: usize,
    pub tol_boundary: f64,
    /// Upper bound on the integrator step along brake orbits.
    pub max_step: f64,
}

impl ChartOptions {
    pub fn for_dimension(n: usize) -> Self {
        Self {
            nodes: if n <= 2 { 81 } else { 17 },
            samples_per_orbit: 400,
            tol_boundary: tol::BOUNDARY,
            max_step: tol::STEP,
        }
    }
}

#[derive(Debug, Clone)]
struct BrakeTable {
    ys: Vec<f64>,
    qs: Vec<DVector<f64>>,
    /// `dq/dy`
    dq: Vec<DVector<f64>>,
}

impl BrakeTable {
    fn locate(&self, y: f64) -> Result<(usize, f64, f64)> {
        let top = *self.ys.last().expect("nonempty table");
        if y < -1e-12 || y > top {
            return Err(HillError::chart(format!("height {y} outside the chart range [0, {top}]")));
        }
        let y = y.max(0.0);
        let k = self.ys.partition_point(|&v| v <= y).clamp(1, self.ys.len() - 1) - 1;
        let h = self.ys[k + 1] - self.ys[k];
        Ok((k, h, (y - self.ys[k]) / h))
    }

    fn eval(&self, y: f64, q: &mut DVector<f64>, dq: &mut DVector<f64>, w: f64) -> Result<()> {
        let (k, h, u) = self.locate(y)?;
        for i in 0..q.len() {
            let args = (self.qs[k][i], self.dq[k][i], self.qs[k + 1][i], self.dq[k + 1][i]);
            q[i] += w * hermite(args.0, args.1, args.2, args.3, h, u);
            dq[i] += w * hermite_slope(args.0, args.1, args.2, args.3, h, u);
        }
        Ok(())
    }
}

/// Catmull-Rom weights and their derivatives at `u` in `[0, 1]`.
fn catmull_rom(u: f64) -> ([f64; 4], [f64; 4]) {
    let (u2, u3) = (u * u, u * u * u);
    (
        [
            0.5 * (-u3 + 2.0 * u2 - u),
            0.5 * (3.0 * u3 - 5.0 * u2 + 2.0),
            0.5 * (-3.0 * u3 + 4.0 * u2 + u),
            0.5 * (u3 - u2),
        ],
        [
            0.5 * (-3.0 * u2 + 4.0 * u - 1.0),
            0.5 * (9.0 * u2 - 10.0 * u),
            0.5 * (-9.0 * u2 + 8.0 * u + 1.0),
            0.5 * (3.0 * u2 - 2.0 * u),
        ],
    )
}

#[derive(Debug, Clone)]
pub struct SeifertChart {
    system: MechanicalSystem,
    q0: DVector<f64>,
    normal: DVector<f64>,
    tangent: Vec<DVector<f64>>,
    scale: f64,
    extent: f64,
    height: f64,
    /// Node coordinates along each horizontal axis (shared by all axes).
    axis: Vec<f64>,
    spacing: f64,
    tables: Vec<BrakeTable>,
}

impl SeifertChart {
    /// Tabulate the chart on `|x_i| <= extent`, `0 <= y <= height` around `q0`.
    pub fn build(
        system: &MechanicalSystem,
        q0: &DVector<f64>,
        extent: f64,
        height: f64,
        opts: &ChartOptions,
    ) -> Result<Self> {
        let n = system.dimension();
        check_dim(n, q0.len())?;
        if n < 2 {
            return Err(HillError::config("system.dimension", "charts need n >= 2"));
        }
        if !(extent > 0.0 && height > 0.0) {
            return Err(HillError::config("extent", "extent and height must be positive"));
        }
        if opts.nodes < 4 || opts.samples_per_orbit < 16 {
            return Err(HillError::config("grid", "need at least 4 nodes and 16 orbit samples"));
        }
        let class = system.hill_classify(q0, opts.tol_boundary)?;
        if !class.regular {
            return Err(HillError::chart(format!(
                "q0 is not a regular boundary point (f = {:e}, |grad f| = {:e})",
                class.f, class.grad_f_norm
            )));
        }
        let grad = system.grad_f(q0);
        let gnorm = grad.norm();
        let normal = grad / gnorm;
        let tangent = orthonormal_frame(&-&normal);
        let scale = gnorm.cbrt();
        let spacing = 2.0 * extent / (opts.nodes - 1) as f64;
        let axis: Vec<f64> = (0..opts.nodes + 2 * PAD)
            .map(|j| -extent + (j as f64 - PAD as f64) * spacing)
            .collect();
        let m = n - 1;
        let per_axis = axis.len();
        let count = per_axis.pow(m as u32);
        let chart = Self {
            system: system.clone(),
            q0: q0.clone(),
            normal,
            tangent,
            scale,
            extent,
            height,
            axis,
            spacing,
            tables: Vec::new(),
        };
        let tables = (0..count)
            .into_par_iter()
            .map(|flat| {
                let x: Vec<f64> = (0..m)
                    .map(|k| chart.axis[(flat / per_axis.pow(k as u32)) % per_axis])
                    .collect();
                let b = chart.boundary_point(&x)?;
                chart.brake_table(&b, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tables, ..chart })
    }

    pub fn system(&self) -> &MechanicalSystem {
        &self.system
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.q0
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn dimension(&self) -> usize {
        self.q0.len()
    }

    /// Unit normal `grad f / |grad f|` at `q0`, pointing into the Hill region.
    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    /// `x = scale * (tangent-plane coordinate)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Boundary point above tangent-plane position `x / scale`, found by a
    /// bracketed root search for `f = 0` along the normal.
    pub fn boundary_point(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut p = self.q0.clone();
        for (t, xi) in self.tangent.iter().zip(x) {
            p += t * (xi / self.scale);
        }
        let g = |s: f64| self.system.f(&(&p + &self.normal * s));
        let g0 = g(0.0);
        if g0 == 0.0 {
            return Ok(p);
        }
        let fail = || HillError::chart(format!("no boundary point found above x = {x:?}"));
        let slope = self.system.grad_f(&self.q0).norm();
        // f grows along the normal, so the root lies on the side opposite the sign of f
        let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
        let mut reach = 1.5 * g0.abs() / slope + 1e-12;
        let mut far = dir * reach;
        let mut tries = 0;
        while g(far) * g0 > 0.0 {
            reach *= 2.0;
            far = dir * reach;
            tries += 1;
            if tries > 60 || !g(far).is_finite() {
                return Err(fail());
            }
        }
        let (mut lo, mut hi) = (0.0f64, far);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) * g0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() <= 1e-16 * hi.abs().max(1e-300) {
                break;
            }
        }
        let mut s = 0.5 * (lo + hi);
        let q = &p + &self.normal * s;
        let d = self.system.grad_f(&q).dot(&self.normal);
        if d != 0.0 {
            let polished = s - g(s) / d;
            if (polished - lo) * (polished - hi) <= 0.0 && g(polished).abs() <= g(s).abs() {
                s = polished;
            }
        }
        let q = &p + &self.normal * s;
        if self.system.f(&q).abs() > 1e-12 {
            return Err(fail());
        }
        Ok(q)
    }

    fn brake_table(&self, b: &DVector<f64>, opts: &ChartOptions) -> Result<BrakeTable> {
        let n = b.len();
        let grad_v = self.system.potential().gradient(b);
        let gv = grad_v.norm();
        if !(gv > 0.0) {
            return Err(HillError::chart("grad V vanishes on the boundary sheet"));
        }
        // near the boundary y ~ kappa t^2
        let kappa = gv.powf(4.0 / 3.0) / 2f64.powf(2.0 / 3.0);
        let y_top = 1.3 * self.height;
        let mut t_end = 1.25 * (y_top / kappa).sqrt();
        let rest = State::new(b.clone(), DVector::zeros(n));
        for _ in 0..8 {
            let step = (t_end / opts.samples_per_orbit as f64).min(opts.max_step);
            let mut iopts = IntegratorOptions::with_step(step);
            iopts.tol_boundary = opts.tol_boundary;
            let traj = integrate(&self.system, &rest, (0.0, t_end), &iopts)?;
            let d = jm_cumulative(&self.system, &traj)?;
            let ys: Vec<f64> = d.iter().map(|d| (1.5 * d).powf(2.0 / 3.0)).collect();
            let Some(top) = ys.iter().position(|&y| y >= y_top) else {
                t_end *= 1.5;
                continue;
            };
            let end = (top + 2).min(ys.len());
            if ys[..end].windows(2).any(|w| w[1] <= w[0]) {
                return Err(HillError::chart(
                    "brake orbit turns back below the chart height; reduce the height",
                ));
            }
            let mut dq = Vec::with_capacity(end);
            dq.push(-&grad_v / (2.0 * kappa));
            for (s, &y) in traj.samples[1..end].iter().zip(&ys[1..end]) {
                let rate = self.system.f(&s.state.q).max(0.0).sqrt() * s.state.v.norm();
                dq.push(&s.state.v * (y.sqrt() / rate));
            }
            return Ok(BrakeTable {
                ys: ys[..end].to_vec(),
                qs: traj.samples[..end].iter().map(|s| s.state.q.clone()).collect(),
                dq,
            });
        }
        Err(HillError::chart("brake orbit never reaches the chart height"))
    }

    fn cell(&self, xi: f64) -> Result<(usize, f64)> {
        let lo = self.axis[1];
        let hi = self.axis[self.axis.len() - 2];
        if !(xi >= lo && xi <= hi) {
            return Err(HillError::chart(format!("x = {xi} outside the chart range")));
        }
        let j = (((xi - self.axis[0]) / self.spacing).floor() as usize).clamp(1, self.axis.len() - 3);
        Ok((j, (xi - self.axis[j]) / self.spacing))
    }

    /// Ambient point and Jacobian `d q / d(x, y)` (columns `x_1..x_{n-1}, y`).
    pub fn forward_jacobian(&self, x: &[f64], y: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.dimension();
        let m = n - 1;
        check_dim(m, x.len())?;
        let cells = x.iter().map(|&xi| self.cell(xi)).collect::<Result<Vec<_>>>()?;
        let weights: Vec<_> = cells.iter().map(|&(_, u)| catmull_rom(u)).collect();
        let per_axis = self.axis.len();
        let mut q = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, n);
        let mut qa = DVector::zeros(n);
        let mut dqa = DVector::zeros(n);
        for combo in 0..4usize.pow(m as u32) {
            let mut flat = 0;
            let mut w = 1.0;
            let mut dw = vec![1.0; m];
            for k in 0..m {
                let o = (combo / 4usize.pow(k as u32)) % 4;
                let node = cells[k].0 + o - 1;
                flat += node * per_axis.pow(k as u32);
                w *= weights[k].0[o];
                for (l, d) in dw.iter_mut().enumerate() {
                    *d *= if l == k { weights[k].1[o] / self.spacing } else { weights[k].0[o] };
                }
            }
            qa.fill(0.0);
            dqa.fill(0.0);
            self.tables[flat].eval(y, &mut qa, &mut dqa, 1.0)?;
            q += &qa * w;
            for (l, d) in dw.iter().enumerate() {
                let mut col = jac.column_mut(l);
                col += &qa * *d;
            }
            let mut col = jac.column_mut(m);
            col += &dqa * w;
        }
        Ok((q, jac))
    }

    pub fn forward(&self, x: &[f64], y: f64) -> Result<DVector<f64>> {
        Ok(self.forward_jacobian(x, y)?.0)
    }

    /// Chart coordinates of `q` by Newton iteration on the forward map.
    pub fn inverse(&self, q: &DVector<f64>) -> Result<(Vec<f64>, f64)> {
        let d = q - &self.q0;
        let x: Vec<f64> = self.tangent.iter().map(|t| self.scale * t.dot(&d)).collect();
        let y = (self.scale * self.normal.dot(&d)).max(0.0);
        self.inverse_from(q, (x, y))
    }

    /// As [`SeifertChart::inverse`] with a starting guess.
    pub fn inverse_from(&self, q: &DVector<f64>, guess: (Vec<f64>, f64)) -> Result<(Vec<f64>, f64)> {
        check_dim(self.dimension(), q.len())?;
        let m = self.dimension() - 1;
        let (mut x, mut y) = guess;
        let scale = q.amax().max(1.0);
        for _ in 0..50 {
            let (p, jac) = self.forward_jacobian(&x, y)?;
            let r = &p - q;
            if r.amax() <= 1e-14 * scale {
                return Ok((x, y));
            }
            let step = jac
                .lu()
                .solve(&r)
                .ok_or_else(|| HillError::chart("singular chart Jacobian"))?;
            for (xi, s) in x.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
            let y_new = y - step[m];
            y = if y_new < 0.0 { 0.5 * y } else { y_new };
            if step.amax() <= 1e-15 * scale {
                break;
            }
        }
        let r = (self.forward(&x, y)? - q).amax();
        if r > 1e-10 * scale {
            return Err(HillError::chart(format!("inverse did not converge (residual {r:e})")));
        }
        Ok((x, y))
    }

    /// Ambient velocity for a chart direction `(dx, dy)` at `(x, y)`, scaled to
    /// the energy shell.
    pub fn ambient_velocity(&self, x: &[f64], y: f64, dir: &[f64]) -> Result<State> {
        let (q, jac) = self.forward_jacobian(x, y)?;
        let v = jac * DVector::from_column_slice(dir);
        self.system.state_on_shell(q, &v)
    }

    /// Chart velocity `(dx/dt, dy/dt)` of the motion `(q, v)`.
    pub fn chart_velocity(&self, x: &[f64], y: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, jac) = self.forward_jacobian(x, y)?;
        jac.lu()
            .solve(v)
            .ok_or_else(|| HillError::chart("singular chart Jacobian"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_chart() -> SeifertChart {
        let sys = MechanicalSystem::model(2, 0.5);
        SeifertChart::build(&sys, &DVector::zeros(2), 1.0, 1.0, &ChartOptions::for_dimension(2)).unwrap()
    }

    fn oscillator_chart() -> SeifertChart {
        let sys = MechanicalSystem::oscillator(2);
        SeifertChart::build(
            &sys,
            &DVector::from_column_slice(&[1.0, 0.0]),
            0.2,
            0.1,
            &ChartOptions::for_dimension(2),
        )
        .unwrap()
    }

    #[test]
    fn model_chart_is_the_identity() {
        let c = model_chart();
        assert!((c.scale() - 1.0).abs() < 1e-15);
        for (x, y) in [(0.0, 0.0), (0.3, 0.2), (-0.9, 1.0), (0.55, 0.013)] {
            let q = c.forward(&[x], y).unwrap();
            assert!((q[0] - x).abs() < 1e-9 && (q[1] - y).abs() < 1e-9, "{x} {y}: {q}");
        }
    }

    #[test]
    fn oscillator_vertical_lines_are_radial() {
        let c = oscillator_chart();
        assert_eq!(c.forward(&[0.0], 0.0).unwrap(), DVector::from_column_slice(&[1.0, 0.0]));
        for y in [1e-4, 1e-3, 1e-2, 0.05] {
            let q = c.forward(&[0.0], y).unwrap();
            assert!(q[1].abs() < 1e-12);
            // distance to the circle is y / 2^{1/3} to first order
            let depth = 1.0 - q[0];
            assert!((depth * 2f64.cbrt() / y - 1.0).abs() < 2.0 * y, "{y}: {depth}");
        }
        for x in [-0.15, 0.07, 0.2] {
            let q = c.forward(&[x], 0.0).unwrap();
            assert!(c.system().f(&q).abs() < 1e-9);
            let deep = c.forward(&[x], 0.05).unwrap();
            // the brake orbit from a point of the circle is a radius
            assert!((deep[0] * q[1] - deep[1] * q[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip() {
        for c in [model_chart(), oscillator_chart()] {
            let (w, h) = (c.extent(), c.height());
            let mut worst: f64 = 0.0;
            for i in 0..20 {
                for j in 0..20 {
                    let x = -w + 2.0 * w * i as f64 / 19.0;
                    let y = h * j as f64 / 19.0;
                    let q = c.forward(&[x], y).unwrap();
                    let (xb, yb) = c.inverse(&q).unwrap();
                    worst = worst.max((xb[0] - x).abs()).max((yb - y).abs());
                }
            }
            assert!(worst < 1e-8, "{worst}");
        }
    }

    #[test]
    fn jacobian_matches_differences() {
        let c = oscillator_chart();
        let h = 1e-6;
        for (x, y) in [(0.01, 0.03), (-0.12, 0.07), (0.1, 0.002)] {
            let (_, jac) = c.forward_jacobian(&[x], y).unwrap();
            let dx = (c.forward(&[x + h], y).unwrap() - c.forward(&[x - h], y).unwrap()) / (2.0 * h);
            let dy = (c.forward(&[x], y + h).unwrap() - c.forward(&[x], y - h).unwrap()) / (2.0 * h);
            assert!((dx - jac.column(0)).amax() < 1e-7);
            assert!((dy - jac.column(1)).amax() < 1e-7);
        }
    }

    #[test]
    fn rejects_interior_and_singular_points() {
        let osc = MechanicalSystem::oscillator(2);
        let opts = ChartOptions::for_dimension(2);
        let r = SeifertChart::build(&osc, &DVector::from_column_slice(&[0.5, 0.0]), 0.1, 0.1, &opts);
        assert!(matches!(r, Err(HillError::Chart { .. })));
        // V = x^2 at E = 0: the origin is a boundary point with grad f = 0
        let p = crate::potential::PolynomialPotential::new(
            2,
            vec![crate::potential::Term { coeff: 1.0, exponents: vec![2, 0] }],
        )
        .unwrap();
        let sys = MechanicalSystem::new(p, 0.0);
        let r = SeifertChart::build(&sys, &DVector::zeros(2), 0.1, 0.1, &opts);
        assert!(matches!(r, Err(HillError::Chart { .. })));
        let c = oscillator_chart();
        assert!(c.forward(&[0.5], 0.01).is_err());
        assert!(c.forward(&[0.0], 0.5).is_err());
    }

    #[test]
    fn three_dimensional_model_chart() {
        let sys = MechanicalSystem::model(3, 0.5);
        let c = SeifertChart::build(&sys, &DVector::zeros(3), 0.5, 0.5, &ChartOptions::for_dimension(3)).unwrap();
        let q = c.forward(&[0.2, -0.1], 0.3).unwrap();
        assert!((q[2] - 0.3).abs() < 1e-9);
        assert!((q[0].hypot(q[1]) - 0.05f64.sqrt()).abs() < 1e-9);
        let (x, y) = c.inverse(&q).unwrap();
        assert!((x[0] - 0.2).abs() < 1e-9 && (x[1] + 0.1).abs() < 1e-9 && (y - 0.3).abs() < 1e-9);
    }
}
