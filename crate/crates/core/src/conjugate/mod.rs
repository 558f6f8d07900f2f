//! Geodesic family through a base point and its conjugate points.
//!
//! Family members leave the base `q` with speed `sqrt(f(q))` in direction
//! `omega(u)`, where `u` in `R^{n-1}` is an exponential chart on the sphere of
//! directions centred on the straight-down axis. Conjugate points are zeros of
//! `det dGamma`, with `dGamma = [dGamma/dt, dGamma/du_1, ...]` assembled from the
//! tangent flow.

mod fold;
mod locus;

use nalgebra::{DMatrix, DVector};

pub use fold::{fold_check, kernel_direction, FoldReport};
pub use locus::{
    conjugate_locus, direction_grid, downward_cone, hausdorff, reparam_invariance_check,
    side_and_tangency_check, ConeRecord, DownwardCone, Locus, LocusSample, SideReport,
    SideRecord,
};

use crate::dynamics::{integrate_with_variations, IntegratorOptions, PhasePoint, Stepper, Termination};
use crate::error::{check_dim, HillError, Result};
use crate::system::{MechanicalSystem, State};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateOptions {
    pub det_tol: f64,
    /// Width of the final bracket around `t*`.
    pub time_tol: f64,
    pub rank_tol: f64,
    pub fold_tol: f64,
    pub angle_tol_deg: f64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        Self {
            det_tol: tol::DET,
            time_tol: tol::CONJUGATE_TIME,
            rank_tol: tol::RANK,
            fold_tol: tol::FOLD,
            angle_tol_deg: tol::ANGLE_DEG,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FamilyMap {
    system: MechanicalSystem,
    base: DVector<f64>,
    down: DVector<f64>,
    frame: Vec<DVector<f64>>,
    speed: f64,
    t_max: f64,
    opts: IntegratorOptions,
}

impl FamilyMap {
    /// Family through `base` with the down axis `-grad f / |grad f|` taken at the
    /// boundary point reached by projecting `base` along `grad f`.
    pub fn new(
        system: MechanicalSystem,
        base: DVector<f64>,
        t_max: f64,
        opts: IntegratorOptions,
    ) -> Result<Self> {
        check_dim(system.dimension(), base.len())?;
        let down = down_axis(&system, &base)?;
        Self::with_axis(system, base, down, t_max, opts)
    }

    pub fn with_axis(
        system: MechanicalSystem,
        base: DVector<f64>,
        down: DVector<f64>,
        t_max: f64,
        opts: IntegratorOptions,
    ) -> Result<Self> {
        let n = system.dimension();
        check_dim(n, base.len())?;
        check_dim(n, down.len())?;
        if n < 2 {
            return Err(HillError::config("system.dimension", "families need n >= 2"));
        }
        let f = system.conformal_factor(&base)?;
        if !(f > 0.0) {
            return Err(HillError::Domain {
                message: "family base must be interior".into(),
                f,
            });
        }
        if !(t_max > 0.0) {
            return Err(HillError::config("t_max", "must be positive"));
        }
        opts.validate()?;
        let down = down.normalize();
        let frame = orthonormal_frame(&down);
        Ok(Self {
            system,
            base,
            down,
            frame,
            speed: f.sqrt(),
            t_max,
            opts,
        })
    }

    pub fn system(&self) -> &MechanicalSystem {
        &self.system
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn down_axis(&self) -> &DVector<f64> {
        &self.down
    }

    /// Unit vectors completing the down axis to an oriented orthonormal basis.
    pub fn frame(&self) -> &[DVector<f64>] {
        &self.frame
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn options(&self) -> &IntegratorOptions {
        &self.opts
    }

    pub fn chart_dim(&self) -> usize {
        self.frame.len()
    }

    /// `omega(u) = cos|u| d + sin|u| (sum u_i e_i) / |u|`.
    pub fn direction(&self, u: &[f64]) -> DVector<f64> {
        let r = norm(u);
        let mut w = &self.down * r.cos();
        let s = sinc(r);
        for (e, ui) in self.frame.iter().zip(u) {
            w += e * (s * ui);
        }
        w
    }

    /// `d omega / d u_i`.
    fn direction_derivs(&self, u: &[f64]) -> Vec<DVector<f64>> {
        let r = norm(u);
        let s = sinc(r);
        // (r cos r - sin r) / r^3
        let c = if r < 1e-4 {
            -1.0 / 3.0 + r * r / 30.0
        } else {
            (r * r.cos() - r.sin()) / (r * r * r)
        };
        let mut sum = DVector::zeros(self.base.len());
        for (e, ui) in self.frame.iter().zip(u) {
            sum += e * *ui;
        }
        (0..self.frame.len())
            .map(|i| &self.down * (-s * u[i]) + &self.frame[i] * s + &sum * (c * u[i]))
            .collect()
    }

    pub fn initial_state(&self, u: &[f64]) -> State {
        State::new(self.base.clone(), self.direction(u) * self.speed)
    }

    /// Start of the conjugate search: skips the polar-coordinate zero of
    /// `det dGamma` at `t = 0`.
    pub fn t_floor(&self) -> f64 {
        tol::FLOOR_STEPS as f64 * self.opts.step
    }

    fn check_chart(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.chart_dim() {
            return Err(HillError::DimensionMismatch {
                expected: self.chart_dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    fn assemble(&self, p: &PhasePoint, derivs: &[DVector<f64>]) -> (DMatrix<f64>, f64) {
        let n = self.base.len();
        let qv = p.dq_dv0().expect("tangent carried");
        let mut m = DMatrix::zeros(n, n);
        m.set_column(0, &p.v);
        for (i, dw) in derivs.iter().enumerate() {
            m.set_column(i + 1, &(&qv * (dw * self.speed)));
        }
        let det = m.determinant();
        (m, det)
    }
}

#[derive(Debug, Clone)]
pub struct FamilyEval {
    pub point: DVector<f64>,
    pub velocity: DVector<f64>,
    pub dgamma: DMatrix<f64>,
    pub det: f64,
}

/// Position and family differential at chart point `u` and time `t`.
pub fn family_map_eval(fam: &FamilyMap, u: &[f64], t: f64) -> Result<FamilyEval> {
    fam.check_chart(u)?;
    if !(t > 0.0 && t <= fam.t_max) {
        return Err(HillError::config("t", format!("time {t} outside (0, {}]", fam.t_max)));
    }
    let traj = integrate_with_variations(&fam.system, &fam.initial_state(u), (0.0, t), &fam.opts)?;
    if let Termination::LeftHillRegion { t: t_exit, f } = traj.termination {
        return Err(HillError::Domain {
            message: format!("family member leaves the Hill region at t = {t_exit}"),
            f,
        });
    }
    let last = traj.last();
    let tangent = traj.tangent.as_ref().and_then(|m| m.last()).cloned();
    let p = phase_point(&fam.system, last.time, &last.state, tangent);
    let (dgamma, det) = fam.assemble(&p, &fam.direction_derivs(u));
    Ok(FamilyEval {
        point: p.q,
        velocity: p.v,
        dgamma,
        det,
    })
}

#[derive(Debug, Clone)]
pub struct ConjugateEvent {
    pub theta: Vec<f64>,
    pub t_star: f64,
    pub point: DVector<f64>,
    pub velocity: DVector<f64>,
    pub det_before: f64,
    pub det_after: f64,
    /// `det dGamma` at `t*`.
    pub det_star: f64,
    pub dgamma: DMatrix<f64>,
    /// Unit kernel of `dGamma` in `(t, u)` coordinates.
    pub kernel: DVector<f64>,
}

/// First zero of `det dGamma(u, .)` after the floor time, bracketed by bisection.
pub fn detect_conjugate(
    fam: &FamilyMap,
    u: &[f64],
    opts: &ConjugateOptions,
) -> Result<Option<ConjugateEvent>> {
    fam.check_chart(u)?;
    if !(opts.det_tol > 0.0 && opts.time_tol > 0.0) {
        return Err(HillError::config("tolerances", "det_tol and time_tol must be positive"));
    }
    let traj = integrate_with_variations(&fam.system, &fam.initial_state(u), (0.0, fam.t_max), &fam.opts)?;
    let derivs = fam.direction_derivs(u);
    let tangents = traj.tangent.as_ref().expect("tangent carried");
    let floor = fam.t_floor();
    let points: Vec<PhasePoint> = traj
        .samples
        .iter()
        .zip(tangents)
        .map(|(s, m)| phase_point(&fam.system, s.time, &s.state, Some(m.clone())))
        .collect();
    let stepper = Stepper::new(&fam.system);
    let mut prev: Option<(usize, f64)> = None;
    for (k, p) in points.iter().enumerate() {
        if p.t < floor {
            continue;
        }
        let (_, det) = fam.assemble(p, &derivs);
        if let Some((j, d0)) = prev {
            if d0 != 0.0 && d0 * det <= 0.0 {
                let a = &points[j];
                let (mut lo, mut hi) = (0.0, p.t - a.t);
                let (mut d_lo, mut d_hi) = (d0, det);
                while hi - lo > opts.time_tol {
                    let mid = 0.5 * (lo + hi);
                    let (_, dm) = fam.assemble(&stepper.advance(a, mid), &derivs);
                    if dm == 0.0 {
                        lo = mid;
                        hi = mid;
                        d_lo = 0.0;
                        d_hi = 0.0;
                        break;
                    }
                    if dm * d0 > 0.0 {
                        lo = mid;
                        d_lo = dm;
                    } else {
                        hi = mid;
                        d_hi = dm;
                    }
                }
                let mid = 0.5 * (lo + hi);
                let star = stepper.advance(a, mid);
                let (dgamma, det_star) = fam.assemble(&star, &derivs);
                let kernel = kernel_direction(&dgamma);
                return Ok(Some(ConjugateEvent {
                    theta: u.to_vec(),
                    t_star: a.t + mid,
                    point: star.q,
                    velocity: star.v,
                    det_before: d_lo,
                    det_after: d_hi,
                    det_star,
                    dgamma,
                    kernel,
                }));
            }
        }
        prev = Some((k, det));
    }
    Ok(None)
}

pub(crate) fn phase_point(
    system: &MechanicalSystem,
    t: f64,
    state: &State,
    tangent: Option<DMatrix<f64>>,
) -> PhasePoint {
    PhasePoint {
        t,
        q: state.q.clone(),
        v: state.v.clone(),
        accel: system.force(&state.q),
        tangent,
    }
}

/// `-grad f / |grad f|` at the boundary point reached from `base` by Newton
/// steps along `grad f`; falls back to the gradient at `base`.
pub fn down_axis(system: &MechanicalSystem, base: &DVector<f64>) -> Result<DVector<f64>> {
    let mut q = base.clone();
    for _ in 0..60 {
        let f = system.f(&q);
        let g = system.grad_f(&q);
        let g2 = g.norm_squared();
        if g2 == 0.0 || !f.is_finite() {
            break;
        }
        if f.abs() < 1e-14 {
            return Ok(-g / g2.sqrt());
        }
        q -= g * (f / g2);
    }
    let g = system.grad_f(base);
    let norm = g.norm();
    if norm == 0.0 {
        return Err(HillError::Domain {
            message: "grad f vanishes at the base; down axis undefined".into(),
            f: system.f(base),
        });
    }
    Ok(-g / norm)
}

/// `e_i` with `(d, e_1, ..., e_{n-1})` orthonormal; in the plane `e_1` is `d`
/// rotated by +90 degrees.
pub(crate) fn orthonormal_frame(d: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = d.len();
    if n == 2 {
        return vec![DVector::from_column_slice(&[-d[1], d[0]])];
    }
    let mut basis = vec![d.clone()];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    for i in order {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for b in &basis {
            e -= b * b.dot(&e);
        }
        let norm = e.norm();
        if norm > 1e-8 {
            basis.push(e / norm);
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis.sort_by(|a, b| a.iamax().cmp(&b.iamax()));
    basis
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sin r / r`.
fn sinc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 6.0
    } else {
        r.sin() / r
    }
}
