//! One-step maps for `q'' = -grad V(q)`.
//!
//! The default scheme is a fourth-order composition of velocity-Verlet
//! substeps. Every substep is exact for constant forces, so the composed map
//! reproduces the model flow to rounding. The tangent map carried alongside is
//! the exact derivative of the discrete map, hence symplectic.

use nalgebra::{DMatrix, DVector};

use crate::system::{MechanicalSystem, State};

const CBRT2: f64 = 1.259_921_049_894_873_2;
const W_OUTER: f64 = 1.0 / (2.0 - CBRT2);
const W_INNER: f64 = -CBRT2 / (2.0 - CBRT2);
const SUBSTEPS: [f64; 3] = [W_OUTER, W_INNER, W_OUTER];

/// Phase-space point with cached acceleration and optional tangent matrix
/// `M = d(q, v)(t) / d(q, v)(t0)` in block form `[[dq], [dv]]`.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub(crate) accel: DVector<f64>,
    pub tangent: Option<DMatrix<f64>>,
}

impl PhasePoint {
    pub fn state(&self) -> State {
        State::new(self.q.clone(), self.v.clone())
    }

    /// Acceleration `-grad V(q)` at this point.
    pub fn acceleration(&self) -> &DVector<f64> {
        &self.accel
    }

    /// `dq(t)/dv(0)`, the upper-right block of the tangent matrix.
    pub fn dq_dv0(&self) -> Option<DMatrix<f64>> {
        let n = self.q.len();
        self.tangent
            .as_ref()
            .map(|m| m.view((0, n), (n, n)).into_owned())
    }
}

pub struct Stepper<'a> {
    system: &'a MechanicalSystem,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a MechanicalSystem) -> Self {
        Self { system }
    }

    pub fn start(&self, t: f64, state: &State, with_tangent: bool) -> PhasePoint {
        let n = state.q.len();
        PhasePoint {
            t,
            q: state.q.clone(),
            v: state.v.clone(),
            accel: self.system.force(&state.q),
            tangent: with_tangent.then(|| DMatrix::identity(2 * n, 2 * n)),
        }
    }

    /// Advance by `h` (which may be negative or a partial step).
    pub fn advance(&self, p: &PhasePoint, h: f64) -> PhasePoint {
        let mut cur = p.clone();
        for w in SUBSTEPS {
            cur = self.verlet(&cur, w * h);
        }
        cur.t = p.t + h;
        cur
    }

    fn verlet(&self, p: &PhasePoint, h: f64) -> PhasePoint {
        let n = p.q.len();
        let v_half = &p.v + &p.accel * (0.5 * h);
        let q_new = &p.q + &v_half * h;
        let accel_new = self.system.force(&q_new);
        let v_new = &v_half + &accel_new * (0.5 * h);
        let tangent = p.tangent.as_ref().map(|m| {
            let dq = m.rows(0, n);
            let dv = m.rows(n, n);
            let hess_old = self.system.hessian_v(&p.q);
            let dv_half = dv - (&hess_old * dq) * (0.5 * h);
            let dq_new = dq + &dv_half * h;
            let hess_new = self.system.hessian_v(&q_new);
            let dv_new = &dv_half - (&hess_new * &dq_new) * (0.5 * h);
            let mut out = DMatrix::zeros(2 * n, 2 * n);
            out.rows_mut(0, n).copy_from(&dq_new);
            out.rows_mut(n, n).copy_from(&dv_new);
            out
        });
        PhasePoint {
            t: p.t + h,
            q: q_new,
            v: v_new,
            accel: accel_new,
            tangent,
        }
    }
}

/// Dormand-Prince 5(4) step for the first-order system; returns the
/// fifth-order state and an error estimate.
pub(crate) fn dopri_step(
    system: &MechanicalSystem,
    state: &State,
    h: f64,
) -> (State, f64, f64) {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let rhs = |q: &DVector<f64>, v: &DVector<f64>| (v.clone(), system.force(q));
    let mut kq: Vec<DVector<f64>> = Vec::with_capacity(7);
    let mut kv: Vec<DVector<f64>> = Vec::with_capacity(7);
    let (a, b) = rhs(&state.q, &state.v);
    kq.push(a);
    kv.push(b);
    for row in C.iter() {
        let mut q = state.q.clone();
        let mut v = state.v.clone();
        for (j, &c) in row.iter().enumerate().take(kq.len()) {
            if c != 0.0 {
                q += &kq[j] * (h * c);
                v += &kv[j] * (h * c);
            }
        }
        let (a, b) = rhs(&q, &v);
        kq.push(a);
        kv.push(b);
    }
    // the last stage is evaluated at the fifth-order solution (FSAL)
    let mut q5 = state.q.clone();
    let mut v5 = state.v.clone();
    for (j, &c) in C[5].iter().enumerate() {
        q5 += &kq[j] * (h * c);
        v5 += &kv[j] * (h * c);
    }
    let mut q4 = state.q.clone();
    let mut v4 = state.v.clone();
    for (j, &b) in B4.iter().enumerate() {
        q4 += &kq[j] * (h * b);
        v4 += &kv[j] * (h * b);
    }
    let err_q = (&q5 - &q4).amax();
    let err_v = (&v5 - &v4).amax();
    let scale = q5.amax().max(v5.amax());
    (State::new(q5, v5), err_q.max(err_v), scale)
}
