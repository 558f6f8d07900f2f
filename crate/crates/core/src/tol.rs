//! Default tolerances and numerical parameters shared across modules.

/// Window (in units of f) inside which a point counts as lying on the Hill boundary.
pub const BOUNDARY: f64 = 1e-9;

/// Default fixed step of the symplectic integrator.
pub const STEP: f64 = 1e-3;

pub const ENERGY: f64 = 1e-9;

/// Residual speed accepted at a refined brake instant.
pub const BRAKE: f64 = 1e-10;

pub const BRAKE_BISECTION_ITERS: usize = 60;

pub const DET: f64 = 1e-10;
pub const RANK: f64 = 1e-6;
pub const FOLD: f64 = 1e-8;
pub const ANGLE_DEG: f64 = 5.0;

/// Conjugate times are bracketed to this width.
pub const CONJUGATE_TIME: f64 = 1e-10;

/// Integrator steps skipped before conjugate detection starts.
pub const FLOOR_STEPS: usize = 10;

pub const MIN_DIRECTION_GRID: usize = 8;

pub const LAMBDA: f64 = 1.4;
pub const DELTA_DEG: f64 = 44.0;
pub const RESIDENCE_SAFETY: f64 = 1.05;
