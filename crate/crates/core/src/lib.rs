//! Numerical laboratory for Jacobi-Maupertuis geometry near the Hill boundary.
//!
//! The JM metric `f ds_K^2` with `f = 2(E - V)` degenerates on the Hill
//! boundary `f = 0`. This crate integrates Newton's equations together with
//! their tangent flow, detects conjugate points as critical points of the
//! geodesic family through a base point, certifies fold singularities, builds
//! Seifert cylinder coordinates near a regular boundary point and checks the
//! near-boundary properties of geodesics against the constant-force model.

pub mod config;
pub mod conjugate;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod model;
pub mod potential;
pub mod quadrature;
pub mod seifert;
pub mod svg;
pub mod system;
pub mod tol;

pub use error::{HillError, Result};
pub use potential::{PolynomialPotential, Term};
pub use system::{jm_length, HillClass, HillRegion, MechanicalSystem, State};
