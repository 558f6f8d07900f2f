//! Scenario files: `{"system": {...}, "experiment": {"kind": ..., ...}}`.
//!
//! The experiment object is dispatched on `kind` by hand so that every schema
//! error carries the full key path (`experiment.eps_a`, `system.potential[1].coeff`).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conjugate::ConjugateOptions;
use crate::dynamics::{IntegratorOptions, Parameterization, Scheme};
use crate::error::{HillError, Result};
use crate::potential::{PolynomialPotential, Term};
use crate::system::MechanicalSystem;
use crate::tol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dimension: usize,
    pub energy: f64,
    pub potential: Vec<Term>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<MechanicalSystem> {
        if !self.energy.is_finite() {
            return Err(HillError::config("system.energy", "must be finite"));
        }
        let p = PolynomialPotential::new(self.dimension, self.potential.clone())?;
        Ok(MechanicalSystem::new(p, self.energy))
    }
}

fn d_step() -> f64 {
    tol::STEP
}
fn d_energy() -> f64 {
    tol::ENERGY
}
fn d_boundary() -> f64 {
    tol::BOUNDARY
}
fn d_brake() -> f64 {
    tol::BRAKE
}
fn d_scheme() -> Scheme {
    Scheme::Symplectic
}
fn d_param() -> Parameterization {
    Parameterization::NewtonianTime
}
fn d_det() -> f64 {
    tol::DET
}
fn d_time() -> f64 {
    tol::CONJUGATE_TIME
}
fn d_rank() -> f64 {
    tol::RANK
}
fn d_fold() -> f64 {
    tol::FOLD
}
fn d_angle() -> f64 {
    tol::ANGLE_DEG
}
fn d_delta() -> f64 {
    tol::DELTA_DEG
}
fn d_lambda() -> f64 {
    tol::LAMBDA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "d_det")]
    pub det: f64,
    #[serde(default = "d_time")]
    pub time: f64,
    #[serde(default = "d_rank")]
    pub rank: f64,
    #[serde(default = "d_fold")]
    pub fold: f64,
    #[serde(default = "d_angle")]
    pub angle_deg: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            det: d_det(),
            time: d_time(),
            rank: d_rank(),
            fold: d_fold(),
            angle_deg: d_angle(),
        }
    }
}

impl ToleranceSpec {
    pub fn options(&self) -> ConjugateOptions {
        ConjugateOptions {
            det_tol: self.det,
            time_tol: self.time,
            rank_tol: self.rank,
            fold_tol: self.fold,
            angle_tol_deg: self.angle_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub t_span: [f64; 2],
    #[serde(default = "d_step")]
    pub step: f64,
    #[serde(default = "d_scheme")]
    pub integrator: Scheme,
    #[serde(default = "d_energy")]
    pub energy_tol: f64,
    #[serde(default = "d_boundary")]
    pub tol_boundary: f64,
    #[serde(default = "d_brake")]
    pub brake_tol: f64,
    #[serde(default = "d_param")]
    pub parameterization: Parameterization,
}

impl SimulateSpec {
    pub fn integrator_options(&self) -> IntegratorOptions {
        IntegratorOptions {
            step: self.step,
            scheme: self.integrator,
            tol_boundary: self.tol_boundary,
            energy_tol: self.energy_tol,
        }
    }
}

fn d_theta_max() -> f64 {
    60.0
}
fn d_curves() -> usize {
    13
}
fn d_curve_samples() -> usize {
    200
}
fn d_envelope_samples() -> usize {
    121
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEnvelopeSpec {
    pub base: Vec<f64>,
    #[serde(default = "d_theta_max")]
    pub theta_max_deg: f64,
    #[serde(default = "d_curves")]
    pub curves: usize,
    #[serde(default = "d_curve_samples")]
    pub samples_per_curve: usize,
    #[serde(default = "d_envelope_samples")]
    pub envelope_samples: usize,
    /// Draw with gravity pointing up (the sprinkler view).
    #[serde(default)]
    pub flip: bool,
}

fn d_theta_min() -> f64 {
    -60.0
}
fn d_resolution() -> usize {
    25
}
fn d_invariance() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    #[serde(default = "d_cone_max")]
    pub theta_max_deg: f64,
    #[serde(default = "d_cone_res")]
    pub resolution: usize,
    /// Aperture the run is compared against, if any.
    #[serde(default)]
    pub expected_deg: Option<f64>,
    #[serde(default = "d_cone_tol")]
    pub tol_deg: f64,
}

fn d_cone_max() -> f64 {
    80.0
}
fn d_cone_res() -> usize {
    161
}
fn d_cone_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub base: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "d_step")]
    pub step: f64,
    #[serde(default = "d_theta_min")]
    pub theta_min_deg: f64,
    #[serde(default = "d_theta_max")]
    pub theta_max_deg: f64,
    #[serde(default = "d_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    /// Hausdorff bound between the time and arclength loci.
    #[serde(default = "d_invariance")]
    pub invariance_tol: f64,
    #[serde(default)]
    pub cone: Option<ConeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGridSpec {
    #[serde(default = "d_nx")]
    pub nx: usize,
    #[serde(default = "d_ny")]
    pub ny: usize,
    #[serde(default = "d_ndir")]
    pub n_dir: usize,
}

fn d_nx() -> usize {
    5
}
fn d_ny() -> usize {
    4
}
fn d_ndir() -> usize {
    12
}

impl Default for SampleGridSpec {
    fn default() -> Self {
        Self {
            nx: d_nx(),
            ny: d_ny(),
            n_dir: d_ndir(),
        }
    }
}

fn d_rescale_theta() -> f64 {
    30.0
}
fn d_f1_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleSpec {
    pub eps: Vec<f64>,
    #[serde(default = "d_rescale_theta")]
    pub theta_deg: f64,
    /// Linear coefficients `a` of `f_1 = a.x + b y` the chart should reproduce.
    #[serde(default)]
    pub expected_f1_x: Option<Vec<f64>>,
    /// Relative tolerance on `expected_f1_x`.
    #[serde(default = "d_f1_tol")]
    pub f1_rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub approach: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeifertSpec {
    pub q0: Vec<f64>,
    pub extent: f64,
    pub height: f64,
    /// Boundary nodes per horizontal axis; dimension-dependent default.
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(default = "d_step")]
    pub step: f64,
    /// Heights for the distance exponent fit.
    pub heights: Vec<f64>,
    /// Half-width of the inner cylinder `B`.
    pub half_width: f64,
    pub eps_b: f64,
    /// Roof of the outer cylinder `A`, also the roof for convexity and residence samples.
    pub eps_a: f64,
    #[serde(default = "d_delta")]
    pub delta_deg: f64,
    pub h_values: Vec<f64>,
    #[serde(default)]
    pub samples: SampleGridSpec,
    #[serde(default)]
    pub rescale: Option<RescaleSpec>,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub model_envelope: Option<ModelEnvelopeSpec>,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub seifert: Option<SeifertSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Simulate(SimulateSpec),
    ModelEnvelope(ModelEnvelopeSpec),
    Family(FamilySpec),
    Seifert(SeifertSpec),
    Suite(SuiteSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub system: SystemSpec,
    pub experiment: Experiment,
}

fn parse_at<T: DeserializeOwned>(prefix: &str, value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        HillError::config(path, e.into_inner().to_string())
    })
}

impl ScenarioConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| HillError::config("$", e.to_string()))?;
        let Value::Object(mut top) = value else {
            return Err(HillError::config("$", "scenario must be a JSON object"));
        };
        if let Some(k) = top.keys().find(|k| *k != "system" && *k != "experiment") {
            return Err(HillError::config(k.clone(), "unknown field"));
        }
        let system = top
            .remove("system")
            .ok_or_else(|| HillError::config("system", "missing field"))?;
        let system: SystemSpec = parse_at("system", system)?;
        let Some(Value::Object(mut exp)) = top.remove("experiment") else {
            return Err(HillError::config("experiment", "missing or not an object"));
        };
        let kind = match exp.remove("kind") {
            Some(Value::String(s)) => s,
            _ => return Err(HillError::config("experiment.kind", "missing or not a string")),
        };
        let body = Value::Object(exp);
        let p = "experiment";
        let experiment = match kind.as_str() {
            "simulate" => Experiment::Simulate(parse_at(p, body)?),
            "model-envelope" => Experiment::ModelEnvelope(parse_at(p, body)?),
            "family" => Experiment::Family(parse_at(p, body)?),
            "seifert" => Experiment::Seifert(parse_at(p, body)?),
            "suite" => Experiment::Suite(parse_at(p, body)?),
            other => {
                return Err(HillError::config(
                    "experiment.kind",
                    format!("unknown kind `{other}` (simulate, model-envelope, family, seifert, suite)"),
                ))
            }
        };
        let cfg = Self { system, experiment };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_system(&self) -> Result<MechanicalSystem> {
        self.system.build()
    }

    pub fn simulate(&self) -> Option<&SimulateSpec> {
        match &self.experiment {
            Experiment::Simulate(s) => Some(s),
            Experiment::Suite(s) => s.simulate.as_ref(),
            _ => None,
        }
    }

    pub fn model_envelope(&self) -> Option<&ModelEnvelopeSpec> {
        match &self.experiment {
            Experiment::ModelEnvelope(s) => Some(s),
            Experiment::Suite(s) => s.model_envelope.as_ref(),
            _ => None,
        }
    }

    pub fn family(&self) -> Option<&FamilySpec> {
        match &self.experiment {
            Experiment::Family(s) => Some(s),
            Experiment::Suite(s) => s.family.as_ref(),
            _ => None,
        }
    }

    pub fn seifert(&self) -> Option<&SeifertSpec> {
        match &self.experiment {
            Experiment::Seifert(s) => Some(s),
            Experiment::Suite(s) => s.seifert.as_ref(),
            _ => None,
        }
    }

    fn prefix(&self, block: &str) -> String {
        match self.experiment {
            Experiment::Suite(_) => format!("experiment.{block}"),
            _ => "experiment".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        let sys = self.build_system()?;
        let n = sys.dimension();
        let dim = |path: String, v: &[f64]| {
            if v.len() != n {
                Err(HillError::config(path, format!("expected {n} components, got {}", v.len())))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(HillError::config(path, "components must be finite"))
            } else {
                Ok(())
            }
        };
        let pos = |path: String, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(HillError::config(path, "must be positive"))
            }
        };
        if let Some(s) = self.simulate() {
            let p = self.prefix("simulate");
            dim(format!("{p}.q"), &s.q)?;
            dim(format!("{p}.v"), &s.v)?;
            if !(s.t_span[1] > s.t_span[0]) {
                return Err(HillError::config(format!("{p}.t_span"), "end must exceed start"));
            }
            for (k, x) in [
                ("step", s.step),
                ("energy_tol", s.energy_tol),
                ("tol_boundary", s.tol_boundary),
                ("brake_tol", s.brake_tol),
            ] {
                pos(format!("{p}.{k}"), x)?;
            }
            s.integrator_options()
                .validate()
                .map_err(|e| HillError::config(format!("{p}.integrator"), e.to_string()))?;
        }
        if let Some(s) = self.model_envelope() {
            let p = self.prefix("model_envelope");
            dim(format!("{p}.base"), &s.base)?;
            model_gravity(&sys).map_err(|e| HillError::config("system.potential", e.to_string()))?;
            if !(s.base[n - 1] > 0.0) {
                return Err(HillError::config(format!("{p}.base"), "base must lie above the floor"));
            }
            if !(s.theta_max_deg > 0.0 && s.theta_max_deg < 90.0) {
                return Err(HillError::config(format!("{p}.theta_max_deg"), "must lie in (0, 90)"));
            }
            if s.curves < 2 || s.samples_per_curve < 2 || s.envelope_samples < 2 {
                return Err(HillError::config(p, "curve and sample counts must be at least 2"));
            }
        }
        if let Some(s) = self.family() {
            let p = self.prefix("family");
            dim(format!("{p}.base"), &s.base)?;
            pos(format!("{p}.t_max"), s.t_max)?;
            pos(format!("{p}.step"), s.step)?;
            pos(format!("{p}.invariance_tol"), s.invariance_tol)?;
            if s.resolution < tol::MIN_DIRECTION_GRID {
                return Err(HillError::config(
                    format!("{p}.resolution"),
                    format!("direction grid needs at least {} entries", tol::MIN_DIRECTION_GRID),
                ));
            }
            if !(s.theta_min_deg < s.theta_max_deg) {
                return Err(HillError::config(format!("{p}.theta_max_deg"), "must exceed theta_min_deg"));
            }
            let t = &s.tolerances;
            for (k, x) in [
                ("det", t.det),
                ("time", t.time),
                ("rank", t.rank),
                ("fold", t.fold),
                ("angle_deg", t.angle_deg),
            ] {
                pos(format!("{p}.tolerances.{k}"), x)?;
            }
            if let Some(c) = &s.cone {
                pos(format!("{p}.cone.tol_deg"), c.tol_deg)?;
                if c.resolution < tol::MIN_DIRECTION_GRID {
                    return Err(HillError::config(format!("{p}.cone.resolution"), "too coarse"));
                }
                if !(c.theta_max_deg > 0.0 && c.theta_max_deg < 180.0) {
                    return Err(HillError::config(format!("{p}.cone.theta_max_deg"), "must lie in (0, 180)"));
                }
            }
        }
        if let Some(s) = self.seifert() {
            let p = self.prefix("seifert");
            dim(format!("{p}.q0"), &s.q0)?;
            for (k, x) in [
                ("extent", s.extent),
                ("height", s.height),
                ("step", s.step),
                ("half_width", s.half_width),
                ("eps_b", s.eps_b),
                ("eps_a", s.eps_a),
                ("delta_deg", s.delta_deg),
            ] {
                pos(format!("{p}.{k}"), x)?;
            }
            if s.heights.iter().any(|&h| !(h > 0.0 && h <= s.height)) {
                return Err(HillError::config(format!("{p}.heights"), "heights must lie in (0, height]"));
            }
            if s.h_values.is_empty() || s.h_values.iter().any(|&h| !(h > 0.0 && h <= s.eps_a)) {
                return Err(HillError::config(format!("{p}.h_values"), "values must lie in (0, eps_a]"));
            }
            if s.nodes.is_some_and(|k| k < 4) {
                return Err(HillError::config(format!("{p}.nodes"), "need at least 4 nodes"));
            }
            if let Some(r) = &s.rescale {
                if r.eps.len() < 2 || r.eps.iter().any(|&e| !(e > 0.0)) {
                    return Err(HillError::config(format!("{p}.rescale.eps"), "need at least two positive scales"));
                }
                if r.expected_f1_x.as_ref().is_some_and(|a| a.len() != n - 1) {
                    return Err(HillError::config(
                        format!("{p}.rescale.expected_f1_x"),
                        format!("expected {} coefficients", n - 1),
                    ));
                }
            }
            if let Some(sc) = &s.scan {
                pos(format!("{p}.scan.approach"), sc.approach)?;
                if !(sc.lambda > 1.0) {
                    return Err(HillError::config(format!("{p}.scan.lambda"), "must exceed 1"));
                }
            }
        }
        Ok(())
    }
}

/// `g` of a constant-force potential `V = -(g/2) q_n` (plus a constant).
pub fn model_gravity(sys: &MechanicalSystem) -> Result<f64> {
    let n = sys.dimension();
    let mut g = 0.0;
    for t in sys.potential().terms() {
        let degree: u32 = t.exponents.iter().sum();
        if degree == 0 {
            continue;
        }
        if degree == 1 && t.exponents[n - 1] == 1 {
            g -= t.coeff;
        } else if t.coeff != 0.0 {
            return Err(HillError::config(
                "system.potential",
                "closed-form model needs V = -g q_n + const",
            ));
        }
    }
    if !(g > 0.0) {
        return Err(HillError::config("system.potential", "model gravity must point to decreasing q_n"));
    }
    Ok(g)
}
