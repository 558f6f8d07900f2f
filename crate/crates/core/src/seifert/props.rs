use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::trace::{trace_in_chart, ChartTrace, TraceLimits};
use super::SeifertChart;
use crate::dynamics::{integrate, IntegratorOptions, Stepper};
use crate::error::{HillError, Result};
use crate::system::{jm_length, State};
use crate::tol;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: u8,
    pub pass: bool,
    pub measured: BTreeMap<String, Value>,
    pub thresholds: BTreeMap<String, f64>,
}

impl PropertyReport {
    fn new(property: u8) -> Self {
        Self {
            property,
            pass: false,
            measured: BTreeMap::new(),
            thresholds: BTreeMap::new(),
        }
    }

    fn measure(&mut self, key: &str, value: impl Into<Value>) {
        self.measured.insert(key.to_string(), value.into());
    }

    fn threshold(&mut self, key: &str, value: f64) {
        self.thresholds.insert(key.to_string(), value);
    }

    pub fn measured_f64(&self, key: &str) -> Option<f64> {
        self.measured.get(key).and_then(Value::as_f64)
    }
}

/// Least-squares line through `(xs, ys)`: `(slope, intercept)`.
pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn loglog(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept) = fit_line(&lx, &ly);
    (slope, intercept.exp())
}

/// JM distance to the boundary from the points `forward(0, h)`, recomputed
/// along freshly integrated brake orbits, and the log-log exponent in `h`.
pub fn property1_check(chart: &SeifertChart, heights: &[f64]) -> Result<PropertyReport> {
    if heights.len() < 3 {
        return Err(HillError::Fit("need >= 3 heights for fit".into()));
    }
    if heights.iter().any(|&h| !(h > 0.0 && h <= chart.height())) {
        return Err(HillError::config("heights", "heights must lie in (0, chart height]"));
    }
    let sys = chart.system();
    let origin = vec![0.0; chart.dimension() - 1];
    let b = chart.forward(&origin, 0.0)?;
    let rest = State::new(b.clone(), DVector::zeros(b.len()));
    let gv = sys.potential().gradient(&b).norm();
    let kappa = gv.powf(4.0 / 3.0) / 2f64.powf(2.0 / 3.0);
    let results = heights
        .par_iter()
        .map(|&h| -> Result<(f64, f64)> {
            let target = chart.forward(&origin, h)?;
            let t_est = (h / kappa).sqrt();
            let step = t_est / 4000.0;
            let opts = IntegratorOptions::with_step(step);
            let traj = integrate(sys, &rest, (0.0, 2.0 * t_est), &opts)?;
            // first passage of the plane through the target normal to the orbit
            let stepper = Stepper::new(sys);
            let g = |q: &DVector<f64>, v: &DVector<f64>| (q - &target).dot(v);
            let k = traj
                .samples
                .iter()
                .position(|s| s.time > 0.0 && g(&s.state.q, &s.state.v) >= 0.0)
                .ok_or_else(|| HillError::chart(format!("brake orbit never reaches height {h}")))?;
            let a = stepper.start(traj.samples[k - 1].time, &traj.samples[k - 1].state, false);
            let (mut lo, mut hi) = (0.0, traj.samples[k].time - a.t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let p = stepper.advance(&a, mid);
                if g(&p.q, &p.v) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t_h = a.t + 0.5 * (lo + hi);
            let arc = integrate(sys, &rest, (0.0, t_h), &opts)?;
            let miss = (&arc.last().state.q - &target).norm();
            Ok((jm_length(sys, &arc)?, miss))
        })
        .collect::<Result<Vec<_>>>()?;
    let d: Vec<f64> = results.iter().map(|r| r.0).collect();
    let miss = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let (slope, prefactor) = loglog(heights, &d);
    let mut rep = PropertyReport::new(1);
    rep.measure("slope", slope);
    rep.measure("prefactor", prefactor);
    rep.measure("jm_distances", d);
    rep.measure("heights", heights.to_vec());
    rep.measure("max_target_miss", miss);
    rep.threshold("slope_expected", 1.5);
    rep.threshold("slope_tol", 0.01);
    rep.pass = (slope - 1.5).abs() <= 0.01;
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricGrid {
    /// Points per horizontal axis over `[-extent/2, extent/2]`.
    pub nx: usize,
    /// Heights over `(0, height/2]`.
    pub ny: usize,
}

impl Default for MetricGrid {
    fn default() -> Self {
        Self { nx: 9, ny: 8 }
    }
}

/// Pull the JM metric back through the chart and compare it with the normal
/// form `y dy^2 + y f(x, y) (dx^2 + h)`; `f` is fitted by a quadratic whose
/// linear part is `f_1 = a.x + b y`.
pub fn chart_metric_check(chart: &SeifertChart, grid: &MetricGrid) -> Result<PropertyReport> {
    let n = chart.dimension();
    let m = n - 1;
    let nx = grid.nx.max(2);
    let ny = grid.ny.max(3);
    let w = 0.5 * chart.extent();
    let hmax = 0.5 * chart.height();
    let xs: Vec<f64> = (0..nx).map(|i| -w + 2.0 * w * i as f64 / (nx - 1) as f64).collect();
    let ys: Vec<f64> = (1..=ny).map(|j| hmax * j as f64 / ny as f64).collect();
    let mut points = Vec::new();
    for flat in 0..nx.pow(m as u32) {
        let x: Vec<f64> = (0..m).map(|k| xs[(flat / nx.pow(k as u32)) % nx]).collect();
        for &y in &ys {
            points.push((x.clone(), y));
        }
    }
    let sys = chart.system();
    let metrics = points
        .par_iter()
        .map(|(x, y)| -> Result<DMatrix<f64>> {
            let (q, jac) = chart.forward_jacobian(x, *y)?;
            Ok(jac.transpose() * &jac * sys.f(&q))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut gyy_dev: f64 = 0.0;
    let mut cross: f64 = 0.0;
    let mut h_max: f64 = 0.0;
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for ((x, y), g) in points.iter().zip(&metrics) {
        gyy_dev = gyy_dev.max((g[(m, m)] / y - 1.0).abs());
        let avg = (0..m).map(|i| g[(i, i)]).sum::<f64>() / m as f64;
        for i in 0..m {
            cross = cross.max(g[(i, m)].abs() / y);
            for j in 0..m {
                let expect = if i == j { avg } else { 0.0 };
                h_max = h_max.max((g[(i, j)] - expect).abs() / y);
            }
        }
        let mut vars = x.clone();
        vars.push(*y);
        let mut row = vec![1.0];
        row.extend(vars.iter().copied());
        for a in 0..vars.len() {
            for b in a..vars.len() {
                row.push(vars[a] * vars[b]);
            }
        }
        feats.push(row);
        targets.push(avg / y);
    }
    let a = DMatrix::from_fn(feats.len(), feats[0].len(), |i, j| feats[i][j]);
    let rhs = DVector::from_vec(targets);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| HillError::Fit(e.to_string()))?;
    let resid = (&a * &coef - &rhs).amax();

    // dy^2 coefficient against y along the central vertical line
    let centre = vec![0.0; m];
    let mut gyy = Vec::new();
    for &y in &ys {
        let (q, jac) = chart.forward_jacobian(&centre, y)?;
        let col = jac.column(m);
        gyy.push(col.norm_squared() * sys.f(&q));
    }
    let (gyy_slope, gyy_c) = loglog(&ys, &gyy);

    let mut rep = PropertyReport::new(2);
    rep.measure("f0", coef[0]);
    rep.measure("f1_x", (1..=m).map(|i| coef[i]).collect::<Vec<_>>());
    rep.measure("f1_y", coef[m + 1]);
    rep.measure("fit_residual", resid);
    rep.measure("gyy_over_y_max_dev", gyy_dev);
    rep.measure("gxy_over_y_max", cross);
    rep.measure("h_max", h_max);
    rep.measure("gyy_loglog_slope", gyy_slope);
    rep.measure("gyy_prefactor", gyy_c);
    rep.threshold("f0_tol", 1e-2);
    rep.threshold("gyy_tol", 1e-2);
    rep.threshold("gxy_tol", 1e-3);
    rep.pass = (coef[0] - 1.0).abs() <= 1e-2 && gyy_dev <= 1e-2 && cross <= 1e-3 && gyy_c > 0.0;
    Ok(rep)
}

/// Geodesics through a grid of seeds in the sub-cylinder
/// `B = {|x_i| <= half_width, 0 < y <= eps_b}`, one per seed and chart direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub half_width: f64,
    pub eps_b: f64,
    pub nx: usize,
    pub ny: usize,
    /// Chart directions per seed, evenly spread over a half turn (even counts
    /// include the vertical).
    pub n_dir: usize,
    pub step: f64,
}

impl SampleSpec {
    pub fn new(half_width: f64, eps_b: f64) -> Self {
        Self {
            half_width,
            eps_b,
            nx: 5,
            ny: 4,
            n_dir: 12,
            step: tol::STEP,
        }
    }
}

pub(crate) struct Sampled {
    pub seed: (Vec<f64>, f64, Vec<f64>),
    pub trace: ChartTrace,
}

/// Time scale for a brake orbit to climb to `height`.
pub(crate) fn climb_time(chart: &SeifertChart, height: f64) -> f64 {
    let gv = chart.system().potential().gradient(chart.center()).norm();
    let kappa = gv.powf(4.0 / 3.0) / 2f64.powf(2.0 / 3.0);
    (height / kappa).sqrt()
}

pub(crate) fn sample_traces(
    chart: &SeifertChart,
    spec: &SampleSpec,
    roof: f64,
    side: f64,
) -> Result<Vec<Sampled>> {
    let m = chart.dimension() - 1;
    let nx = spec.nx.max(1);
    let xs: Vec<f64> = if nx == 1 {
        vec![0.0]
    } else {
        (0..nx)
            .map(|i| -spec.half_width + 2.0 * spec.half_width * i as f64 / (nx - 1) as f64)
            .collect()
    };
    let ys: Vec<f64> = (1..=spec.ny.max(1))
        .map(|j| spec.eps_b * j as f64 / spec.ny.max(1) as f64)
        .collect();
    let mut seeds = Vec::new();
    for &x in &xs {
        for &y in &ys {
            for k in 0..spec.n_dir.max(1) {
                let phi = std::f64::consts::PI * k as f64 / spec.n_dir.max(1) as f64;
                let mut pos = vec![0.0; m];
                pos[0] = x;
                let mut dir = vec![0.0; m + 1];
                dir[0] = phi.cos();
                dir[m] = phi.sin();
                seeds.push((pos, y, dir));
            }
        }
    }
    // the brake orbit through the centre line bounds residence times
    let mut down = vec![0.0; m + 1];
    down[m] = -1.0;
    seeds.push((vec![0.0; m], 0.5 * spec.eps_b, down));
    let limits = TraceLimits {
        roof,
        side,
        step: spec.step,
        t_max: 40.0 * climb_time(chart, roof),
    };
    seeds
        .into_par_iter()
        .map(|(x, y, dir)| {
            let state = chart.ambient_velocity(&x, y, &dir)?;
            let trace = trace_in_chart(chart, &state, (x.clone(), y), &limits)?;
            Ok(Sampled {
                seed: (x, y, dir),
                trace,
            })
        })
        .collect()
}

/// Geodesics meeting `B` leave `A = {|x| <= W_B + 2 eps_a, y <= eps_a}` through
/// its roof, steeper than `delta_deg` from the vertical.
pub fn property3_check(
    chart: &SeifertChart,
    eps_a: f64,
    delta_deg: f64,
    spec: &SampleSpec,
) -> Result<PropertyReport> {
    if !(spec.eps_b > 0.0 && spec.eps_b < eps_a && eps_a <= chart.height()) {
        return Err(HillError::config("eps_b", "need 0 < eps_b < eps_a <= chart height"));
    }
    if !(delta_deg > 0.0 && delta_deg < 45.0) {
        return Err(HillError::config("delta_deg", "must lie in (0, 45)"));
    }
    let side = spec.half_width + 2.0 * eps_a;
    if side > chart.extent() {
        return Err(HillError::config("extent", "chart too narrow for the cylinder A"));
    }
    let samples = sample_traces(chart, spec, eps_a, side)?;
    let mut side_exits = 0;
    let mut timeouts = 0;
    let mut max_angle: f64 = 0.0;
    let mut max_ymin: f64 = 0.0;
    let mut witness: Option<Value> = None;
    for s in &samples {
        let tr = &s.trace;
        max_ymin = max_ymin.max(tr.y_min());
        let mut bad = false;
        for e in [tr.exit_backward, tr.exit_forward] {
            match e {
                super::Exit::Side { .. } => {
                    side_exits += 1;
                    bad = true;
                }
                super::Exit::Timeout => {
                    timeouts += 1;
                    bad = true;
                }
                super::Exit::Roof { angle_deg, .. } => {
                    let a = if angle_deg.is_nan() { 90.0 } else { angle_deg };
                    if a >= delta_deg {
                        bad = true;
                    }
                    max_angle = max_angle.max(a);
                }
            }
        }
        if bad && witness.is_none() {
            witness = Some(json!({
                "x": s.seed.0, "y": s.seed.1, "direction": s.seed.2,
                "y_min": tr.y_min(), "angles_deg": tr.roof_angles(),
            }));
        }
    }
    let mut rep = PropertyReport::new(3);
    rep.measure("samples", samples.len());
    rep.measure("side_exits", side_exits);
    rep.measure("timeouts", timeouts);
    rep.measure("max_angle_deg", max_angle);
    rep.measure("lambda_empirical", eps_a / max_ymin);
    rep.measure("witness", witness.unwrap_or(Value::Null));
    rep.threshold("delta_deg", delta_deg);
    rep.threshold("eps_a", eps_a);
    rep.threshold("eps_b", spec.eps_b);
    rep.threshold("half_width_a", side);
    rep.threshold("half_width_b", spec.half_width);
    rep.pass = side_exits == 0 && timeouts == 0 && max_angle < delta_deg;
    Ok(rep)
}

/// Chart height along each sampled geodesic is strictly convex in Newtonian
/// time with a single minimum; second differences use a stride near 0.01.
pub fn property4_check(chart: &SeifertChart, roof: f64, spec: &SampleSpec) -> Result<PropertyReport> {
    let side = chart.extent();
    let samples = sample_traces(chart, spec, roof, side)?;
    let mut convex_fail = 0;
    let mut minima_fail = 0;
    let mut margin = f64::INFINITY;
    let mut skipped = 0;
    for s in &samples {
        let ys = &s.trace.ys;
        let ts = &s.trace.times;
        let stride = ((0.01 / spec.step).round() as usize).clamp(1, (ys.len() / 5).max(1));
        let sub: Vec<usize> = (0..ys.len()).step_by(stride).collect();
        if sub.len() < 3 {
            skipped += 1;
            continue;
        }
        let dt = ts[sub[1]] - ts[sub[0]];
        let mut ok = true;
        for w in sub.windows(3) {
            let d2 = ys[w[0]] - 2.0 * ys[w[1]] + ys[w[2]];
            margin = margin.min(d2 / (dt * dt));
            if !(d2 > 0.0) {
                ok = false;
            }
        }
        if !ok {
            convex_fail += 1;
        }
        let minima = sub
            .windows(3)
            .filter(|w| ys[w[1]] < ys[w[0]] && ys[w[1]] <= ys[w[2]])
            .count();
        let at_end = ys[sub[0]] <= ys[sub[1]] || ys[sub[sub.len() - 1]] <= ys[sub[sub.len() - 2]];
        let total = minima + usize::from(at_end && minima == 0);
        if total != 1 {
            minima_fail += 1;
        }
    }
    let mut rep = PropertyReport::new(4);
    rep.measure("samples", samples.len());
    rep.measure("skipped_short", skipped);
    rep.measure("non_convex", convex_fail);
    rep.measure("minimum_count_failures", minima_fail);
    rep.measure("min_convexity_margin", margin);
    rep.threshold("roof", roof);
    rep.threshold("stride_time", 0.01);
    rep.pass = convex_fail == 0 && minima_fail == 0 && margin > 0.0;
    Ok(rep)
}

/// Residence time below chart height `h` is at most `C sqrt(h)` with
/// `C = 1.05 * 2 sqrt(2) / |grad V(q0)|`.
pub fn property5_check(
    chart: &SeifertChart,
    h_values: &[f64],
    roof: f64,
    spec: &SampleSpec,
) -> Result<PropertyReport> {
    if h_values.is_empty() || h_values.iter().any(|&h| !(h > 0.0 && h <= roof)) {
        return Err(HillError::config("h_values", "need heights in (0, roof]"));
    }
    let gv = chart.system().potential().gradient(chart.center()).norm();
    let c = tol::RESIDENCE_SAFETY * 2.0 * 2f64.sqrt() / gv;
    let samples = sample_traces(chart, spec, roof, chart.extent())?;
    let complete: Vec<&ChartTrace> = samples
        .iter()
        .map(|s| &s.trace)
        .filter(|t| t.through_roof())
        .collect();
    let worst: Vec<f64> = h_values
        .iter()
        .map(|&h| complete.iter().map(|t| t.residence_below(h)).fold(0.0, f64::max))
        .collect();
    let ratio = h_values
        .iter()
        .zip(&worst)
        .map(|(h, r)| r / h.sqrt())
        .fold(0.0, f64::max);
    let mut rep = PropertyReport::new(5);
    rep.measure("samples", samples.len());
    rep.measure("complete_samples", complete.len());
    rep.measure("max_residence", worst.clone());
    rep.measure("h_values", h_values.to_vec());
    rep.measure("max_residence_over_sqrt_h", ratio);
    rep.threshold("c", c);
    let mut pass = ratio <= c;
    if h_values.len() >= 3 {
        let (slope, _) = loglog(h_values, &worst);
        rep.measure("sqrt_h_slope", slope);
        rep.threshold("slope_expected", 0.5);
        rep.threshold("slope_tol", 0.02);
        pass &= (slope - 0.5).abs() <= 0.02;
    }
    rep.pass = pass;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seifert::ChartOptions;
    use crate::system::MechanicalSystem;

    fn model_chart() -> SeifertChart {
        SeifertChart::build(
            &MechanicalSystem::model(2, 0.5),
            &DVector::zeros(2),
            0.5,
            0.3,
            &ChartOptions::for_dimension(2),
        )
        .unwrap()
    }

    fn oscillator_chart() -> SeifertChart {
        SeifertChart::build(
            &MechanicalSystem::oscillator(2),
            &DVector::from_column_slice(&[1.0, 0.0]),
            0.2,
            0.1,
            &ChartOptions::for_dimension(2),
        )
        .unwrap()
    }

    #[test]
    fn exponent_law() {
        let r = property1_check(&model_chart(), &[0.01, 0.02, 0.04, 0.08]).unwrap();
        assert!(r.pass);
        assert!((r.measured_f64("slope").unwrap() - 1.5).abs() < 1e-6);
        assert!((r.measured_f64("prefactor").unwrap() - 2.0 / 3.0).abs() < 1e-6);
        let r = property1_check(&oscillator_chart(), &[0.01, 0.02, 0.04, 0.08]).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(matches!(
            property1_check(&model_chart(), &[0.01]),
            Err(HillError::Fit(_))
        ));
    }

    #[test]
    fn model_metric_is_the_normal_form() {
        let r = chart_metric_check(&model_chart(), &MetricGrid::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.measured_f64("f0").unwrap() - 1.0).abs() < 1e-8);
        assert!(r.measured_f64("f1_y").unwrap().abs() < 1e-7);
        assert!(r.measured_f64("gxy_over_y_max").unwrap() < 1e-8);
    }

    #[test]
    fn oscillator_metric() {
        let r = chart_metric_check(&oscillator_chart(), &MetricGrid::default()).unwrap();
        assert!(r.pass, "{r:?}");
        let a = r.measured["f1_x"][0].as_f64().unwrap();
        assert!(a.abs() < 1e-6, "reflection symmetry forces a = 0: {a}");
        assert!((r.measured_f64("gyy_loglog_slope").unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn perturbed_model_linear_coefficient() {
        use crate::potential::{PolynomialPotential, Term};
        // V = -y (1 + 0.1 x) / 2, so f = y (1 + 0.1 x) and f_1 = (2/3) 0.1 x + ...
        let p = PolynomialPotential::new(
            2,
            vec![
                Term { coeff: -0.5, exponents: vec![0, 1] },
                Term { coeff: -0.05, exponents: vec![1, 1] },
            ],
        )
        .unwrap();
        let sys = MechanicalSystem::new(p, 0.0);
        let chart = SeifertChart::build(&sys, &DVector::zeros(2), 0.2, 0.1, &ChartOptions::for_dimension(2)).unwrap();
        let r = chart_metric_check(&chart, &MetricGrid::default()).unwrap();
        let a = r.measured["f1_x"][0].as_f64().unwrap();
        assert!((a - 0.1 * 2.0 / 3.0).abs() < 0.1 * 0.1 * 2.0 / 3.0, "{a}");
    }

    #[test]
    fn model_roof_angles_follow_the_vertex_parabola() {
        let chart = model_chart();
        let spec = SampleSpec::new(0.05, 0.05);
        // angle at height lambda y_m is atan(1 / sqrt(lambda - 1)); worst case y_m = eps_b
        let r = property3_check(&chart, 2.1 * 0.05, 44.0, &spec).unwrap();
        assert!(r.pass, "{r:?}");
        let r = property3_check(&chart, 1.4 * 0.05, 44.0, &spec).unwrap();
        let worst = (1.0 / 0.4f64.sqrt()).atan().to_degrees();
        assert!((r.measured_f64("max_angle_deg").unwrap() - worst).abs() < 0.5);
        assert!(!r.pass);
        assert!(property3_check(&chart, 0.04, 44.0, &spec).is_err());
    }

    #[test]
    fn convexity_and_residence() {
        let chart = model_chart();
        let spec = SampleSpec::new(0.05, 0.05);
        let r = property4_check(&chart, 0.1, &spec).unwrap();
        assert!(r.pass, "{r:?}");
        // y'' = 1/2 exactly
        assert!((r.measured_f64("min_convexity_margin").unwrap() - 0.5).abs() < 1e-6);
        let r = property5_check(&chart, &[0.0125, 0.025, 0.05, 0.1], 0.1, &spec).unwrap();
        assert!(r.pass, "{r:?}");
        // worst case is the brake orbit: 4 sqrt(h)
        assert!((r.measured_f64("max_residence_over_sqrt_h").unwrap() - 4.0).abs() < 1e-2);
    }

    #[test]
    fn oscillator_properties() {
        let chart = oscillator_chart();
        let spec = SampleSpec::new(0.02, 0.01);
        let r = property4_check(&chart, 0.05, &spec).unwrap();
        assert!(r.pass, "{r:?}");
        let r = property5_check(&chart, &[0.005, 0.01, 0.02, 0.04], 0.05, &spec).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
