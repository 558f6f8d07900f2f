use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::props::climb_time;
use super::trace::{trace_in_chart, Exit, TraceLimits};
use super::SeifertChart;
use crate::conjugate::{detect_conjugate, ConjugateOptions, FamilyMap};
use crate::dynamics::IntegratorOptions;
use crate::error::{HillError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescalePoint {
    pub eps: f64,
    /// `max |Y - Y_model(X)|` over the forward arc in rescaled coordinates.
    pub max_deviation: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaleReport {
    pub theta_deg: f64,
    pub points: Vec<RescalePoint>,
    /// `max ratio / min ratio`.
    pub ratio_spread: f64,
    /// Every deviation is at round-off level (the model itself).
    pub exact: bool,
    pub pass: bool,
}

/// Follow the geodesic leaving chart point `(0, eps)` at `theta_deg` from the
/// downward vertical, rescale by `(X, Y) = (x, y) / eps`, and compare with the
/// model arc `Y = 1 - X cot(theta) + X^2 / (4 sin^2 theta)`. Deviations should
/// shrink like `eps`.
pub fn rescale_compare(chart: &SeifertChart, eps: &[f64], theta_deg: f64, step: f64) -> Result<RescaleReport> {
    if eps.len() < 2 {
        return Err(HillError::config("eps", "need at least two scales"));
    }
    if !(theta_deg > 0.0 && theta_deg < 90.0) {
        return Err(HillError::config("theta_deg", "must lie in (0, 90)"));
    }
    let th = theta_deg.to_radians();
    let reach = 2.0 * (2.0 * th).sin() + 0.1;
    if eps.iter().any(|&e| !(e > 0.0 && e <= chart.height() && reach * e <= chart.extent())) {
        return Err(HillError::config("eps", "scales must fit inside the chart"));
    }
    let m = chart.dimension() - 1;
    let points = eps
        .par_iter()
        .map(|&e| -> Result<RescalePoint> {
            let x0 = vec![0.0; m];
            let mut dir = vec![0.0; m + 1];
            dir[0] = th.sin();
            dir[m] = -th.cos();
            let seed = chart.ambient_velocity(&x0, e, &dir)?;
            let limits = TraceLimits {
                roof: e * (1.0 + 1e-9),
                side: chart.extent(),
                step: step.min(climb_time(chart, e) / 400.0),
                t_max: 40.0 * climb_time(chart, e),
            };
            let tr = trace_in_chart(chart, &seed, (x0, e), &limits)?;
            if !matches!(tr.exit_forward, Exit::Roof { .. }) {
                return Err(HillError::chart(format!("arc at scale {e} does not return to its start height")));
            }
            let mut dev: f64 = 0.0;
            for ((t, x), y) in tr.times.iter().zip(&tr.xs).zip(&tr.ys) {
                if *t < 0.0 || *y > e {
                    continue;
                }
                let (xx, yy) = (x[0] / e, y / e);
                let model = 1.0 - xx / th.tan() + xx * xx / (4.0 * th.sin().powi(2));
                dev = dev.max((yy - model).abs());
            }
            Ok(RescalePoint {
                eps: e,
                max_deviation: dev,
                ratio: dev / e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let exact = points.iter().all(|p| p.max_deviation <= 1e-8);
    let hi = points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let lo = points.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let ratio_spread = hi / lo;
    Ok(RescaleReport {
        theta_deg,
        points,
        ratio_spread,
        exact,
        pass: exact || ratio_spread <= 3.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPair {
    /// Chart position of the seed the geodesic was grown from.
    pub seed: (Vec<f64>, f64),
    /// Chart height where the geodesic enters the scan region.
    pub entry_y: f64,
    pub entry_angle_deg: f64,
    /// Chart height of the first conjugate point; `None` if none was found or
    /// it left the chart.
    pub conjugate_y: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub approach: f64,
    pub lambda: f64,
    pub pairs: Vec<ScanPair>,
    pub failures: usize,
    pub max_height: f64,
    pub pass: bool,
}

/// Geodesics passing within `approach` of `q0` in chart coordinates, entered
/// at height `lambda * approach`: the first conjugate point of the entry
/// point must be lower than it, and both below `2.5 * approach`.
pub fn theorem1_scan(chart: &SeifertChart, approach: f64, lambda: f64, step: f64) -> Result<ScanReport> {
    let roof = lambda * approach;
    if !(approach > 0.0 && lambda > 1.0 && roof <= chart.height() && 2.0 * approach <= chart.extent()) {
        return Err(HillError::config("approach", "scan region must fit inside the chart"));
    }
    let m = chart.dimension() - 1;
    let mut seeds = Vec::new();
    for i in 0..9 {
        let x = approach * (-0.7 + 0.175 * i as f64);
        for j in 1..=5 {
            let y = approach * 0.1 * j as f64;
            for s in [1.0, -1.0] {
                let mut pos = vec![0.0; m];
                pos[0] = x;
                let mut dir = vec![0.0; m + 1];
                dir[0] = s;
                seeds.push((pos, y, dir));
            }
        }
        let mut pos = vec![0.0; m];
        pos[0] = x;
        let mut down = vec![0.0; m + 1];
        down[m] = -1.0;
        seeds.push((pos, 0.25 * approach, down));
    }
    let t_climb = climb_time(chart, roof);
    let step = step.min(t_climb / 200.0);
    let limits = TraceLimits {
        roof,
        side: chart.extent(),
        step,
        t_max: 40.0 * t_climb,
    };
    let copts = ConjugateOptions::default();
    let pairs = seeds
        .into_par_iter()
        .map(|(x, y, dir)| -> Result<ScanPair> {
            let state = chart.ambient_velocity(&x, y, &dir)?;
            let tr = trace_in_chart(chart, &state, (x.clone(), y), &limits)?;
            let Exit::Roof { t, angle_deg } = tr.exit_backward else {
                return Err(HillError::chart(format!("seed {x:?}, {y} does not enter through the roof")));
            };
            let entry = &tr.states[0];
            let entry_y = tr.ys[0];
            let fam = FamilyMap::new(
                chart.system().clone(),
                entry.q.clone(),
                3.0 * t.abs() + 20.0 * step,
                IntegratorOptions::with_step(step),
            )?;
            let u = chart_of_direction(&fam, &entry.v);
            let conjugate_y = detect_conjugate(&fam, &u, &copts)?
                .and_then(|ev| chart.inverse(&ev.point).ok())
                .map(|(_, y)| y);
            let ok = matches!(conjugate_y, Some(y2) if y2 < entry_y && entry_y.max(y2) < 2.5 * approach);
            Ok(ScanPair {
                seed: (x, y),
                entry_y,
                entry_angle_deg: angle_deg,
                conjugate_y,
                ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = pairs.iter().filter(|p| !p.ok).count();
    let max_height = pairs
        .iter()
        .flat_map(|p| [Some(p.entry_y), p.conjugate_y])
        .flatten()
        .fold(0.0, f64::max);
    Ok(ScanReport {
        approach,
        lambda,
        pass: failures == 0 && pairs.len() >= 50,
        pairs,
        failures,
        max_height,
    })
}

/// Family coordinate `u` whose direction is parallel to `v`.
fn chart_of_direction(fam: &FamilyMap, v: &DVector<f64>) -> Vec<f64> {
    let w = v.normalize();
    let d = fam.down_axis();
    let c = w.dot(d).clamp(-1.0, 1.0);
    let perp = &w - d * c;
    let pn = perp.norm();
    if pn < 1e-14 {
        return vec![0.0; fam.chart_dim()];
    }
    let alpha = c.acos();
    fam.frame().iter().map(|e| alpha * e.dot(&perp) / pn).collect()
}
