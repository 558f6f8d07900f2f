use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use hillscope_core::config::{model_gravity, FamilySpec, ScenarioConfig, SeifertSpec};
use hillscope_core::conjugate::{
    conjugate_locus as locate_locus, direction_grid, downward_cone as sweep_cone, fold_check,
    reparam_invariance_check, side_and_tangency_check, ConjugateOptions, FamilyMap, FoldReport, Locus,
};
use hillscope_core::dynamics::{detect_brake, integrate, reparameterize, IntegratorOptions, Parameterization, Termination};
use hillscope_core::export::{self, num};
use hillscope_core::model::{ballistic_state, critical_time, envelope_height, envelope_point, ModelPoint, ThrowParams};
use hillscope_core::seifert::{
    chart_metric_check, property1_check, property3_check, property4_check, property5_check, trace_in_chart,
    ChartOptions, MetricGrid, PropertyReport, SampleSpec, SeifertChart, TraceLimits,
};
use hillscope_core::svg::Scene;
use hillscope_core::{seifert, HillError, MechanicalSystem, State};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub scenario: String,
    pub config: Value,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(ctx: &Ctx, subcommand: &str, scenario: &Path, seed: u64, error: Option<String>, wall: f64) -> Self {
        Self {
            subcommand: subcommand.into(),
            scenario: scenario.display().to_string(),
            config: serde_json::to_value(&ctx.cfg).unwrap_or(Value::Null),
            seed,
            outputs: ctx.outputs.clone(),
            pass: error.is_none() && ctx.checks.iter().all(|c| c.pass),
            checks: ctx.checks.clone(),
            error,
            wall_time_s: wall,
        }
    }
}

pub struct Ctx {
    pub cfg: ScenarioConfig,
    pub system: MechanicalSystem,
    pub checks: Vec<Check>,
    out: PathBuf,
    svg: bool,
    outputs: Vec<String>,
    chart: Option<SeifertChart>,
    locus: Option<(Locus, Vec<Option<FoldReport>>)>,
}

impl Ctx {
    pub fn new(cfg: ScenarioConfig, out: PathBuf, svg: bool) -> anyhow::Result<Self> {
        let system = cfg.build_system()?;
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            cfg,
            system,
            checks: Vec::new(),
            out,
            svg,
            outputs: Vec::new(),
            chart: None,
            locus: None,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.into());
        }
        Ok(())
    }

    fn write_svg(&mut self, name: &str, scene: impl FnOnce() -> Scene) -> anyhow::Result<()> {
        if self.svg {
            let s = scene().render();
            self.write(name, &s)?;
        }
        Ok(())
    }

    fn check(&mut self, name: &str, pass: bool, detail: Value) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail,
        });
    }

    fn report(&mut self, name: &str, r: &PropertyReport) {
        self.check(name, r.pass, serde_json::to_value(r).unwrap_or(Value::Null));
    }

    pub fn write_manifest(&self, m: &Manifest) -> anyhow::Result<()> {
        let path = self.out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(m)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    fn chart(&mut self) -> anyhow::Result<SeifertChart> {
        if let Some(c) = &self.chart {
            return Ok(c.clone());
        }
        let s = need(self.cfg.seifert(), "seifert")?.clone();
        let chart = build_chart(&self.system, &s)?;
        self.chart = Some(chart.clone());
        Ok(chart)
    }
}

fn need<'a, T>(block: Option<&'a T>, name: &str) -> Result<&'a T, HillError> {
    block.ok_or_else(|| HillError::config("experiment", format!("scenario has no `{name}` block")))
}

fn pt(q: &DVector<f64>) -> [f64; 2] {
    [q[0], q[q.len() - 1]]
}

/// Dots where `f` changes sign between neighbouring cells of a grid over `bounds`.
fn hill_boundary_dots(scene: &mut Scene, system: &MechanicalSystem, bounds: [f64; 4], slice: &DVector<f64>) {
    if system.dimension() != 2 {
        return;
    }
    let k = 160;
    let at = |i: usize, j: usize| {
        let mut q = slice.clone();
        q[0] = bounds[0] + (bounds[1] - bounds[0]) * i as f64 / k as f64;
        q[1] = bounds[2] + (bounds[3] - bounds[2]) * j as f64 / k as f64;
        (system.conformal_factor(&q).unwrap_or(f64::NAN), [q[0], q[1]])
    };
    for i in 0..k {
        for j in 0..k {
            let (a, p) = at(i, j);
            let (b, _) = at(i + 1, j);
            let (c, _) = at(i, j + 1);
            if a * b <= 0.0 || a * c <= 0.0 {
                scene.circle(p, 0.8, "gray");
            }
        }
    }
}

pub fn simulate(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.simulate(), "simulate")?.clone();
    let sys = ctx.system.clone();
    let init = State::from_slices(&s.q, &s.v);
    let traj = integrate(&sys, &init, (s.t_span[0], s.t_span[1]), &s.integrator_options())?;
    ctx.write("trajectory.csv", &export::trajectory_csv(&sys, &traj))?;
    if s.parameterization == Parameterization::JmArclength {
        let re = reparameterize(&sys, &traj, Parameterization::JmArclength)?;
        let mut csv = String::from("s,t\n");
        for smp in &re.samples {
            csv.push_str(&format!("{},{}\n", num(smp.param), num(smp.time)));
        }
        ctx.write("arclength.csv", &csv)?;
    }
    let drift = traj.energy_drift(&sys);
    ctx.check(
        "simulate.energy",
        drift <= s.energy_tol,
        json!({"drift": drift, "energy_tol": s.energy_tol}),
    );
    let stayed = matches!(traj.termination, Termination::Completed);
    ctx.check("simulate.hill-region", stayed, serde_json::to_value(&traj.termination)?);
    if let Ok(g) = model_gravity(&sys) {
        // q(t) = q0 + v0 t + (g/2) t^2 e_n in the constant-force model
        let n = sys.dimension();
        let mut worst: f64 = 0.0;
        for smp in &traj.samples {
            let t = smp.time - s.t_span[0];
            for i in 0..n {
                let accel = if i == n - 1 { g } else { 0.0 };
                let exact = s.q[i] + s.v[i] * t + 0.5 * accel * t * t;
                worst = worst.max((smp.state.q[i] - exact).abs());
            }
        }
        ctx.check("simulate.model-oracle", worst < 1e-8, json!({"max_position_error": worst, "tol": 1e-8}));
    }
    let brakes = detect_brake(&sys, &traj, s.brake_tol)?;
    ctx.check("simulate.brake-events", true, serde_json::to_value(&brakes)?);
    let path: Vec<[f64; 2]> = traj.samples.iter().map(|s| pt(&s.state.q)).collect();
    let slice = init.q.clone();
    ctx.write_svg("trajectory.svg", || {
        let bounds = Scene::fit(path.iter().copied(), 0.15);
        let mut sc = Scene::new(bounds, 600.0, false);
        hill_boundary_dots(&mut sc, &sys, bounds, &slice);
        sc.polyline(&path, "black", 1.2);
        for b in &brakes {
            sc.circle([b.q_brake[0], b.q_brake[b.q_brake.len() - 1]], 3.0, "red");
        }
        sc
    })
}

pub fn model_envelope(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.model_envelope(), "model_envelope")?.clone();
    let sys = ctx.system.clone();
    let g = model_gravity(&sys)?;
    let n = sys.dimension();
    let base = ModelPoint::from_ambient(&s.base)?;
    let throw = |theta_deg: f64| {
        let mut azimuth = vec![0.0; n - 1];
        azimuth[0] = 1.0;
        ThrowParams {
            theta: theta_deg.to_radians(),
            azimuth,
            g,
        }
    };
    let angles = |k: usize| -> Vec<f64> {
        (0..k)
            .map(|i| -s.theta_max_deg + 2.0 * s.theta_max_deg * i as f64 / (k - 1) as f64)
            .collect()
    };
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for th in angles(s.curves) {
        let tp = throw(th);
        let t_end = 1.5 * critical_time(&base, &tp).expect("downward throw");
        let mut curve = Vec::new();
        for j in 0..s.samples_per_curve {
            let t = t_end * j as f64 / (s.samples_per_curve - 1) as f64;
            let q = ballistic_state(&base, &tp, t).q;
            rows.push([th, t, q[0], q[n - 1]]);
            curve.push(pt(&q));
        }
        curves.push(curve);
    }
    ctx.write("throws.csv", &export::throw_family_csv(&rows))?;
    let mut env_rows = Vec::new();
    for th in angles(s.envelope_samples) {
        let tp = throw(th);
        let (t, p) = (critical_time(&base, &tp).expect("downward"), envelope_point(&base, &tp).expect("downward"));
        env_rows.push([th, t, p[0], p[n - 1]]);
    }
    ctx.write("envelope.csv", &export::throw_family_csv(&env_rows))?;

    // numerical conjugate points against the closed-form envelope
    let tmax = critical_time(&base, &throw(s.theta_max_deg)).expect("downward") * 1.2;
    let fam = FamilyMap::new(sys.clone(), DVector::from_column_slice(&s.base), tmax, IntegratorOptions::default())?;
    let opts = ConjugateOptions::default();
    let mut worst: f64 = 0.0;
    let mut found = 0;
    for frac in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let mut u = vec![0.0; n - 1];
        u[0] = (frac * s.theta_max_deg).to_radians();
        if let Some(e) = hillscope_core::conjugate::detect_conjugate(&fam, &u, &opts)? {
            let h = envelope_height(&base, &e.point.as_slice()[..n - 1]);
            worst = worst.max((e.point[n - 1] - h).abs());
            found += 1;
        }
    }
    ctx.check(
        "model-envelope.numerical-conjugate-points",
        found == 5 && worst < 1e-6,
        json!({"directions": 5, "found": found, "max_deviation": worst, "tol": 1e-6}),
    );
    let env: Vec<[f64; 2]> = env_rows.iter().map(|r| [r[2], r[3]]).collect();
    let base_pt = [s.base[0], s.base[n - 1]];
    ctx.write_svg("envelope.svg", || {
        let bounds = Scene::fit(curves.iter().flatten().copied().chain(env.iter().copied()), 0.05);
        let mut sc = Scene::new(bounds, 600.0, s.flip);
        sc.polyline(&[[bounds[0], 0.0], [bounds[1], 0.0]], "gray", 1.0);
        for c in &curves {
            sc.polyline(c, "steelblue", 0.8);
        }
        sc.polyline(&env, "crimson", 2.0);
        sc.circle(base_pt, 3.0, "black");
        sc
    })
}

fn family(sys: &MechanicalSystem, s: &FamilySpec) -> anyhow::Result<(FamilyMap, Vec<Vec<f64>>, ConjugateOptions)> {
    let fam = FamilyMap::new(
        sys.clone(),
        DVector::from_column_slice(&s.base),
        s.t_max,
        IntegratorOptions::with_step(s.step),
    )?;
    let grid = direction_grid(sys.dimension() - 1, s.theta_min_deg, s.theta_max_deg, s.resolution);
    Ok((fam, grid, s.tolerances.options()))
}

fn locus_with_folds(ctx: &mut Ctx) -> anyhow::Result<(FamilyMap, Vec<Vec<f64>>, Locus, Vec<Option<FoldReport>>)> {
    let s = need(ctx.cfg.family(), "family")?.clone();
    let (fam, grid, opts) = family(&ctx.system, &s)?;
    if let Some((l, f)) = &ctx.locus {
        return Ok((fam, grid, l.clone(), f.clone()));
    }
    let locus = locate_locus(&fam, &grid, &opts)?;
    let folds: Vec<Option<FoldReport>> = locus.events().map(|e| fold_check(&fam, e, &opts).ok()).collect();
    ctx.locus = Some((locus.clone(), folds.clone()));
    Ok((fam, grid, locus, folds))
}

pub fn conjugate_locus(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.family(), "family")?.clone();
    let (fam, grid, locus, folds) = locus_with_folds(ctx)?;
    let opts = s.tolerances.options();
    let sys = ctx.system.clone();
    let n = sys.dimension();
    ctx.write("locus.csv", &export::locus_csv(&locus, &folds))?;
    let events = locus.events().count();
    ctx.check(
        "conjugate-locus.found",
        events > 0,
        json!({"directions": locus.samples.len(), "events": events, "gaps": locus.gaps()}),
    );
    if model_gravity(&sys).is_ok() {
        let base = ModelPoint::from_ambient(&s.base)?;
        let worst = locus
            .events()
            .map(|e| (e.point[n - 1] - envelope_height(&base, &e.point.as_slice()[..n - 1])).abs())
            .fold(0.0, f64::max);
        ctx.check(
            "conjugate-locus.model-envelope",
            worst < 1e-6,
            json!({"max_deviation": worst, "tol": 1e-6}),
        );
    }
    if n == 2 {
        let rep = side_and_tangency_check(&fam, &locus, &opts)?;
        ctx.check(
            "conjugate-locus.side-and-tangency",
            rep.total_crossings == 0 && rep.max_tangency_angle_deg < 1.0,
            json!({
                "total_crossings": rep.total_crossings,
                "max_tangency_angle_deg": rep.max_tangency_angle_deg,
                "tangency_tol_deg": 1.0,
                "side_tolerance": rep.side_tolerance,
            }),
        );
    }
    let d = reparam_invariance_check(&fam, &grid, &opts)?;
    ctx.check(
        "conjugate-locus.reparameterization-invariance",
        d < s.invariance_tol,
        json!({"hausdorff": d, "tol": s.invariance_tol}),
    );

    let members: Vec<Vec<[f64; 2]>> = locus
        .samples
        .iter()
        .map(|smp| {
            let t_end = smp.event.as_ref().map_or(fam.t_max(), |e| (1.2 * e.t_star).min(fam.t_max()));
            integrate(&sys, &fam.initial_state(&smp.theta), (0.0, t_end), fam.options())
                .map(|tr| tr.samples.iter().step_by(4).map(|x| pt(&x.state.q)).collect())
        })
        .collect::<Result<_, _>>()?;
    let pts: Vec<[f64; 2]> = locus.points().iter().map(pt).collect();
    let base = fam.base().clone();
    ctx.write_svg("locus.svg", || {
        let bounds = Scene::fit(members.iter().flatten().copied(), 0.1);
        let mut sc = Scene::new(bounds, 600.0, false);
        hill_boundary_dots(&mut sc, &sys, bounds, &base);
        for m in &members {
            sc.polyline(m, "steelblue", 0.6);
        }
        sc.polyline(&pts, "crimson", 1.5);
        for p in &pts {
            sc.circle(*p, 2.0, "crimson");
        }
        sc.circle(pt(&base), 3.0, "black");
        sc
    })
}

pub fn fold_report(ctx: &mut Ctx) -> anyhow::Result<()> {
    let (_, _, locus, folds) = locus_with_folds(ctx)?;
    let mut records = Vec::new();
    for (e, f) in locus.events().zip(&folds) {
        records.push(json!({
            "theta_deg": export::chart_angle_deg(&e.theta),
            "t_star": e.t_star,
            "point": e.point.as_slice(),
            "report": f,
        }));
    }
    ctx.write("folds.json", &(serde_json::to_string_pretty(&records)? + "\n"))?;
    let certified = folds.iter().filter(|f| f.as_ref().is_some_and(|f| f.certified)).count();
    ctx.check(
        "fold-report.certified",
        !folds.is_empty() && certified == folds.len(),
        json!({"events": folds.len(), "certified": certified}),
    );
    Ok(())
}

pub fn downward_cone(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.family(), "family")?.clone();
    let c = need(s.cone.as_ref(), "family.cone")?.clone();
    let (fam, _, opts) = family(&ctx.system, &s)?;
    let cone = sweep_cone(&fam, c.theta_max_deg, c.resolution, &opts)?;
    ctx.write("cone.csv", &export::cone_csv(&cone))?;
    let detail = json!({
        "aperture_deg": cone.aperture_deg,
        "aperture_pos_deg": cone.aperture_pos_deg,
        "aperture_neg_deg": cone.aperture_neg_deg,
        "saturated": cone.saturated,
        "expected_deg": c.expected_deg,
        "tol_deg": c.tol_deg,
    });
    let pass = match c.expected_deg {
        Some(e) => (cone.aperture_deg - e).abs() <= c.tol_deg && !cone.saturated,
        None => !cone.saturated,
    };
    ctx.check("downward-cone.aperture", pass, detail);
    let base = pt(fam.base());
    let down = pt(fam.down_axis());
    let f0 = cone.base_f;
    ctx.write_svg("cone.svg", || {
        let r = f0.sqrt().max(1e-3);
        let mut sc = Scene::new(
            [base[0] - 1.5 * r, base[0] + 1.5 * r, base[1] - 1.5 * r, base[1] + 1.5 * r],
            500.0,
            false,
        );
        for rec in &cone.records {
            let a = rec.theta_deg.to_radians();
            let dir = [down[0] * a.cos() - down[1] * a.sin(), down[0] * a.sin() + down[1] * a.cos()];
            let colour = if rec.below_base { "crimson" } else { "steelblue" };
            sc.polyline(&[base, [base[0] + r * dir[0], base[1] + r * dir[1]]], colour, 1.0);
        }
        sc.text([base[0] - 1.4 * r, base[1] + 1.3 * r], &format!("aperture {:.3} deg", cone.aperture_deg));
        sc
    })
}

fn build_chart(sys: &MechanicalSystem, s: &SeifertSpec) -> anyhow::Result<SeifertChart> {
    let mut opts = ChartOptions::for_dimension(sys.dimension());
    if let Some(k) = s.nodes {
        opts.nodes = k;
    }
    Ok(SeifertChart::build(sys, &DVector::from_column_slice(&s.q0), s.extent, s.height, &opts)?)
}

pub fn seifert_build(ctx: &mut Ctx) -> anyhow::Result<()> {
    let chart = ctx.chart()?;
    let sys = ctx.system.clone();
    let m = chart.dimension() - 1;
    ctx.write("chart.csv", &export::chart_csv(&chart, 21, 11)?)?;
    let (w, h) = (chart.extent(), chart.height());
    let k: usize = if m == 1 { 20 } else { 6 };
    let mut f_max: f64 = 0.0;
    let mut trip: f64 = 0.0;
    for flat in 0..k.pow(m as u32) {
        let x: Vec<f64> = (0..m)
            .map(|a| -w + 2.0 * w * ((flat / k.pow(a as u32)) % k) as f64 / (k - 1) as f64)
            .collect();
        f_max = f_max.max(sys.conformal_factor(&chart.forward(&x, 0.0)?)?.abs());
        for j in 0..k {
            let y = h * j as f64 / (k - 1) as f64;
            let (xb, yb) = chart.inverse(&chart.forward(&x, y)?)?;
            trip = trip.max((yb - y).abs());
            for (a, b) in xb.iter().zip(&x) {
                trip = trip.max((a - b).abs());
            }
        }
    }
    ctx.check(
        "seifert-build.axioms",
        f_max < 1e-9 && trip < 1e-8,
        json!({"max_boundary_f": f_max, "max_round_trip": trip, "f_tol": 1e-9, "round_trip_tol": 1e-8}),
    );
    let metric = chart_metric_check(&chart, &MetricGrid::default())?;
    ctx.report("seifert-build.metric", &metric);
    let mut lines = Vec::new();
    for i in 0..=10 {
        let mut x = vec![0.0; m];
        x[0] = -w + 2.0 * w * i as f64 / 10.0;
        let v: Vec<[f64; 2]> = (0..=20)
            .map(|j| chart.forward(&x, h * j as f64 / 20.0).map(|q| pt(&q)))
            .collect::<Result<_, _>>()?;
        lines.push(v);
    }
    for j in 0..=5 {
        let y = h * j as f64 / 5.0;
        let v: Vec<[f64; 2]> = (0..=20)
            .map(|i| {
                let mut x = vec![0.0; m];
                x[0] = -w + 2.0 * w * i as f64 / 20.0;
                chart.forward(&x, y).map(|q| pt(&q))
            })
            .collect::<Result<_, _>>()?;
        lines.push(v);
    }
    let centre = chart.center().clone();
    ctx.write_svg("chart.svg", || {
        let bounds = Scene::fit(lines.iter().flatten().copied(), 0.1);
        let mut sc = Scene::new(bounds, 600.0, false);
        hill_boundary_dots(&mut sc, &sys, bounds, &centre);
        for l in &lines {
            sc.polyline(l, "steelblue", 0.8);
        }
        sc.circle(pt(&centre), 3.0, "crimson");
        sc
    })
}

fn sample_spec(s: &SeifertSpec) -> SampleSpec {
    SampleSpec {
        half_width: s.half_width,
        eps_b: s.eps_b,
        nx: s.samples.nx,
        ny: s.samples.ny,
        n_dir: s.samples.n_dir,
        step: s.step,
    }
}

pub fn seifert_properties(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.seifert(), "seifert")?.clone();
    let chart = ctx.chart()?;
    let spec = sample_spec(&s);
    let reports = vec![
        property1_check(&chart, &s.heights)?,
        chart_metric_check(&chart, &MetricGrid::default())?,
        property3_check(&chart, s.eps_a, s.delta_deg, &spec)?,
        property4_check(&chart, s.eps_a, &spec)?,
        property5_check(&chart, &s.h_values, s.eps_a, &spec)?,
    ];
    ctx.write("properties.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    for r in &reports {
        ctx.report(&format!("seifert-properties.property{}", r.property), r);
    }
    // a horizontal geodesic through the roof of B, drawn with the cylinders
    let m = chart.dimension() - 1;
    let mut dir = vec![0.0; m + 1];
    dir[0] = 1.0;
    let seed = chart.ambient_velocity(&vec![0.0; m], s.eps_b, &dir)?;
    let side = s.half_width + 2.0 * s.eps_a;
    let limits = TraceLimits {
        roof: s.eps_a,
        side,
        step: s.step,
        t_max: 1e3,
    };
    let tr = trace_in_chart(&chart, &seed, (vec![0.0; m], s.eps_b), &limits)?;
    let path: Vec<[f64; 2]> = tr.xs.iter().zip(&tr.ys).map(|(x, y)| [x[0], *y]).collect();
    ctx.write_svg("cylinders.svg", || {
        let mut sc = Scene::new([-1.1 * side, 1.1 * side, -0.1 * s.eps_a, 1.2 * s.eps_a], 600.0, false);
        sc.rect([-side, 0.0], [side, s.eps_a], "black");
        sc.rect([-s.half_width, 0.0], [s.half_width, s.eps_b], "gray");
        sc.polyline(&path, "crimson", 1.5);
        sc.text([-side, 1.1 * s.eps_a], "A");
        sc.text([-s.half_width, 1.1 * s.eps_b], "B");
        sc
    })
}

pub fn rescale_compare(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.seifert(), "seifert")?.clone();
    let r = need(s.rescale.as_ref(), "seifert.rescale")?.clone();
    let chart = ctx.chart()?;
    let rep = seifert::rescale_compare(&chart, &r.eps, r.theta_deg, s.step)?;
    let mut csv = String::from("eps,max_deviation,ratio\n");
    for p in &rep.points {
        csv.push_str(&format!("{},{},{}\n", num(p.eps), num(p.max_deviation), num(p.ratio)));
    }
    ctx.write("rescale.csv", &csv)?;
    ctx.check("rescale-compare.linear-in-eps", rep.pass, serde_json::to_value(&rep)?);
    if let Some(expected) = &r.expected_f1_x {
        let metric = chart_metric_check(&chart, &MetricGrid::default())?;
        let measured: Vec<f64> = metric.measured["f1_x"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        let pass = measured.len() == expected.len()
            && measured.iter().zip(expected).all(|(a, e)| {
                if *e == 0.0 {
                    a.abs() <= r.f1_rel_tol * 1e-2
                } else {
                    (a - e).abs() <= r.f1_rel_tol * e.abs()
                }
            });
        ctx.check(
            "rescale-compare.f1-coefficient",
            pass,
            json!({"measured": measured, "expected": expected, "rel_tol": r.f1_rel_tol}),
        );
    }
    Ok(())
}

pub fn theorem1_scan(ctx: &mut Ctx) -> anyhow::Result<()> {
    let s = need(ctx.cfg.seifert(), "seifert")?.clone();
    let sc = *need(s.scan.as_ref(), "seifert.scan")?;
    let chart = ctx.chart()?;
    let rep = seifert::theorem1_scan(&chart, sc.approach, sc.lambda, s.step)?;
    let mut csv = String::from("seed_x,seed_y,entry_y,entry_angle_deg,conjugate_y,ok\n");
    for p in &rep.pairs {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(p.seed.0[0]),
            num(p.seed.1),
            num(p.entry_y),
            num(p.entry_angle_deg),
            p.conjugate_y.map_or("nan".into(), num),
            p.ok
        ));
    }
    ctx.write("pairs.csv", &csv)?;
    ctx.check("theorem1-scan.pairs", rep.pass, serde_json::to_value(&rep)?);
    Ok(())
}

pub fn verify_all(ctx: &mut Ctx) -> anyhow::Result<()> {
    let mut ran = false;
    if ctx.cfg.simulate().is_some() {
        simulate(ctx)?;
        ran = true;
    }
    if ctx.cfg.model_envelope().is_some() {
        model_envelope(ctx)?;
        ran = true;
    }
    if let Some(f) = ctx.cfg.family() {
        let cone = f.cone.is_some();
        conjugate_locus(ctx)?;
        fold_report(ctx)?;
        if cone {
            downward_cone(ctx)?;
        }
        ran = true;
    }
    if let Some(s) = ctx.cfg.seifert() {
        let (rescale, scan) = (s.rescale.is_some(), s.scan.is_some());
        seifert_build(ctx)?;
        seifert_properties(ctx)?;
        if rescale {
            rescale_compare(ctx)?;
        }
        if scan {
            theorem1_scan(ctx)?;
        }
        ran = true;
    }
    if !ran {
        return Err(HillError::config("experiment", "scenario has no runnable block").into());
    }
    Ok(())
}
