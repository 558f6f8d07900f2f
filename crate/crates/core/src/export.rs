//! CSV writers. Every float is written with 17 significant digits so that
//! reruns with the same scenario reproduce files byte for byte.

use std::fmt::Write as _;

use crate::conjugate::{DownwardCone, FoldReport, Locus};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::seifert::SeifertChart;
use crate::system::MechanicalSystem;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let cells: Vec<String> = cells.into_iter().collect();
    let _ = writeln!(out, "{}", cells.join(","));
}

/// `t,q1,...,qn,v1,...,vn,f,H`
pub fn trajectory_csv(system: &MechanicalSystem, traj: &Trajectory) -> String {
    let n = system.dimension();
    let mut out = String::new();
    let mut head = vec!["t".to_string()];
    head.extend((1..=n).map(|i| format!("q{i}")));
    head.extend((1..=n).map(|i| format!("v{i}")));
    head.extend(["f".into(), "H".into()]);
    row(&mut out, head);
    for s in &traj.samples {
        let mut cells = vec![num(s.time)];
        cells.extend(s.state.q.iter().map(|x| num(*x)));
        cells.extend(s.state.v.iter().map(|x| num(*x)));
        cells.push(num(system.f(&s.state.q)));
        cells.push(num(system.hamiltonian(&s.state)));
        row(&mut out, cells);
    }
    out
}

/// `theta_deg,t,x,y` for a family of throws; rows are `(theta_deg, t, x, y)`.
pub fn throw_family_csv(rows: &[[f64; 4]]) -> String {
    let mut out = String::from("theta_deg,t,x,y\n");
    for r in rows {
        row(&mut out, r.iter().map(|x| num(*x)));
    }
    out
}

/// Signed angle of a direction-chart point: the angle itself in the plane,
/// the polar angle from the down axis otherwise.
pub fn chart_angle_deg(u: &[f64]) -> f64 {
    if u.len() == 1 {
        u[0].to_degrees()
    } else {
        u.iter().map(|x| x * x).sum::<f64>().sqrt().to_degrees()
    }
}

/// `theta_deg,t_star,px,py[,pz],det_deriv_kernel,fold_ok`; directions without
/// a conjugate point are omitted. `folds` is parallel to the located events.
pub fn locus_csv(locus: &Locus, folds: &[Option<FoldReport>]) -> String {
    let n = locus.events().next().map_or(2, |e| e.point.len());
    let mut out = String::new();
    let mut head = vec!["theta_deg".to_string(), "t_star".into()];
    let names = ["px", "py", "pz"];
    head.extend((0..n).map(|i| names.get(i).map_or(format!("p{}", i + 1), |s| s.to_string())));
    head.extend(["det_deriv_kernel".into(), "fold_ok".into()]);
    row(&mut out, head);
    for (e, fold) in locus.events().zip(folds) {
        let mut cells = vec![num(chart_angle_deg(&e.theta)), num(e.t_star)];
        cells.extend(e.point.iter().map(|x| num(*x)));
        match fold {
            Some(f) => {
                cells.push(num(f.det_derivative_along_kernel));
                cells.push(f.certified.to_string());
            }
            None => {
                cells.push("nan".into());
                cells.push("false".into());
            }
        }
        row(&mut out, cells);
    }
    out
}

/// `theta_deg,conjugate_f,below_base`
pub fn cone_csv(cone: &DownwardCone) -> String {
    let mut out = String::from("theta_deg,conjugate_f,below_base\n");
    for r in &cone.records {
        row(
            &mut out,
            [
                num(r.theta_deg),
                r.conjugate_f.map_or("nan".into(), num),
                r.below_base.to_string(),
            ],
        );
    }
    out
}

/// `x1,...,x{n-1},y,q1,...,qn` on an `nx` by `ny` grid of the first
/// horizontal axis and height (other horizontal coordinates zero).
pub fn chart_csv(chart: &SeifertChart, nx: usize, ny: usize) -> Result<String> {
    let n = chart.dimension();
    let mut out = String::new();
    let mut head: Vec<String> = (1..n).map(|i| format!("x{i}")).collect();
    head.push("y".into());
    head.extend((1..=n).map(|i| format!("q{i}")));
    row(&mut out, head);
    let (w, h) = (chart.extent(), chart.height());
    for i in 0..nx.max(2) {
        let mut x = vec![0.0; n - 1];
        x[0] = -w + 2.0 * w * i as f64 / (nx.max(2) - 1) as f64;
        for j in 0..ny.max(2) {
            let y = h * j as f64 / (ny.max(2) - 1) as f64;
            let q = chart.forward(&x, y)?;
            let mut cells: Vec<String> = x.iter().map(|v| num(*v)).collect();
            cells.push(num(y));
            cells.extend(q.iter().map(|v| num(*v)));
            row(&mut out, cells);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorOptions};
    use crate::system::State;

    #[test]
    fn trajectory_header_and_digits() {
        let sys = MechanicalSystem::oscillator(2);
        let s0 = State::from_slices(&[0.9, 0.0], &[0.0, 0.19f64.sqrt()]);
        let traj = integrate(&sys, &s0, (0.0, 0.01), &IntegratorOptions::with_step(0.005)).unwrap();
        let csv = trajectory_csv(&sys, &traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,q1,q2,v1,v2,f,H");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 7);
        assert_eq!(first[1], "9.0000000000000002e-1");
        assert_eq!(first[1].parse::<f64>().unwrap(), 0.9);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn angle_column() {
        assert!((chart_angle_deg(&[-std::f64::consts::FRAC_PI_4]) + 45.0).abs() < 1e-12);
        assert!((chart_angle_deg(&[0.3, 0.4]) - 0.5f64.to_degrees()).abs() < 1e-12);
    }
}
