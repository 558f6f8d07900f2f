use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{detect_conjugate, ConjugateEvent, ConjugateOptions, FamilyMap};
use crate::dynamics::{integrate, reparameterize, resample, Parameterization, Trajectory};
use crate::error::{HillError, Result};
use crate::tol;

#[derive(Debug, Clone)]
pub struct LocusSample {
    pub theta: Vec<f64>,
    /// `None` where no conjugate point was found before `t_max` or exit.
    pub event: Option<ConjugateEvent>,
}

#[derive(Debug, Clone)]
pub struct Locus {
    pub samples: Vec<LocusSample>,
}

impl Locus {
    pub fn events(&self) -> impl Iterator<Item = &ConjugateEvent> {
        self.samples.iter().filter_map(|s| s.event.as_ref())
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        self.events().map(|e| e.point.clone()).collect()
    }

    pub fn gaps(&self) -> usize {
        self.samples.iter().filter(|s| s.event.is_none()).count()
    }
}

/// Chart grid in radians. One chart dimension: `resolution` evenly spaced
/// angles in `[min_deg, max_deg]`. Two: rings of radius up to `max_deg`
/// (`resolution` radii, 12 azimuths each, one point at the centre).
pub fn direction_grid(chart_dim: usize, min_deg: f64, max_deg: f64, resolution: usize) -> Vec<Vec<f64>> {
    let res = resolution.max(2);
    match chart_dim {
        1 => (0..res)
            .map(|k| vec![(min_deg + (max_deg - min_deg) * k as f64 / (res - 1) as f64).to_radians()])
            .collect(),
        _ => {
            let mut out = vec![vec![0.0; chart_dim]];
            for k in 1..res {
                let r = (max_deg.abs() * k as f64 / (res - 1) as f64).to_radians();
                for j in 0..12 {
                    let phi = std::f64::consts::TAU * j as f64 / 12.0;
                    let mut u = vec![0.0; chart_dim];
                    u[0] = r * phi.cos();
                    u[1] = r * phi.sin();
                    out.push(u);
                }
            }
            out
        }
    }
}

/// Conjugate points along every direction of `grid`, in grid order.
pub fn conjugate_locus(fam: &FamilyMap, grid: &[Vec<f64>], opts: &ConjugateOptions) -> Result<Locus> {
    if grid.len() < tol::MIN_DIRECTION_GRID {
        return Err(HillError::config(
            "resolution",
            format!("direction grid needs at least {} entries", tol::MIN_DIRECTION_GRID),
        ));
    }
    let samples = grid
        .par_iter()
        .map(|u| {
            Ok(LocusSample {
                theta: u.clone(),
                event: detect_conjugate(fam, u, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Locus { samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeRecord {
    pub theta_deg: f64,
    /// `f` at the conjugate point, `None` when none was found.
    pub conjugate_f: Option<f64>,
    pub below_base: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DownwardCone {
    pub base: Vec<f64>,
    pub base_f: f64,
    /// Smaller of the two one-sided apertures.
    pub aperture_deg: f64,
    pub aperture_pos_deg: f64,
    pub aperture_neg_deg: f64,
    /// True when every swept direction on some side stayed below the base.
    pub saturated: bool,
    pub records: Vec<ConeRecord>,
}

/// Sweep directions in the plane of the down axis and the first frame vector
/// and locate where conjugate points stop lying below the base (in `f`).
pub fn downward_cone(
    fam: &FamilyMap,
    theta_max_deg: f64,
    resolution: usize,
    opts: &ConjugateOptions,
) -> Result<DownwardCone> {
    if !(theta_max_deg > 0.0 && theta_max_deg < 90.0) {
        return Err(HillError::config("theta_max_deg", "must lie in (0, 90)"));
    }
    let m = fam.chart_dim();
    let along = |deg: f64| {
        let mut u = vec![0.0; m];
        u[0] = deg.to_radians();
        u
    };
    let base_f = fam.system().f(fam.base());
    let probe = |deg: f64| -> Result<Option<f64>> {
        Ok(detect_conjugate(fam, &along(deg), opts)?.map(|e| fam.system().f(&e.point)))
    };
    let res = resolution.max(3) | 1;
    let degs: Vec<f64> = (0..res)
        .map(|k| -theta_max_deg + 2.0 * theta_max_deg * k as f64 / (res - 1) as f64)
        .collect();
    let records = degs
        .par_iter()
        .map(|&deg| {
            let f = probe(deg)?;
            Ok(ConeRecord {
                theta_deg: deg,
                conjugate_f: f,
                below_base: f.is_some_and(|f| f < base_f),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mid = res / 2;
    let side = |dir: isize| -> Result<(f64, bool)> {
        let mut last_below = 0.0;
        let mut k = mid as isize;
        loop {
            k += dir;
            if k < 0 || k as usize >= res {
                return Ok((theta_max_deg, true));
            }
            let r = &records[k as usize];
            if r.conjugate_f.is_none() {
                continue;
            }
            if r.below_base {
                last_below = r.theta_deg.abs();
                continue;
            }
            let (mut lo, mut hi) = (last_below, r.theta_deg.abs());
            while hi - lo > 0.01 {
                let c = 0.5 * (lo + hi);
                match probe(c * dir as f64)? {
                    Some(f) if f < base_f => lo = c,
                    Some(_) => hi = c,
                    // a missing event does not move the bracket
                    None => break,
                }
            }
            return Ok((0.5 * (lo + hi), false));
        }
    };
    let (pos, sat_pos) = side(1)?;
    let (neg, sat_neg) = side(-1)?;
    Ok(DownwardCone {
        base: fam.base().iter().copied().collect(),
        base_f,
        aperture_deg: pos.min(neg),
        aperture_pos_deg: pos,
        aperture_neg_deg: neg,
        saturated: sat_pos || sat_neg,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideRecord {
    pub theta_deg: f64,
    /// Transversal crossings of the locus before `t*`.
    pub crossings: usize,
    /// Angle between the velocity at `t*` and the locus tangent.
    pub tangency_angle_deg: Option<f64>,
    /// Velocity vanishes at `t*` (brake orbit), so tangency is not tested.
    pub exempt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideReport {
    pub records: Vec<SideRecord>,
    pub total_crossings: usize,
    pub max_tangency_angle_deg: f64,
    pub side_tolerance: f64,
}

/// Check that family members stay on the base side of the (planar) locus
/// before their conjugate point and touch it tangentially there.
pub fn side_and_tangency_check(
    fam: &FamilyMap,
    locus: &Locus,
    opts: &ConjugateOptions,
) -> Result<SideReport> {
    if fam.system().dimension() != 2 {
        return Err(HillError::config(
            "system.dimension",
            "side and tangency check is implemented for planar systems",
        ));
    }
    let pts: Vec<[f64; 2]> = locus.events().map(|e| [e.point[0], e.point[1]]).collect();
    if pts.len() < 2 {
        return Err(HillError::config("locus", "need at least two locus points"));
    }
    // chords of a curved locus deviate from it by their sag; allow twice that
    let sag = pts
        .windows(3)
        .map(|w| point_segment(w[1], w[0], w[2]).0)
        .fold(0.0, f64::max);
    let side_tol = 2.0 * sag + 1e-9;
    let base = [fam.base()[0], fam.base()[1]];
    let orient = signed_distance(base, &pts).signum();
    let step = fam.options().step;
    const FD: f64 = 1e-4;

    let records = locus
        .events()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|ev| {
            let traj = integrate(fam.system(), &fam.initial_state(&ev.theta), (0.0, ev.t_star), fam.options())?;
            let mut crossings = 0;
            let mut outside = false;
            for s in &traj.samples {
                if s.time > ev.t_star - 2.0 * step {
                    break;
                }
                let d = orient * signed_distance([s.state.q[0], s.state.q[1]], &pts);
                if d < -side_tol && !outside {
                    crossings += 1;
                    outside = true;
                } else if d > 0.0 {
                    outside = false;
                }
            }
            let exempt = ev.velocity.norm() <= 1e-6 * fam.speed();
            let tangency_angle_deg = if exempt {
                None
            } else {
                let shifted = |h: f64| -> Result<Option<DVector<f64>>> {
                    let mut u = ev.theta.clone();
                    u[0] += h;
                    Ok(detect_conjugate(fam, &u, opts)?.map(|e| e.point))
                };
                match (shifted(FD)?, shifted(-FD)?) {
                    (Some(a), Some(b)) => {
                        let t = (a - b).normalize();
                        let v = ev.velocity.normalize();
                        Some(t.dot(&v).abs().clamp(0.0, 1.0).acos().to_degrees())
                    }
                    _ => None,
                }
            };
            Ok(SideRecord {
                theta_deg: ev.theta[0].to_degrees(),
                crossings,
                tangency_angle_deg,
                exempt,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SideReport {
        total_crossings: records.iter().map(|r| r.crossings).sum(),
        max_tangency_angle_deg: records
            .iter()
            .filter_map(|r| r.tangency_angle_deg)
            .fold(0.0, f64::max),
        side_tolerance: side_tol,
        records,
    })
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let w = [p[0] - a[0], p[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        ((w[0] * d[0] + w[1] * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dist = (w[0] - s * d[0]).hypot(w[1] - s * d[1]);
    let cross = d[0] * w[1] - d[1] * w[0];
    (dist, cross)
}

/// Distance to the polyline, signed by the side of the nearest segment.
fn signed_distance(p: [f64; 2], pts: &[[f64; 2]]) -> f64 {
    let (dist, cross) = pts
        .windows(2)
        .map(|w| point_segment(p, w[0], w[1]))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one segment");
    if cross >= 0.0 {
        dist
    } else {
        -dist
    }
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Locus from the Newtonian-time family versus the locus of the family
/// reparameterized by JM arclength, as a Hausdorff distance. Members whose
/// conjugate point lies at or beyond a brake instant (where arclength
/// degenerates) are dropped from both sets.
pub fn reparam_invariance_check(
    fam: &FamilyMap,
    grid: &[Vec<f64>],
    opts: &ConjugateOptions,
) -> Result<f64> {
    let pairs = grid
        .par_iter()
        .map(|u| {
            let newton = detect_conjugate(fam, u, opts)?.map(|e| e.point);
            let arc = arclength_conjugate(fam, u)?;
            Ok(newton.zip(arc))
        })
        .collect::<Result<Vec<_>>>()?;
    let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().flatten().unzip();
    Ok(hausdorff(&a, &b))
}

/// Conjugate point of member `u` found from `det[dGamma/ds, dGamma/du]` at
/// fixed JM arclength `s`, the `u`-derivatives taken by central differences
/// between neighbouring members.
fn arclength_conjugate(fam: &FamilyMap, u: &[f64]) -> Result<Option<DVector<f64>>> {
    const DELTA: f64 = 1e-5;
    let sys = fam.system();
    let member = |u: &[f64]| -> Result<Option<Trajectory>> {
        let traj = integrate(sys, &fam.initial_state(u), (0.0, fam.t_max()), fam.options())?;
        let cut = traj
            .samples
            .iter()
            .position(|s| sys.f(&s.state.q) <= 1e-8)
            .unwrap_or(traj.len());
        if cut < 2 {
            return Ok(None);
        }
        let truncated = Trajectory {
            samples: traj.samples[..cut].to_vec(),
            tangent: None,
            ..traj
        };
        reparameterize(sys, &truncated, Parameterization::JmArclength).map(Some)
    };
    let Some(center) = member(u)? else {
        return Ok(None);
    };
    let mut neighbours = Vec::new();
    for i in 0..u.len() {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[i] += DELTA;
        um[i] -= DELTA;
        match (member(&up)?, member(&um)?) {
            (Some(a), Some(b)) => neighbours.push((a, b)),
            _ => return Ok(None),
        }
    }
    let s_end = neighbours
        .iter()
        .flat_map(|(a, b)| [a.last().param, b.last().param])
        .fold(center.last().param, f64::min);
    let n = fam.base().len();
    let det_at = |s: f64| -> Result<(f64, DVector<f64>)> {
        let c = resample(sys, &center, &[s])?;
        let st = &c.samples[0].state;
        let rate = sys.f(&st.q).max(0.0).sqrt() * st.v.norm();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        m.set_column(0, &(&st.v / rate));
        for (i, (a, b)) in neighbours.iter().enumerate() {
            let qa = &resample(sys, a, &[s])?.samples[0].state.q;
            let qb = &resample(sys, b, &[s])?.samples[0].state.q;
            m.set_column(i + 1, &((qa - qb) / (2.0 * DELTA)));
        }
        Ok((m.determinant(), st.q.clone()))
    };
    let params: Vec<f64> = center
        .samples
        .iter()
        .skip(tol::FLOOR_STEPS)
        .map(|s| s.param)
        .take_while(|&s| s <= s_end)
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    for &s in &params {
        let (d, _) = det_at(s)?;
        if let Some((s0, d0)) = prev {
            if d0 != 0.0 && d0 * d <= 0.0 {
                let (mut lo, mut hi) = (s0, s);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let (dm, _) = det_at(mid)?;
                    if dm * d0 > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                        break;
                    }
                }
                return Ok(Some(det_at(0.5 * (lo + hi))?.1));
            }
        }
        prev = Some((s, d));
    }
    Ok(None)
}
