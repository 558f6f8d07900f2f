use serde::Serialize;

use super::SeifertChart;
use crate::dynamics::{PhasePoint, Stepper};
use crate::error::Result;
use crate::system::State;

/// Box `|x_i| <= side`, `y <= roof` in which a geodesic is followed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceLimits {
    pub roof: f64,
    pub side: f64,
    pub step: f64,
    /// Give up after this much time in either direction.
    pub t_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Exit {
    /// Left through the roof; angle between the chart velocity and the vertical.
    Roof { t: f64, angle_deg: f64 },
    Side { t: f64 },
    Timeout,
}

/// A geodesic followed in chart coordinates in both time directions from its seed.
#[derive(Debug, Clone)]
pub struct ChartTrace {
    /// Increasing times; the seed sits at `t = 0`.
    pub times: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub states: Vec<State>,
    pub exit_backward: Exit,
    pub exit_forward: Exit,
}

impl ChartTrace {
    pub fn y_min(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn through_roof(&self) -> bool {
        matches!(self.exit_backward, Exit::Roof { .. }) && matches!(self.exit_forward, Exit::Roof { .. })
    }

    pub fn roof_angles(&self) -> Vec<f64> {
        [self.exit_backward, self.exit_forward]
            .iter()
            .filter_map(|e| match e {
                Exit::Roof { angle_deg, .. } => Some(*angle_deg),
                _ => None,
            })
            .collect()
    }

    /// Time spent with `y < h`, crossing instants interpolated linearly.
    pub fn residence_below(&self, h: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.times.len().saturating_sub(1) {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            let (y0, y1) = (self.ys[k] - h, self.ys[k + 1] - h);
            total += match (y0 < 0.0, y1 < 0.0) {
                (true, true) => t1 - t0,
                (false, false) => 0.0,
                (true, false) => (t1 - t0) * (-y0) / (y1 - y0),
                (false, true) => (t1 - t0) * (-y1) / (y0 - y1),
            };
        }
        total
    }
}

/// Follow the geodesic through `seed` (at chart position `(x, y)`) until it
/// leaves the box in each time direction.
pub fn trace_in_chart(
    chart: &SeifertChart,
    seed: &State,
    start: (Vec<f64>, f64),
    limits: &TraceLimits,
) -> Result<ChartTrace> {
    let back = one_way(chart, seed, &start, -limits.step, limits)?;
    let fwd = one_way(chart, seed, &start, limits.step, limits)?;
    let mut times = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut states = Vec::new();
    for (p, (x, y)) in back.0.iter().rev() {
        times.push(p.t);
        xs.push(x.clone());
        ys.push(*y);
        states.push(p.state());
    }
    for (p, (x, y)) in fwd.0.iter().skip(1) {
        times.push(p.t);
        xs.push(x.clone());
        ys.push(*y);
        states.push(p.state());
    }
    Ok(ChartTrace {
        times,
        xs,
        ys,
        states,
        exit_backward: back.1,
        exit_forward: fwd.1,
    })
}

type Track = Vec<(PhasePoint, (Vec<f64>, f64))>;

fn one_way(
    chart: &SeifertChart,
    seed: &State,
    start: &(Vec<f64>, f64),
    h: f64,
    limits: &TraceLimits,
) -> Result<(Track, Exit)> {
    let stepper = Stepper::new(chart.system());
    let mut cur = stepper.start(0.0, seed, false);
    let mut out: Track = vec![(cur.clone(), start.clone())];
    while cur.t.abs() < limits.t_max {
        let next = stepper.advance(&cur, h);
        let guess = out.last().expect("seeded").1.clone();
        let coords = chart.inverse_from(&next.q, guess).or_else(|_| chart.inverse(&next.q));
        let Ok((x, y)) = coords else {
            // outside the tabulated range: classify by the last known position
            let ly = out.last().expect("seeded").1 .1;
            let exit = if ly > 0.5 * limits.roof {
                Exit::Roof { t: next.t, angle_deg: f64::NAN }
            } else {
                Exit::Side { t: next.t }
            };
            return Ok((out, exit));
        };
        let side = x.iter().fold(0.0f64, |a, v| a.max(v.abs())) > limits.side;
        let roof = y >= limits.roof;
        if roof && !side {
            let cv = chart.chart_velocity(&x, y, &next.v)?;
            let m = cv.len() - 1;
            let horizontal = cv.rows(0, m).norm();
            let angle_deg = horizontal.atan2(cv[m].abs()).to_degrees();
            let t = next.t;
            out.push((next, (x, y)));
            return Ok((out, Exit::Roof { t, angle_deg }));
        }
        if side {
            let t = next.t;
            out.push((next, (x, y)));
            return Ok((out, Exit::Side { t }));
        }
        out.push((next.clone(), (x, y)));
        cur = next;
    }
    Ok((out, Exit::Timeout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seifert::ChartOptions;
    use crate::system::MechanicalSystem;
    use nalgebra::DVector;

    #[test]
    fn model_parabola_in_chart_coordinates() {
        let sys = MechanicalSystem::model(2, 0.5);
        let chart = SeifertChart::build(&sys, &DVector::zeros(2), 1.0, 0.5, &ChartOptions::for_dimension(2)).unwrap();
        // vertex at (0.1, 0.1), horizontal motion
        let seed = chart.ambient_velocity(&[0.1], 0.1, &[1.0, 0.0]).unwrap();
        let limits = TraceLimits { roof: 0.3, side: 0.9, step: 1e-3, t_max: 10.0 };
        let tr = trace_in_chart(&chart, &seed, (vec![0.1], 0.1), &limits).unwrap();
        assert!(tr.through_roof());
        assert!((tr.y_min() - 0.1).abs() < 1e-9);
        // y - y_m = (x - x_m)^2 / (4 y_m)
        for (x, y) in tr.xs.iter().zip(&tr.ys) {
            assert!((y - 0.1 - (x[0] - 0.1).powi(2) / 0.4).abs() < 1e-9);
        }
        // slope at the roof: dy/dx = sqrt((y - y_m) / y_m)
        for a in tr.roof_angles() {
            let y = 0.3;
            let slope = ((y - 0.1) / 0.1f64).sqrt();
            assert!((a - (1.0 / slope).atan().to_degrees()).abs() < 0.2, "{a}");
        }
        // brake-free: residence below the vertex height is zero
        assert_eq!(tr.residence_below(0.1 - 1e-6), 0.0);
    }
}
