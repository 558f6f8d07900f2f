//! Piecewise-quadratic quadrature on non-uniform samples.
//!
//! Samples are grouped in consecutive triples; each sub-interval is integrated
//! against the quadratic through its triple, so the scheme is exact for
//! quadratic integrands. With an odd number of intervals the last one reuses
//! the quadratic through the final three samples.

/// Integral of the quadratic interpolant through `(ts, gs)` over `[a, b]`.
fn quadratic_piece(ts: [f64; 3], gs: [f64; 3], a: f64, b: f64) -> f64 {
    let lagrange = |x: f64| {
        let [t0, t1, t2] = ts;
        gs[0] * (x - t1) * (x - t2) / ((t0 - t1) * (t0 - t2))
            + gs[1] * (x - t0) * (x - t2) / ((t1 - t0) * (t1 - t2))
            + gs[2] * (x - t0) * (x - t1) / ((t2 - t0) * (t2 - t1))
    };
    // two-point Gauss-Legendre is exact through cubics
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let node = half / 3f64.sqrt();
    half * (lagrange(mid - node) + lagrange(mid + node))
}

/// Running integral of `gs` over `ts`; element `k` is the integral from `ts[0]` to `ts[k]`.
pub fn cumulative(ts: &[f64], gs: &[f64]) -> Vec<f64> {
    assert_eq!(ts.len(), gs.len());
    let m = ts.len();
    let mut out = vec![0.0; m];
    if m < 2 {
        return out;
    }
    if m == 2 {
        out[1] = 0.5 * (ts[1] - ts[0]) * (gs[0] + gs[1]);
        return out;
    }
    let mut k = 0;
    while k + 2 < m {
        let tri_t = [ts[k], ts[k + 1], ts[k + 2]];
        let tri_g = [gs[k], gs[k + 1], gs[k + 2]];
        out[k + 1] = out[k] + quadratic_piece(tri_t, tri_g, ts[k], ts[k + 1]);
        out[k + 2] = out[k + 1] + quadratic_piece(tri_t, tri_g, ts[k + 1], ts[k + 2]);
        k += 2;
    }
    if k + 1 < m {
        let tri_t = [ts[m - 3], ts[m - 2], ts[m - 1]];
        let tri_g = [gs[m - 3], gs[m - 2], gs[m - 1]];
        out[m - 1] = out[m - 2] + quadratic_piece(tri_t, tri_g, ts[m - 2], ts[m - 1]);
    }
    out
}

pub fn integrate(ts: &[f64], gs: &[f64]) -> f64 {
    cumulative(ts, gs).last().copied().unwrap_or(0.0)
}
