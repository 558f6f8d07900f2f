//! Minimal deterministic SVG scenes: polylines, circles, rectangles and text in
//! data coordinates.

use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct Scene {
    width: f64,
    height: f64,
    /// `[x_min, x_max, y_min, y_max]` in data units.
    bounds: [f64; 4],
    /// Data `y` grows downward on the page (the sprinkler view).
    flip: bool,
    body: Vec<String>,
}

impl Scene {
    pub fn new(bounds: [f64; 4], width: f64, flip: bool) -> Self {
        let aspect = (bounds[3] - bounds[2]) / (bounds[1] - bounds[0]);
        Self {
            width,
            height: (width * aspect).clamp(0.2 * width, 2.0 * width),
            bounds,
            flip,
            body: Vec::new(),
        }
    }

    /// Bounds enclosing `points` with a relative margin.
    pub fn fit(points: impl IntoIterator<Item = [f64; 2]>, margin: f64) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for [x, y] in points {
            if x.is_finite() && y.is_finite() {
                b = [b[0].min(x), b[1].max(x), b[2].min(y), b[3].max(y)];
            }
        }
        if !b[0].is_finite() {
            return [-1.0, 1.0, -1.0, 1.0];
        }
        let dx = (b[1] - b[0]).max(1e-12) * margin;
        let dy = (b[3] - b[2]).max(1e-12) * margin;
        [b[0] - dx, b[1] + dx, b[2] - dy, b[3] + dy]
    }

    fn map(&self, [x, y]: [f64; 2]) -> (f64, f64) {
        let u = (x - self.bounds[0]) / (self.bounds[1] - self.bounds[0]) * self.width;
        let mut v = (y - self.bounds[2]) / (self.bounds[3] - self.bounds[2]) * self.height;
        if !self.flip {
            v = self.height - v;
        }
        (u, v)
    }

    pub fn polyline(&mut self, points: &[[f64; 2]], stroke: &str, width: f64) {
        if points.len() < 2 {
            return;
        }
        let mut pts = String::new();
        for p in points {
            let (u, v) = self.map(*p);
            let _ = write!(pts, "{u:.3},{v:.3} ");
        }
        self.body.push(format!(
            r#"<polyline fill="none" stroke="{stroke}" stroke-width="{width}" points="{}"/>"#,
            pts.trim_end()
        ));
    }

    pub fn circle(&mut self, p: [f64; 2], r: f64, fill: &str) {
        let (u, v) = self.map(p);
        self.body.push(format!(r#"<circle cx="{u:.3}" cy="{v:.3}" r="{r}" fill="{fill}"/>"#));
    }

    /// Axis-aligned rectangle outline with data corners `lo`, `hi`.
    pub fn rect(&mut self, lo: [f64; 2], hi: [f64; 2], stroke: &str) {
        let c = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]], lo];
        self.polyline(&c, stroke, 1.0);
    }

    pub fn text(&mut self, p: [f64; 2], s: &str) {
        let (u, v) = self.map(p);
        let esc = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        self.body
            .push(format!(r#"<text x="{u:.3}" y="{v:.3}" font-family="sans-serif" font-size="12">{esc}</text>"#));
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#,
            w = self.width,
            h = self.height
        );
        out.push('\n');
        out.push_str(&format!(
            r#"<rect width="{:.3}" height="{:.3}" fill="white"/>"#,
            self.width, self.height
        ));
        out.push('\n');
        for e in &self.body {
            out.push_str(e);
            out.push('\n');
        }
        out.push_str("</svg>\n");
        out
    }
}
