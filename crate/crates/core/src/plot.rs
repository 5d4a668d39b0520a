//! Minimal SVG charts for run directories.

use std::fmt::Write as _;

use crate::estimates::DecayFit;
use crate::pipeline::GhRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        let range = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(lo.is_finite() && hi.is_finite()) {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        Frame {
            x: range(xs),
            y: range(ys),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    /// Clipped line `y = y0 + slope·(x − x0)` across the frame.
    fn line(&self, svg: &mut String, x0: f64, y0: f64, slope: f64, style: &str) {
        let (a, b) = self.x;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            self.px(a),
            self.py(y0 + slope * (a - x0)).clamp(0.0, HEIGHT),
            self.px(b),
            self.py(y0 + slope * (b - x0)).clamp(0.0, HEIGHT),
        );
    }

    fn axes(&self, svg: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            svg,
            r#"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="black"/>"#,
            m = MARGIN,
            w = WIDTH - 2.0 * MARGIN,
            h = HEIGHT - 2.0 * MARGIN
        );
        for i in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * i as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{fx:.2}</text>"#,
                self.px(fx),
                HEIGHT - MARGIN + 16.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{fy:.2}</text>"#,
                MARGIN - 6.0,
                self.py(fy) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{xlabel}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
    }
}

fn open() -> String {
    format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
"#
    )
}

fn legend(svg: &mut String, entries: &[(&str, &str)]) {
    for (i, (color, label)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{label}</text>"#,
            MARGIN + 10.0,
            MARGIN + 34.0,
            MARGIN + 40.0,
            y + 4.0
        );
    }
}

/// `ln diam` against `ln(T − t)` with the fitted line and reference slopes
/// 1/3 and 1/2 through the last sample.
pub fn diameter_plot(times: &[f64], diameters: &[f64], t_sing: f64, fit: Option<&DecayFit>) -> String {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(diameters)
        .filter(|(t, d)| **t < t_sing && **d > 0.0)
        .map(|(t, d)| ((t_sing - t).ln(), d.ln()))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let frame = Frame::fit(&xs, &ys);
    let mut svg = open();
    frame.axes(&mut svg, "ln(T − t)", "ln fiber diameter");
    if let Some(&(x0, y0)) = pts.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
        frame.line(&mut svg, x0, y0, 1.0 / 3.0, r##"stroke="#1f77b4" stroke-dasharray="6 4""##);
        frame.line(&mut svg, x0, y0, 0.5, r##"stroke="#2ca02c" stroke-dasharray="2 3""##);
    }
    let mut entries = vec![("#1f77b4", "slope 1/3".to_string()), ("#2ca02c", "slope 1/2".to_string())];
    if let Some(f) = fit {
        frame.line(&mut svg, 0.0, f.prefactor.ln(), f.exponent, r##"stroke="#d62728" stroke-width="1.5""##);
        entries.push(("#d62728", format!("fit {:.4}", f.exponent)));
    }
    for (x, y) in &pts {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="black"/>"#,
            frame.px(*x),
            frame.py(*y)
        );
    }
    let labels: Vec<(&str, &str)> = entries.iter().map(|(c, l)| (*c, l.as_str())).collect();
    legend(&mut svg, &labels);
    svg.push_str("</svg>\n");
    svg
}

/// GH `ε` and the largest fiber diameter against `t/T`.
pub fn gh_plot(rows: &[GhRow], t_sing: f64) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r.t / t_sing).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    ys.extend(rows.iter().map(|r| r.max_fiber_diam));
    ys.push(0.0);
    let frame = Frame::fit(&xs, &ys);
    let mut svg = open();
    frame.axes(&mut svg, "t / T", "distance");
    for (color, values) in [
        ("#d62728", rows.iter().map(|r| r.epsilon).collect::<Vec<_>>()),
        ("#1f77b4", rows.iter().map(|r| r.max_fiber_diam).collect()),
    ] {
        let path: Vec<String> = xs
            .iter()
            .zip(&values)
            .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
    }
    legend(&mut svg, &[("#d62728", "GH epsilon"), ("#1f77b4", "max fiber diameter")]);
    svg.push_str("</svg>\n");
    svg
}
