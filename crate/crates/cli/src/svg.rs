//! Minimal line plots for a quick look at results.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (80.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    match (lo.is_finite(), hi > lo) {
        (true, true) => (lo, hi),
        (true, false) => (lo - 0.5, lo + 0.5),
        _ => (0.0, 1.0),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot; with `log` both axes are log10 and non-positive points are dropped.
pub fn plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log: bool) -> String {
    let t = |v: f64| if log { if v > 0.0 { v.log10() } else { f64::NAN } } else { v };
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().map(|&v| t(v))));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().map(|&v| t(v))));
    let (l, r, top, b) = MARGIN;
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (W - l - r);
    let py = |y: f64| H - b - (y - y0) / (y1 - y0) * (H - top - b);
    let tick = |v: f64| if log { format!("1e{v:.1}") } else { format!("{v:.4}") };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{l}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - l - r, H - top - b);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(xv), H - b + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 4.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#, H / 2.0, H / 2.0, escape(y_label));
    for (k, series) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let points: Vec<String> = series
            .x
            .iter()
            .zip(series.y)
            .map(|(&x, &y)| (t(x), t(y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#, points.join(" "));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" fill="{colour}">{}</text>"#, l + 8.0, top + 16.0 + 14.0 * k as f64, escape(series.label));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_plot_skips_non_positive_points() {
        let x = [0.0, 1.0, 10.0];
        let y = [1.0, -1.0, 100.0];
        let svg = plot("a < b", "x", "y", &[Series { label: "s", x: &x, y: &y }], true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 1);
    }
}
