//! SVG scatter of error ratios vs N: sweep series as circles (boarding)
//! and squares (alighting), empirical pairs as crosses, and the √N guide
//! as a dashed curve. Text-based output, stable across runs, so report
//! files can be golden-tested.

use std::fmt::Write as _;

use crate::experiment::{EmpiricalPoint, SweepPoint};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;

const BOARDING_COLOR: &str = "#c62828";
const ALIGHTING_COLOR: &str = "#1565c0";

struct Scale {
    x_max: f64,
    y_max: f64,
}

impl Scale {
    fn x(&self, n: f64) -> f64 {
        MARGIN_LEFT + n / self.x_max * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, ratio: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - ratio / self.y_max * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the ratio-vs-N report plot.
pub fn render_report(sweep: &[SweepPoint], empirical: &[EmpiricalPoint]) -> String {
    let mut x_max: f64 = 10.0;
    let mut y_max: f64 = 1.0;
    for p in sweep {
        x_max = x_max.max(p.n_stops as f64);
        y_max = y_max.max(p.mean_ratio_in).max(p.mean_ratio_out);
    }
    for p in empirical {
        x_max = x_max.max(p.n_stops as f64);
        y_max = y_max.max(p.ratio_in.unwrap_or(0.0)).max(p.ratio_out.unwrap_or(0.0));
    }
    let scale = Scale { x_max: x_max * 1.05, y_max: y_max * 1.1 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // axes
    let x0 = MARGIN_LEFT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_TOP}" stroke="black"/>"#
    );
    for k in 0..=5 {
        let n = scale.x_max / 5.0 * k as f64;
        let x = scale.x(n);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y0}" x2="{}" y2="{}" stroke="black"/><text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            fmt(x),
            fmt(x),
            fmt(y0 + 5.0),
            fmt(x),
            fmt(y0 + 20.0),
            fmt(n)
        );
        let r = scale.y_max / 5.0 * k as f64;
        let y = scale.y(r);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{x0}" y2="{}" stroke="black"/><text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
            fmt(x0 - 5.0),
            fmt(y),
            fmt(y),
            fmt(x0 - 8.0),
            fmt(y + 4.0),
            fmt(r)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">number of stops N</text>"#,
        fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt(HEIGHT - 10.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 15 {})">error ratio</text>"#,
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0)
    );

    // sqrt(N) guide
    let mut guide = String::new();
    let steps = 100;
    for k in 0..=steps {
        let n = scale.x_max * k as f64 / steps as f64;
        let r = n.sqrt();
        if r <= scale.y_max {
            let _ = write!(guide, "{},{} ", fmt(scale.x(n)), fmt(scale.y(r)));
        }
    }
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="gray" stroke-dasharray="6,4"/>"#,
        guide.trim_end()
    );

    for p in sweep {
        let x = scale.x(p.n_stops as f64);
        let _ = writeln!(
            svg,
            r#"<circle cx="{}" cy="{}" r="4" fill="none" stroke="{BOARDING_COLOR}"/>"#,
            fmt(x),
            fmt(scale.y(p.mean_ratio_in))
        );
        let y = scale.y(p.mean_ratio_out);
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="8" height="8" fill="none" stroke="{ALIGHTING_COLOR}"/>"#,
            fmt(x - 4.0),
            fmt(y - 4.0)
        );
    }

    for p in empirical {
        let x = scale.x(p.n_stops as f64);
        for (ratio, color) in [(p.ratio_in, BOARDING_COLOR), (p.ratio_out, ALIGHTING_COLOR)] {
            if let Some(r) = ratio {
                let y = scale.y(r);
                let _ = writeln!(
                    svg,
                    r#"<path d="M {} {} L {} {} M {} {} L {} {}" stroke="{color}" stroke-width="2"/>"#,
                    fmt(x - 7.0),
                    fmt(y - 7.0),
                    fmt(x + 7.0),
                    fmt(y + 7.0),
                    fmt(x - 7.0),
                    fmt(y + 7.0),
                    fmt(x + 7.0),
                    fmt(y - 7.0)
                );
            }
        }
    }

    svg.push_str("</svg>\n");
    svg
}
