//! Self-contained log-log SVG plots for the convergence studies.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

/// Writes a log2-log2 plot of the error series with dashed reference-slope
/// guide lines.
pub fn write_loglog_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    series: &[Series],
    guide_slopes: &[f64],
) -> Result<()> {
    std::fs::write(path, render_loglog_plot(title, x_label, series, guide_slopes))?;
    Ok(())
}

pub fn render_loglog_plot(
    title: &str,
    x_label: &str,
    series: &[Series],
    guide_slopes: &[f64],
) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.xs.iter().zip(&s.ys).map(|(&x, &y)| (x.log2(), y.log2())))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x_lo, mut x_hi) = (-1.0f64, 1.0f64);
    let (mut y_lo, mut y_hi) = (-1.0f64, 1.0f64);
    if !pts.is_empty() {
        x_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 0.5;
        x_hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 0.5;
        y_lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - 1.0;
        y_hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    }
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    write!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        title
    )
    .unwrap();

    // axes and ticks at integer log2 values
    write!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    )
    .unwrap();
    let mut k = x_lo.ceil() as i64;
    while (k as f64) <= x_hi {
        let x = px(k as f64);
        write!(
            svg,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="rgb(221,221,221)"/>"#,
            MARGIN_T,
            HEIGHT - MARGIN_B
        )
        .unwrap();
        write!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">2^{k}</text>"#,
            HEIGHT - MARGIN_B + 16.0
        )
        .unwrap();
        k += 1;
    }
    let mut k = y_lo.ceil() as i64;
    let y_step = (((y_hi - y_lo) / 10.0).ceil() as i64).max(1);
    while (k as f64) <= y_hi {
        let y = py(k as f64);
        write!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{y}" x2="{}" y2="{y}" stroke="rgb(221,221,221)"/>"#,
            WIDTH - MARGIN_R
        )
        .unwrap();
        write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">2^{k}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0
        )
        .unwrap();
        k += y_step;
    }
    write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        x_label
    )
    .unwrap();
    write!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">error</text>"#,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    )
    .unwrap();

    // dashed reference-slope guides anchored at the first series' last point
    if let Some(s0) = series.iter().find(|s| !s.xs.is_empty()) {
        let xa = s0.xs[s0.xs.len() - 1].log2();
        let ya = s0.ys[s0.ys.len() - 1].log2();
        for (gi, &slope) in guide_slopes.iter().enumerate() {
            let offset = 0.6 * (gi as f64 + 1.0);
            let y_at = |x: f64| ya + slope * (x - xa) - offset;
            write!(
                svg,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="6 4"/>"#,
                px(x_lo + 0.3),
                py(y_at(x_lo + 0.3)),
                px(x_hi - 0.3),
                py(y_at(x_hi - 0.3))
            )
            .unwrap();
            write!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="gray">slope {slope}</text>"#,
                px(x_hi - 0.3) + 4.0,
                py(y_at(x_hi - 0.3))
            )
            .unwrap();
        }
    }

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let mut path_d = String::new();
        for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
            let (sx, sy) = (px(x.log2()), py(y.log2()));
            write!(path_d, "{}{sx},{sy} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        write!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            path_d.trim_end()
        )
        .unwrap();
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            write!(
                svg,
                r#"<circle cx="{}" cy="{}" r="3.2" fill="{color}"/>"#,
                px(x.log2()),
                py(y.log2())
            )
            .unwrap();
        }
        let ly = MARGIN_T + 16.0 + 18.0 * si as f64;
        write!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            WIDTH - MARGIN_R + 8.0,
            WIDTH - MARGIN_R + 28.0
        )
        .unwrap();
        write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            WIDTH - MARGIN_R + 32.0,
            ly + 4.0,
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_series_and_guides() {
        let series = vec![
            Series {
                label: "velocity".into(),
                xs: vec![0.25, 0.125, 0.0625],
                ys: vec![1e-2, 5e-3, 2.5e-3],
            },
            Series {
                label: "pressure".into(),
                xs: vec![0.25, 0.125, 0.0625],
                ys: vec![1e-1, 5e-2, 2.6e-2],
            },
        ];
        let svg = render_loglog_plot("study", "tau", &series, &[0.5, 1.0, 2.0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("velocity"));
        assert!(svg.contains("slope 0.5"));
        assert!(svg.contains("slope 2"));
        assert_eq!(svg.matches("<circle").count(), 6);
    }

    #[test]
    fn empty_series_still_renders_a_frame() {
        let svg = render_loglog_plot("empty", "h", &[], &[1.0]);
        assert!(svg.contains("<rect"));
    }
}
