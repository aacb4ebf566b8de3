//! Native SVG emission for the three diagnostic panels: no plotting
//! dependency, deterministic output for fixed input.

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
/// Floor for log-scale axes; zero or negative values are clamped here.
pub const LOG_FLOOR: f64 = 1e-16;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn fmt(x: f64) -> String {
    format!("{x:.3}")
}

/// Multi-series line plot. With `log_y`, values are clamped at
/// [`LOG_FLOOR`] and a footnote marks the clamping.
pub fn line_plot(
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_y: bool,
) -> Result<String> {
    if series.is_empty() || series.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(Error::Domain("no data to plot".into()));
    }
    let transform = |y: f64| -> f64 {
        if log_y {
            y.max(LOG_FLOOR).log10()
        } else {
            y
        }
    };
    let mut clamped = false;
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            if log_y && y <= LOG_FLOOR {
                clamped = true;
            }
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            let ty = transform(y);
            ymin = ymin.min(ty);
            ymax = ymax.max(ty);
        }
    }
    if !xmin.is_finite() {
        return Err(Error::Domain("no finite data to plot".into()));
    }
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax == ymin {
        ymax = ymin + 1.0;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - (transform(y) - ymin) / (ymax - ymin)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        title
    ));
    // Axes frame.
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        MARGIN_L, MARGIN_T, plot_w, plot_h
    ));
    // Min/max axis labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
        MARGIN_L,
        HEIGHT - MARGIN_B + 16.0,
        fmt(xmin)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        MARGIN_L + plot_w,
        HEIGHT - MARGIN_B + 16.0,
        fmt(xmax)
    ));
    let ylab = |v: f64| if log_y { format!("1e{}", fmt(v)) } else { fmt(v) };
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        MARGIN_L - 6.0,
        MARGIN_T + 12.0,
        ylab(ymax)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        MARGIN_L - 6.0,
        MARGIN_T + plot_h,
        ylab(ymin)
    ));

    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        // Legend entry.
        let ly = MARGIN_T + 16.0 * (i as f64 + 1.0);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            label
        ));
    }
    if clamped {
        out.push_str(&format!(
            "<text x=\"{MARGIN_L}\" y=\"{}\" font-size=\"10\" fill=\"#555\">values at or below {LOG_FLOOR:e} clamped to the axis floor</text>\n",
            HEIGHT - 10.0
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Histogram with exactly `bins` rect elements.
pub fn histogram(title: &str, values: &[f64], bins: usize) -> Result<String> {
    if values.is_empty() {
        return Err(Error::Domain("no data to plot".into()));
    }
    assert!(bins >= 1);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Domain("no finite data to plot".into()));
    }
    let mut lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let mut counts = vec![0usize; bins];
    for &v in &finite {
        let idx = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let max_count = *counts.iter().max().unwrap() as f64;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let bar_w = plot_w / bins as f64;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        title
    ));
    out.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        MARGIN_L, MARGIN_T, plot_w, plot_h
    ));
    for (i, &c) in counts.iter().enumerate() {
        let h = if max_count > 0.0 {
            c as f64 / max_count * plot_h
        } else {
            0.0
        };
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"white\"/>\n",
            fmt(MARGIN_L + i as f64 * bar_w),
            fmt(MARGIN_T + plot_h - h),
            fmt(bar_w),
            fmt(h),
            PALETTE[0]
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
        MARGIN_L,
        HEIGHT - MARGIN_B + 16.0,
        fmt(lo)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
        MARGIN_L + plot_w,
        HEIGHT - MARGIN_B + 16.0,
        fmt(hi)
    ));
    out.push_str("</svg>\n");
    Ok(out)
}
