//! Hand-emitted SVG plots: static markup, no plotting dependency, no
//! timestamps, numbers at six significant digits.

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Six significant digits; exact for the magnitudes the reports emit.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn header(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    )
}

fn panel_frame(out: &mut String, y_offset: f64, title: &str) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = y_offset + MARGIN_TOP;
    let y1 = y_offset + PANEL_HEIGHT - MARGIN_BOTTOM;
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\">{}</text>\n",
        x0,
        y_offset + 20.0,
        title
    ));
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"#333\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#333\"/>\n"
    ));
}

/// One polyline per series over a shared x grid. Each series is
/// normalized to [0, 1] over its own range; the legend keeps the raw
/// extent readable.
pub fn line_plot(title: &str, x_label: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let mut out = header(PANEL_HEIGHT);
    panel_frame(&mut out, 0.0, title);
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = MARGIN_TOP;
    let y1 = PANEL_HEIGHT - MARGIN_BOTTOM;

    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let to_x = |v: f64| x0 + (v - x_min) / span * (x1 - x0);
    let to_y = |norm: f64| y1 - norm * (y1 - y0);

    for (i, &x) in xs.iter().enumerate() {
        let px = to_x(x);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{y1}\" x2=\"{px}\" y2=\"{}\" stroke=\"#999\"/>\n",
            y1 + 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            y1 + 18.0,
            format_sig(x)
        ));
        let _ = i;
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        (x0 + x1) / 2.0,
        y1 + 36.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" transform=\"rotate(-90 16 {})\">normalized per metric</text>\n",
        16.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    ));

    for (s, (label, values)) in series.iter().enumerate() {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm = |v: f64| {
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.5
            }
        };
        let points: Vec<String> = xs
            .iter()
            .zip(values)
            .map(|(&x, &v)| format!("{},{}", format_sig(to_x(x)), format_sig(to_y(norm(v)))))
            .collect();
        let color = COLORS[s % COLORS.len()];
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{label} [{} .. {}]</text>\n",
            x0 + 8.0,
            y0 + 16.0 + 16.0 * s as f64,
            format_sig(lo),
            format_sig(hi)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Two stacked bar panels sharing the same group labels.
pub fn double_bar_chart(
    titles: (&str, &str),
    labels: &[String],
    top_values: &[f64],
    bottom_values: &[f64],
) -> String {
    let mut out = header(2.0 * PANEL_HEIGHT);
    for (panel, (title, values)) in [(titles.0, top_values), (titles.1, bottom_values)]
        .into_iter()
        .enumerate()
    {
        let y_offset = panel as f64 * PANEL_HEIGHT;
        panel_frame(&mut out, y_offset, title);
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = y_offset + MARGIN_TOP;
        let y1 = y_offset + PANEL_HEIGHT - MARGIN_BOTTOM;
        let finite_max = values
            .iter()
            .cloned()
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max);
        let peak = if finite_max > 0.0 { finite_max } else { 1.0 };
        let slot = (x1 - x0) / labels.len() as f64;
        for (i, (label, &value)) in labels.iter().zip(values).enumerate() {
            let color = COLORS[i % COLORS.len()];
            let cx = x0 + slot * (i as f64 + 0.5);
            let bar_w = slot * 0.6;
            if value.is_finite() {
                let bar_h = (value / peak).max(0.0) * (y1 - y0);
                out.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>\n",
                    format_sig(cx - bar_w / 2.0),
                    format_sig(y1 - bar_h),
                    format_sig(bar_w),
                    format_sig(bar_h)
                ));
                out.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                    format_sig(cx),
                    format_sig(y1 - bar_h - 6.0),
                    format_sig(value)
                ));
            } else {
                out.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">diverged</text>\n",
                    format_sig(cx),
                    format_sig(y1 - 8.0)
                ));
            }
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
                format_sig(cx),
                format_sig(y1 + 18.0)
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}
