//! CSV and SVG output. Both are pure functions of the row data, so a
//! fixed (config, seed) pair always produces byte-identical files.

use super::ExperimentError;
use std::io::Write;
use std::path::Path;

/// Formats a float to 6 significant digits in plain decimal notation.
pub fn format_significant(value: f64) -> String {
    const DIGITS: i32 = 6;
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".to_string()
        } else if value > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (DIGITS - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Writes an RFC 4180 CSV with the given header; rows must already be in
/// their final order.
pub fn write_csv(
    header: &[&str],
    rows: &[Vec<String>],
    path: &Path,
) -> Result<(), ExperimentError> {
    let io_err = |source: std::io::Error| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = csv::Writer::from_writer(file);
    let csv_err = |source: csv::Error| ExperimentError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(source),
    };
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err)
}

/// One polyline of a chart.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders a static SVG line chart.
pub fn render_line_chart(
    series: &[Series],
    x_label: &str,
    y_label: &str,
    title: &str,
    path: &Path,
) -> Result<(), ExperimentError> {
    let io_err = |source: std::io::Error| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    };
    let points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if points.is_empty() {
        return Err(ExperimentError::Config(
            "nothing to plot: no finite data points".into(),
        ));
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &points {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad_y = 0.05 * (y_max - y_min);
    y_min -= pad_y;
    y_max += pad_y;

    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 440.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 180.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 56.0;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        LEFT + plot_w / 2.0,
        escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{}\" stroke=\"black\"/>\n",
        TOP + plot_h
    ));
    // Ticks: five per axis.
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{y1}\" stroke=\"black\"/>\n<text x=\"{x}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{label}</text>\n",
            x = sx(fx),
            y0 = TOP + plot_h,
            y1 = TOP + plot_h + 5.0,
            ty = TOP + plot_h + 18.0,
            label = format_significant((fx * 1e6).round() / 1e6),
        ));
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{LEFT}\" y2=\"{y}\" stroke=\"black\"/>\n<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{label}</text>\n",
            x0 = LEFT - 5.0,
            y = sy(fy),
            tx = LEFT - 8.0,
            ty = sy(fy) + 4.0,
            label = format_significant((fy * 1e6).round() / 1e6),
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    ));
    // Series.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let path_points: Vec<String> = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
                path_points.join(" ")
            ));
            for (x, y) in &s.points {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.6\" fill=\"{color}\"/>\n",
                    sx(*x),
                    sy(*y)
                ));
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{ly}\" x2=\"{x1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>\n",
            x0 = LEFT + plot_w + 12.0,
            x1 = LEFT + plot_w + 34.0,
            tx = LEFT + plot_w + 40.0,
            ty = ly + 4.0,
            label = escape(&s.label),
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(svg.as_bytes()).map_err(io_err)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0), "0");
        assert_eq!(format_significant(0.75), "0.750000");
        assert_eq!(format_significant(1.0), "1.00000");
        assert_eq!(format_significant(123456.7), "123457");
        assert_eq!(format_significant(0.000123456), "0.000123456");
        assert_eq!(format_significant(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_writer_quotes_fields_with_commas() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_csv(
            &["rule", "value"],
            &[vec!["owa:3:1,0.5".to_string(), "1".to_string()]],
            &path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "rule,value\n\"owa:3:1,0.5\",1\n");
    }

    #[test]
    fn chart_renders_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let series = vec![Series {
            label: "borda n=25".into(),
            points: vec![(0.0, 1.0), (0.5, 0.9), (1.0, 0.8)],
        }];
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        render_line_chart(&series, "lambda", "fraction", "recovery", &a).unwrap();
        render_line_chart(&series, "lambda", "fraction", "recovery", &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert!(std::fs::read_to_string(&a).unwrap().contains("polyline"));
    }
}
