//! Plain-text tables, CSV emission, and the SVG line plot.
//!
//! Rendering is a pure function of its inputs so a report regenerated from
//! stored records is byte-identical to the original.

use std::fmt::Write as _;

/// Format a float with six significant digits (shared with the tick logs).
pub fn sig6(x: f64) -> String {
    linesim_core::sim::fmt_sig(x)
}

/// An aligned plain-text table with a title row.
pub fn text_table(title: &str, headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let mut header_line = String::from("  ");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(header_line, "{h:<w$}  ");
    }
    let _ = writeln!(out, "{}", header_line.trim_end());
    let rule_len = header_line.trim_end().len();
    let _ = writeln!(out, "  {}", "-".repeat(rule_len.saturating_sub(2)));
    for row in rows {
        let mut line = String::from("  ");
        for (cell, w) in row.iter().zip(&widths) {
            let _ = write!(line, "{cell:<w$}  ");
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}

/// CSV with a header row; cells are written verbatim.
pub fn csv_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", headers.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// One plot series: points plus a legend label.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
}

/// Minimal deterministic SVG line plot with axes, ticks, and a legend.
pub fn svg_line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> String {
    let (w, h) = (720.0, 360.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 36.0, 46.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let sx = move |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
    let sy = move |y: f64| mt + (y_max - y) / (y_max - y_min) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        title
    );
    // Axes.
    let _ = writeln!(
        svg,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>"
    );
    for i in 0..=5 {
        let fx = x_min + (x_max - x_min) * i as f64 / 5.0;
        let px = sx(fx);
        let _ = writeln!(
            svg,
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#ccc\"/>",
            mt,
            mt + ph
        );
        let _ = writeln!(
            svg,
            "<text x=\"{px}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            mt + ph + 16.0,
            sig6(fx)
        );
        let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
        let py = sy(fy);
        let _ = writeln!(
            svg,
            "<line x1=\"{ml}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#ccc\"/>",
            ml + pw
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            ml - 6.0,
            py + 4.0,
            sig6(fy)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        ml + pw / 2.0,
        h - 8.0,
        x_label
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        mt + ph / 2.0,
        mt + ph / 2.0,
        y_label
    );
    // Series.
    for s in series {
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2} ",
                if i == 0 { "M" } else { "L" },
                sx(x),
                sy(y)
            );
        }
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            path.trim_end(),
            s.color
        );
    }
    // Legend.
    for (i, s) in series.iter().enumerate() {
        let ly = mt + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"/>",
            ml + pw - 170.0,
            ml + pw - 146.0,
            s.color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">{}</text>",
            ml + pw - 140.0,
            ly + 4.0,
            s.label
        );
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = text_table(
            "Demo",
            &["name", "value"],
            &[
                vec!["a".into(), "1".into()],
                vec!["longer".into(), "2.5".into()],
            ],
        );
        assert!(t.contains("Demo"));
        assert!(t.contains("longer"));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn svg_is_deterministic() {
        let s = vec![Series {
            label: "x".into(),
            points: vec![(0.0, 0.0), (1.0, 1.0)],
            color: "#1f77b4",
        }];
        assert_eq!(
            svg_line_plot("t", "x", "y", &s),
            svg_line_plot("t", "x", "y", &s)
        );
    }
}
