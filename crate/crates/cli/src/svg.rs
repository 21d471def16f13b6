//! Self-contained SVG line charts: first column on x, every other column as a
//! polyline. Non-finite points are skipped.

use std::fmt::Write;

use logkdv_core::harness::Curve;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

pub fn line_chart(curve: &Curve) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    out.push('\n');
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{PAD}" y="20" font-size="13">{}</text>"#, curve.name);
    let xr = range(curve.rows.iter().map(|r| r[0]));
    let yr = range(curve.rows.iter().flat_map(|r| r[1..].iter().copied()));
    let (Some((x0, x1)), Some((y0, y1))) = (xr, yr) else {
        out.push_str("</svg>\n");
        return out;
    };
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}">{x0:.4e}</text>"#, H - PAD + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{x1:.4e}</text>"#, W - PAD, H - PAD + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3e}</text>"#, PAD - 4.0, H - PAD);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{y1:.3e}</text>"#, PAD - 4.0, PAD + 8.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, curve.header[0]);
    for (k, label) in curve.header.iter().enumerate().skip(1) {
        let colour = COLOURS[(k - 1) % COLOURS.len()];
        let points: Vec<String> = curve
            .rows
            .iter()
            .filter(|r| r[0].is_finite() && r[k].is_finite())
            .map(|r| format!("{:.2},{:.2}", sx(r[0]), sy(r[k])))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#, points.join(" "));
        let _ = writeln!(out, r#"<text x="{}" y="{}" fill="{colour}">{label}</text>"#, W - PAD + 4.0, PAD + 14.0 * k as f64);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_polyline_per_series() {
        let mut c = Curve::new("demo", &["t", "a", "b"]);
        for i in 0..5 {
            let t = i as f64;
            c.push(vec![t, t * t, if i == 2 { f64::NAN } else { -t }]);
        }
        let svg = line_chart(&c);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_curve_still_renders() {
        let c = Curve::new("empty", &["x", "y"]);
        assert!(line_chart(&c).ends_with("</svg>\n"));
    }
}
