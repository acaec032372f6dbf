//! Minimal SVG line plots and heatmaps.

use std::fmt::Write as _;

use ndarray::Array2;

const W: f64 = 720.0;
const H: f64 = 420.0;
const M: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
            }
        }
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if b.1 <= b.0 {
        b.1 = b.0 + 1.0;
    }
    if b.3 <= b.2 {
        let pad = b.2.abs().max(1.0) * 0.05;
        b.2 -= pad;
        b.3 += pad;
    }
    b
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    for (v, x) in [(x0, M), (x1, W - M)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle" font-size="11">{v:.4}</text>"#, H - M + 16.0);
    }
    for (v, y) in [(y0, H - M), (y1, M)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-size="11">{v:.4}</text>"#, M - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, H - 12.0, esc(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        // NaN breaks the line into segments
        let mut seg = String::new();
        let flush = |seg: &mut String, s: &mut String| {
            if !seg.is_empty() {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, seg.trim_end());
                seg.clear();
            }
        };
        for &(x, y) in &ser.points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(seg, "{:.2},{:.2} ", sx(x), sy(y));
            } else {
                flush(&mut seg, &mut s);
            }
        }
        flush(&mut seg, &mut s);
        let ly = M + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{}</text>"#,
            W - M - 150.0,
            esc(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of `values` (rows = y, top row drawn at the top = largest y).
pub fn heatmap(title: &str, values: &Array2<f64>, extent: (f64, f64, f64, f64)) -> String {
    let (ny, nx) = values.dim();
    let vmax = values.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let side = H - 2.0 * M;
    let (cw, ch) = (side / nx as f64, side / ny as f64);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{H}" viewBox="0 0 {} {H}">"#, side + 2.0 * M, side + 2.0 * M);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, M + side / 2.0, esc(title));
    for j in 0..ny {
        for i in 0..nx {
            let v = (values[[j, i]] / vmax).clamp(0.0, 1.0);
            let level = (255.0 * (1.0 - v)).round() as u8;
            if level == 255 {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({level},{level},255)"/>"#,
                M + i as f64 * cw,
                M + (ny - 1 - j) as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let (x0, x1, y0, y1) = extent;
    let _ = writeln!(s, r#"<rect x="{M}" y="{M}" width="{side}" height="{side}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{M}" y="{}" font-size="11">x: {x0:.2} .. {x1:.2}</text>"#, M + side + 16.0);
    let _ = writeln!(s, r#"<text x="{M}" y="{}" font-size="11">y: {y0:.2} .. {y1:.2}</text>"#, M + side + 30.0);
    s.push_str("</svg>\n");
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
