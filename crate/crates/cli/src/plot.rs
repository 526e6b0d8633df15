//! Plain SVG output: matrix heatmaps and 2-D projections. Plots are for
//! inspection only; nothing downstream reads them.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};

const CELL: f64 = 22.0;
const LABEL_W: f64 = 190.0;
const HEADER_H: f64 = 150.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps `v` in `[lo, hi]` to white..dark blue, or red..white..blue when the
/// range straddles zero.
fn colour(v: f64, lo: f64, hi: f64) -> String {
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    let (r, g, b) = if lo < 0.0 && hi > 0.0 {
        if v < 0.0 {
            let t = (v / lo).clamp(0.0, 1.0);
            (255, lerp(255.0, 60.0, t), lerp(255.0, 60.0, t))
        } else {
            let t = (v / hi).clamp(0.0, 1.0);
            (lerp(255.0, 30.0, t), lerp(255.0, 80.0, t), lerp(255.0, 200.0, t))
        }
    } else {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        (lerp(255.0, 30.0, t), lerp(255.0, 80.0, t), lerp(255.0, 200.0, t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `values` with labelled axes. Rows listed in `flagged` get a
/// marker and a legend line naming the reason.
pub fn heatmap_svg<R: AsRef<str>, C: AsRef<str>>(
    title: &str,
    rows: &[R],
    cols: &[C],
    values: &Array2<f64>,
    range: (f64, f64),
    flagged: &[(usize, String)],
) -> String {
    let (nr, nc) = values.dim();
    let legend_h = 20.0 * (flagged.len() as f64 + 1.0);
    let w = LABEL_W + CELL * nc as f64 + 20.0;
    let h = HEADER_H + CELL * nr as f64 + legend_h + 20.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="10" y="18" font-size="14">{}</text>"#, esc(title)).unwrap();
    for (j, c) in cols.iter().enumerate() {
        let x = LABEL_W + CELL * (j as f64 + 0.6);
        writeln!(
            s,
            r#"<text transform="translate({x},{y}) rotate(-60)">{}</text>"#,
            esc(c.as_ref()),
            y = HEADER_H - 4.0
        )
        .unwrap();
    }
    for (i, r) in rows.iter().enumerate() {
        let y = HEADER_H + CELL * i as f64;
        let mark = if flagged.iter().any(|(f, _)| *f == i) { " *" } else { "" };
        writeln!(
            s,
            r#"<text x="{x}" y="{ty}" text-anchor="end">{}{mark}</text>"#,
            esc(r.as_ref()),
            x = LABEL_W - 6.0,
            ty = y + CELL * 0.7
        )
        .unwrap();
        for j in 0..nc {
            let v = values[[i, j]];
            writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ffffff"><title>{v:.4}</title></rect>"##,
                colour(v, range.0, range.1),
                x = LABEL_W + CELL * j as f64
            )
            .unwrap();
        }
    }
    let mut ly = HEADER_H + CELL * nr as f64 + 18.0;
    writeln!(s, r#"<text x="10" y="{ly}">scale {:.2} to {:.2}</text>"#, range.0, range.1).unwrap();
    for (i, reason) in flagged {
        ly += 20.0;
        let name = rows.get(*i).map_or("", |r| r.as_ref());
        writeln!(s, r#"<text x="10" y="{ly}">* {}: {}</text>"#, esc(name), esc(reason)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Projection of the rows of `points` onto their first two principal axes.
/// Power iteration from a fixed start vector keeps the result deterministic.
pub fn pca_2d(points: &Array2<f64>) -> Array2<f64> {
    let (n, d) = points.dim();
    if n == 0 || d == 0 {
        return Array2::zeros((n, 2));
    }
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let centred = points - &mean;
    let mut cov = centred.t().dot(&centred) / n as f64;
    let mut out = Array2::zeros((n, 2));
    for c in 0..2.min(d) {
        let mut v: Array1<f64> = Array1::from_shape_fn(d, |i| 1.0 + (i as f64 * 0.618).fract());
        let mut lambda = 0.0;
        for _ in 0..500 {
            let next = cov.dot(&v);
            let norm = next.dot(&next).sqrt();
            if norm < 1e-300 {
                break;
            }
            v = next / norm;
            lambda = norm;
        }
        // Fix the sign so the largest component is positive.
        let k = v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map_or(0, |(i, _)| i);
        if v[k] < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        out.column_mut(c).assign(&centred.dot(&v));
        let outer = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        cov = cov - outer * lambda;
    }
    out
}

pub struct PointSet<'a> {
    pub name: &'a str,
    pub colour: &'a str,
    pub labels: Vec<String>,
    pub xy: Array2<f64>,
}

/// Labelled scatter plot of one or more point sets sharing axes.
pub fn scatter_svg(title: &str, sets: &[PointSet<'_>]) -> String {
    let (w, h, pad) = (640.0, 520.0, 50.0);
    let all: Vec<(f64, f64)> = sets
        .iter()
        .flat_map(|s| s.xy.rows().into_iter().map(|r| (r[0], r[1])).collect::<Vec<_>>())
        .collect();
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="10" y="18" font-size="14">{}</text>"#, esc(title)).unwrap();
    for (k, set) in sets.iter().enumerate() {
        writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="4" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            w - 150.0,
            30.0 + 16.0 * k as f64,
            set.colour,
            w - 140.0,
            34.0 + 16.0 * k as f64,
            esc(set.name)
        )
        .unwrap();
        for (label, p) in set.labels.iter().zip(set.xy.rows()) {
            let (x, y) = (sx(p[0]), sy(p[1]));
            writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                set.colour,
                x + 5.0,
                y - 5.0,
                esc(label)
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
