//! Minimal SVG writers: log-log residual curves and height-field contour maps.
//! Coordinates are printed with fixed precision so output is byte-stable.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Residual against grid spacing on log-log axes, with the fitted order.
/// Nonpositive values are dropped.
pub fn loglog(title: &str, spacing: &[f64], values: &[f64], order: Option<f64>) -> String {
    let pts: Vec<(f64, f64)> = spacing
        .iter()
        .zip(values)
        .filter(|(h, v)| **h > 0.0 && **v > 0.0)
        .map(|(h, v)| (h.log10(), v.log10()))
        .collect();
    let mut out = String::new();
    header(&mut out, title);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let _ = writeln!(out, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">grid spacing</text>", LEFT + pw / 2.0, H - 12.0);
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">max residual</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    if pts.is_empty() {
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">all residuals zero</text>", LEFT + pw / 2.0, TOP + ph / 2.0);
        out.push_str("</svg>\n");
        return out;
    }
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        ((lo - 0.25).floor(), (hi + 0.25).ceil())
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    for d in (x0 as i64)..=(x1 as i64) {
        let x = sx(d as f64);
        let _ = writeln!(out, "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#ddd\"/>", TOP, TOP + ph);
        let _ = writeln!(out, "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>", TOP + ph + 16.0);
    }
    for d in (y0 as i64)..=(y1 as i64) {
        let y = sy(d as f64);
        let _ = writeln!(out, "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>", LEFT + pw);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">1e{d}</text>", LEFT - 6.0, y + 4.0);
    }
    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
    let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\"/>", path.join(" "));
    for (x, y) in &pts {
        let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#1f4e9c\"/>", sx(*x), sy(*y));
    }
    let label = match order {
        Some(p) => format!("fitted order {p:.2}"),
        None => "fitted order n/a".to_string(),
    };
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>", LEFT + pw - 8.0, TOP + 18.0);
    out.push_str("</svg>\n");
    out
}

fn color(t: f64) -> String {
    // blue - white - red
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (40.0 + 215.0 * s, 80.0 + 175.0 * s, 200.0 + 55.0 * s)
    } else {
        let s = (t - 0.5) / 0.5;
        (255.0 - 35.0 * s, 255.0 - 195.0 * s, 255.0 - 215.0 * s)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Heat map of a row-major `nx x ny` field (first index along x) with
/// marching-squares contour lines at `levels` evenly spaced values.
pub fn contour(title: &str, field: &[f64], nx: usize, ny: usize, levels: usize) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let side = (W - LEFT - RIGHT).min(H - TOP - BOTTOM);
    let (cw, ch) = (side / nx as f64, side / ny as f64);
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let amp = lo.abs().max(hi.abs());
    let norm = |v: f64| if amp > 0.0 { 0.5 + 0.5 * v / amp } else { 0.5 };
    let at = |i: usize, j: usize| field[i * ny + j];
    for i in 0..nx {
        for j in 0..ny {
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                LEFT + i as f64 * cw,
                TOP + (ny - 1 - j) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                color(norm(at(i, j)))
            );
        }
    }
    // cell centers
    let px = |i: f64| LEFT + (i + 0.5) * cw;
    let py = |j: f64| TOP + (ny as f64 - 0.5 - j) * ch;
    if hi > lo {
        for l in 1..=levels {
            let c = lo + (hi - lo) * l as f64 / (levels + 1) as f64;
            let mut d = String::new();
            for i in 0..nx.saturating_sub(1) {
                for j in 0..ny.saturating_sub(1) {
                    let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                    let mut cross = Vec::with_capacity(4);
                    for e in 0..4 {
                        let (a, b) = (corners[e], corners[(e + 1) % 4]);
                        let (va, vb) = (at(a.0, a.1), at(b.0, b.1));
                        if (va < c) != (vb < c) {
                            let s = (c - va) / (vb - va);
                            let x = a.0 as f64 + s * (b.0 as f64 - a.0 as f64);
                            let y = a.1 as f64 + s * (b.1 as f64 - a.1 as f64);
                            cross.push((px(x), py(y)));
                        }
                    }
                    for seg in cross.chunks_exact(2) {
                        let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", seg[0].0, seg[0].1, seg[1].0, seg[1].1);
                    }
                }
            }
            if !d.is_empty() {
                let _ = writeln!(out, "<path d=\"{d}\" fill=\"none\" stroke=\"black\" stroke-width=\"0.7\"/>");
            }
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">range [{lo:.3e}, {hi:.3e}]</text>",
        LEFT + side / 2.0,
        TOP + side + 24.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_annotates_order() {
        let s = loglog("t", &[0.2, 0.1, 0.05], &[4e-2, 1e-2, 2.5e-3], Some(2.0));
        assert!(s.contains("fitted order 2.00"));
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(loglog("t", &[0.1], &[0.0], None).contains("all residuals zero"));
    }

    #[test]
    fn contour_draws_every_cell() {
        let f: Vec<f64> = (0..16).map(|p| (p / 4) as f64 - 1.5).collect();
        let s = contour("u", &f, 4, 4, 3);
        assert_eq!(s.matches("<rect").count(), 17);
        assert!(s.contains("<path"));
        assert_eq!(s, contour("u", &f, 4, 4, 3));
    }
}
