//! Standalone SVG rendering: correlation heatmaps, ROC curves and the
//! three-column overlap panel. Output is a pure function of the input (no
//! timestamps), so files are byte-stable across runs.

use std::fmt::Write;

use coreg_core::SymmetricMatrix;

pub const NEGATIVE: [u8; 3] = [0x21, 0x66, 0xac];
pub const NEUTRAL: [u8; 3] = [0xff, 0xff, 0xff];
pub const POSITIVE: [u8; 3] = [0xb2, 0x18, 0x2b];

/// Larger matrices are averaged into this many bins per side.
pub const MAX_HEATMAP_CELLS: usize = 200;

const PALETTE: [&str; 6] = ["#b2182b", "#2166ac", "#1b7837", "#762a83", "#e08214", "#4d4d4d"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Diverging map on the fixed scale [−1, 1]: blue → white → red. Values
/// outside the scale are clamped; NaN renders neutral.
pub fn diverging_color(v: f64) -> String {
    if v.is_nan() {
        return hex(NEUTRAL);
    }
    let v = v.clamp(-1.0, 1.0);
    let (end, t) = if v < 0.0 { (NEGATIVE, -v) } else { (POSITIVE, v) };
    let mix = |i: usize| (NEUTRAL[i] as f64 + (end[i] as f64 - NEUTRAL[i] as f64) * t).round() as u8;
    hex([mix(0), mix(1), mix(2)])
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    )
}

/// Heatmap of `m` with rows/columns in `perm` order (identity when `None`).
/// Above [`MAX_HEATMAP_CELLS`] the permuted matrix is block-averaged.
/// Horizontal runs of equal colour are merged into one rectangle.
pub fn render_heatmap(m: &SymmetricMatrix, perm: Option<&[usize]>, title: &str) -> String {
    let p = m.dim();
    let order: Vec<usize> = perm.map_or_else(|| (0..p).collect(), <[usize]>::to_vec);
    let bins = p.min(MAX_HEATMAP_CELLS);
    let bin_of = |i: usize| i * bins / p.max(1);
    let mut sum = vec![0.0; bins * bins];
    let mut cnt = vec![0usize; bins * bins];
    for (a, &i) in order.iter().enumerate() {
        for (b, &j) in order.iter().enumerate() {
            let k = bin_of(a) * bins + bin_of(b);
            sum[k] += m.get(i, j);
            cnt[k] += 1;
        }
    }

    let (margin, top, size) = (10.0, 30.0, 600.0);
    let cell = size / bins.max(1) as f64;
    let mut s = header(size + 2.0 * margin, size + top + margin);
    let _ = writeln!(
        s,
        "<title>{}</title>\n<text x=\"{margin}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{} ({p}×{p}, scale −1 to 1)</text>",
        esc(title),
        esc(title)
    );
    let _ = writeln!(s, "<g shape-rendering=\"crispEdges\">");
    for r in 0..bins {
        let mut c = 0;
        while c < bins {
            let color = diverging_color(sum[r * bins + c] / cnt[r * bins + c].max(1) as f64);
            let mut end = c + 1;
            while end < bins && diverging_color(sum[r * bins + end] / cnt[r * bins + end].max(1) as f64) == color {
                end += 1;
            }
            let _ = writeln!(
                s,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{color}\"/>",
                margin + c as f64 * cell,
                top + r as f64 * cell,
                (end - c) as f64 * cell,
                cell
            );
            c = end;
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// ROC curves as polylines on the unit square with ticks every 0.1.
pub fn render_roc(curves: &[(String, Vec<(f64, f64)>)], title: &str) -> String {
    let (left, top, size) = (60.0, 40.0, 400.0);
    let px = |x: f64| left + x.clamp(0.0, 1.0) * size;
    let py = |y: f64| top + (1.0 - y.clamp(0.0, 1.0)) * size;
    let mut s = header(left + size + 160.0, top + size + 60.0);
    let _ = writeln!(
        s,
        "<title>{}</title>\n<text x=\"{left}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        esc(title),
        esc(title)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#000\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>",
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{y0:.1}\" x2=\"{x:.1}\" y2=\"{y1:.1}\" stroke=\"#000\"/><text x=\"{x:.1}\" y=\"{yt:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{t:.1}</text>",
            x = px(t),
            y0 = py(0.0),
            y1 = py(0.0) + 5.0,
            yt = py(0.0) + 17.0
        );
        let _ = writeln!(
            s,
            "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" stroke=\"#000\"/><text x=\"{xt:.1}\" y=\"{yb:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{t:.1}</text>",
            x0 = px(0.0) - 5.0,
            x1 = px(0.0),
            y = py(t),
            xt = px(0.0) - 8.0,
            yb = py(t) + 3.5
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">false positive rate</text>",
        px(0.5),
        py(0.0) + 38.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">true positive rate</text>",
        py(0.5),
        py(0.5)
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            points.join(" ")
        );
        let ly = top + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            left + size + 15.0,
            left + size + 40.0,
            left + size + 45.0,
            ly + 4.0,
            esc(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One method's row in the overlap panel: mean counts and their shares of
/// the mean union.
#[derive(Debug, Clone)]
pub struct VennRow {
    pub label: String,
    pub only_arm1: f64,
    pub intersection: f64,
    pub only_arm2: f64,
    pub proportions: [f64; 3],
}

/// Three-column count panel (only arm 1 | both | only arm 2), one row per
/// method. Exact numbers are printed; column bars are proportional.
pub fn render_venn_panel(rows: &[VennRow], arm_labels: [&str; 2], title: &str) -> String {
    let (left, top, col, row_h) = (140.0, 70.0, 180.0, 50.0);
    let width = left + 3.0 * col + 20.0;
    let height = top + row_h * rows.len() as f64 + 20.0;
    let mut s = header(width, height);
    let _ = writeln!(
        s,
        "<title>{}</title>\n<text x=\"10\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        esc(title),
        esc(title)
    );
    let heads = [
        format!("only {}", arm_labels[0]),
        "both".to_string(),
        format!("only {}", arm_labels[1]),
    ];
    let fills = ["#92c5de", "#b8a0cf", "#f4a582"];
    for (c, h) in heads.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" font-weight=\"bold\" text-anchor=\"middle\">{}</text>",
            left + (c as f64 + 0.5) * col,
            top - 12.0,
            esc(h)
        );
    }
    for (r, row) in rows.iter().enumerate() {
        let y = top + r as f64 * row_h;
        let _ = writeln!(
            s,
            "<text x=\"10\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            y + row_h / 2.0 + 4.0,
            esc(&row.label)
        );
        let counts = [row.only_arm1, row.intersection, row.only_arm2];
        for c in 0..3 {
            let x = left + c as f64 * col;
            let frac = if row.proportions[c].is_finite() {
                row.proportions[c].clamp(0.0, 1.0)
            } else {
                0.0
            };
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#999\"/><rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.2}\" height=\"{:.1}\" fill=\"{}\"/>",
                x + 4.0,
                y + 4.0,
                col - 8.0,
                row_h - 8.0,
                x + 4.0,
                y + 4.0,
                (col - 8.0) * frac,
                row_h - 8.0,
                fills[c]
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{:.2} ({:.1}%)</text>",
                x + col / 2.0,
                y + row_h / 2.0 + 4.0,
                counts[c],
                100.0 * row.proportions[c]
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(diverging_color(1.0), "#b2182b");
        assert_eq!(diverging_color(-1.0), "#2166ac");
        assert_eq!(diverging_color(0.0), "#ffffff");
        assert_eq!(diverging_color(3.0), "#b2182b");
        assert_eq!(diverging_color(f64::NAN), "#ffffff");
    }

    #[test]
    fn large_matrix_is_binned() {
        let m = SymmetricMatrix::identity(450);
        let svg = render_heatmap(&m, None, "big");
        // Each bin row: at most diagonal run plus the two neutral runs.
        assert!(svg.matches("<rect").count() <= 3 * MAX_HEATMAP_CELLS);
    }

    #[test]
    fn escapes_titles() {
        let svg = render_roc(&[("a<b".into(), vec![(0.0, 0.0), (1.0, 1.0)])], "x & y");
        assert!(svg.contains("a&lt;b") && svg.contains("x &amp; y"));
    }
}
