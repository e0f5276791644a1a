//! Minimal fixed-size SVG scatter plots.

use std::fmt::Write as _;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 16.0;
const TITLE: f64 = 22.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// One scatter panel: `(x, y, colour index)` per point.
pub struct Panel {
    pub title: String,
    pub points: Vec<(f64, f64, usize)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Panels side by side, each scaled to its own bounding box.
pub fn render(panels: &[Panel]) -> String {
    let width = PANEL * panels.len() as f64;
    let height = PANEL + TITLE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, panel) in panels.iter().enumerate() {
        let x0 = p as f64 * PANEL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="16" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            x0 + PANEL / 2.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{TITLE}" width="{}" height="{}" fill="none" stroke="#cccccc"/>"##,
            x0 + 2.0,
            PANEL - 4.0,
            PANEL - 4.0
        );
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &(x, y, _) in &panel.points {
            lo = [lo[0].min(x), lo[1].min(y)];
            hi = [hi[0].max(x), hi[1].max(y)];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let scale = (PANEL - 2.0 * MARGIN) / span;
        let (cx, cy) = (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]));
        for &(x, y, c) in &panel.points {
            let px = x0 + PANEL / 2.0 + (x - cx) * scale;
            let py = TITLE + PANEL / 2.0 - (y - cy) * scale;
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.6" fill="{}" fill-opacity="0.7"/>"#,
                PALETTE[c % PALETTE.len()]
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
