//! Minimal deterministic SVG box plots.

use std::fmt::Write as _;

use crate::evalstats::BoxStats;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 36.0;

/// One titled panel of boxes sharing a y axis.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub boxes: Vec<(String, BoxStats)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_range(boxes: &[(String, BoxStats)]) -> (f64, f64) {
    let lo = boxes.iter().map(|(_, b)| b.min).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|(_, b)| b.max).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.01);
    (lo - pad, hi + pad)
}

fn panel(s: &mut String, x0: f64, p: &Panel) {
    let (lo, hi) = y_range(&p.boxes);
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let plot_w = PANEL_W - MARGIN_L - 12.0;
    let y = |v: f64| MARGIN_T + plot_h * (1.0 - (v - lo) / (hi - lo));
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="18" font-size="13" text-anchor="middle">{}</text>"#,
        x0 + MARGIN_L + plot_w / 2.0,
        escape(&p.title)
    );
    let left = x0 + MARGIN_L;
    let _ = writeln!(
        s,
        r#"<line x1="{left:.1}" y1="{:.1}" x2="{left:.1}" y2="{:.1}" stroke="black"/>"#,
        MARGIN_T,
        MARGIN_T + plot_h
    );
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            left - 4.0,
            y(v) + 3.0
        );
    }
    let n = p.boxes.len().max(1) as f64;
    let slot = plot_w / n;
    for (i, (label, b)) in p.boxes.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let half = (slot * 0.3).min(24.0);
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(b.max),
            y(b.min)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="10" text-anchor="middle">{} (n={})</text>"#,
            PANEL_H - 14.0,
            escape(label),
            b.n
        );
    }
}

/// Panels laid out left to right.
pub fn box_plot(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{PANEL_H:.0}" viewBox="0 0 {width:.0} {PANEL_H:.0}" font-family="sans-serif">"#
    );
    for (i, p) in panels.iter().enumerate() {
        panel(&mut s, PANEL_W * i as f64, p);
    }
    s.push_str("</svg>\n");
    s
}
