//! Log-log error plot.

use super::RateReport;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// MAE against `n` per scenario, first-order MAE dashed, and one reference
/// line of slope `-exponent` per scenario through its first point.
pub fn render(report: &RateReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .aggregates
        .iter()
        .flat_map(|a| [a.mae, a.mae_first_order].into_iter().flatten().map(move |e| (a.n as f64, e)))
        .filter(|(_, e)| *e > 0.0)
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (1.0f64, 10.0f64, 1e-3f64, 1.0f64);
    if !pts.is_empty() {
        x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).log10();
        x1 = pts.iter().map(|p| p.0).fold(0.0, f64::max).log10();
        y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).log10();
        y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).log10();
    } else {
        x0 = x0.log10();
        x1 = x1.log10();
        y0 = y0.log10();
        y1 = y1.log10();
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    let pad_y = ((y1 - y0) * 0.1).max(0.1);
    y0 -= pad_y;
    y1 += pad_y;
    let sx = |lx: f64| PAD + (lx - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |ly: f64| H - PAD - (ly - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M{PAD} {} V{} H{}" stroke="black" fill="none"/>"#,
        PAD,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">log10 n</text>"#,
        W / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" transform="rotate(-90 18 {})" text-anchor="middle">log10 mean absolute error</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (lbl, lx) in [(x0, x0), (x1, x1)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.2}</text>"#,
            sx(lx),
            H - PAD + 16.0,
            lbl
        );
    }
    for ly in [y0, y1] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            PAD - 6.0,
            sy(ly) + 4.0,
            ly
        );
    }

    for (i, sum) in report.summaries.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let aggs: Vec<_> = report.aggregates.iter().filter(|a| a.scenario == sum.scenario).collect();
        for (first, dash) in [(false, ""), (true, r#" stroke-dasharray="5 3""#)] {
            let line: Vec<(f64, f64)> = aggs
                .iter()
                .filter_map(|a| {
                    let e = if first { a.mae_first_order } else { a.mae }?;
                    (e > 0.0).then(|| (sx((a.n as f64).log10()), sy(e.log10())))
                })
                .collect();
            if line.is_empty() {
                continue;
            }
            let d: Vec<String> = line.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let class = if first { "mae-first-order" } else { "mae" };
            let _ = writeln!(
                s,
                r#"<polyline class="{class}" points="{}" stroke="{color}" fill="none"{dash}/>"#,
                d.join(" ")
            );
            if !first {
                for (x, y) in &line {
                    let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
                }
            }
        }
        // anchor at the first available point, or the plot's upper left
        let anchor = aggs
            .iter()
            .find_map(|a| a.mae.filter(|e| *e > 0.0).map(|e| ((a.n as f64).log10(), e.log10())))
            .unwrap_or((x0, y1));
        let slope = -sum.theoretical_exponent;
        let end = (x1, anchor.1 + slope * (x1 - anchor.0));
        let _ = writeln!(
            s,
            r#"<line class="reference" data-scenario="{}" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="1" stroke-dasharray="1 3"/>"#,
            esc(&sum.scenario),
            sx(anchor.0),
            sy(anchor.1),
            sx(end.0),
            sy(end.1)
        );
        let slope_txt = sum.slope.map(|f| format!("{:.3}", f.slope)).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}: slope {} (reference {:.3})</text>"#,
            PAD + 10.0,
            PAD - 30.0 + 14.0 * i as f64,
            esc(&sum.scenario),
            slope_txt,
            slope
        );
    }
    s.push_str("</svg>\n");
    s
}
