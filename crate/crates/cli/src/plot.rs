//! Static SVG plots: one panel per state component (all robots, time on the
//! horizontal axis) and, when there are few, one panel per coupled pair's
//! distance. Temporal-operator windows are shaded.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use maps2::formula::Formula;
use maps2::{RobotId, TrajectoryFile};

const WIDTH: f64 = 900.0;
const PANEL: f64 = 200.0;
const GAP: f64 = 40.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 60.0;
const TOP: f64 = 30.0;
const MAX_PAIR_PANELS: usize = 12;
const COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Panel {
    title: String,
    series: Vec<Series>,
}

/// Absolute windows `[a, b]` of every temporal operator, shifted by the
/// windows of its ancestors.
pub fn windows(f: &Formula) -> Vec<(f64, f64)> {
    fn walk(f: &Formula, lo: f64, hi: f64, out: &mut Vec<(f64, f64)>) {
        match f {
            Formula::Always(i, g) | Formula::Eventually(i, g) => {
                out.push((lo + i.a(), hi + i.b()));
                walk(g, lo + i.a(), hi + i.b(), out);
            }
            Formula::Until(i, l, r) => {
                out.push((lo + i.a(), hi + i.b()));
                walk(l, lo, hi + i.b(), out);
                walk(r, lo + i.a(), hi + i.b(), out);
            }
            other => {
                for c in other.children() {
                    walk(c, lo, hi, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(f, 0.0, 0.0, &mut out);
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

fn pairs(f: &Formula) -> Vec<(RobotId, RobotId)> {
    let set: BTreeSet<(RobotId, RobotId)> = f
        .predicates()
        .into_iter()
        .filter(|p| p.is_coupled())
        .map(|p| (p.owners()[0], p.owners()[1]))
        .collect();
    set.into_iter().collect()
}

pub fn render(traj: &TrajectoryFile, formula: Option<&Formula>) -> String {
    let trace = traj.to_trace().ok();
    let dim = traj
        .rows
        .values()
        .filter_map(|s| s.first())
        .map(|(_, x)| x.len())
        .max()
        .unwrap_or(0);
    let t_end = traj.rows.values().filter_map(|s| s.last()).map(|(t, _)| *t).fold(0.0, f64::max);

    let mut panels = Vec::new();
    for c in 0..dim {
        let series = traj
            .rows
            .iter()
            .filter(|(_, s)| s.first().is_some_and(|(_, x)| x.len() > c))
            .map(|(r, s)| Series {
                label: r.to_string(),
                points: s.iter().map(|(t, x)| (*t, x[c])).collect(),
            })
            .collect();
        panels.push(Panel {
            title: format!("component {c}"),
            series,
        });
    }
    if let (Some(f), Some(trace)) = (formula, &trace) {
        let ps = pairs(f);
        if ps.len() <= MAX_PAIR_PANELS {
            // Distances are not linear between breakpoints; sample finely.
            let steps = 400usize;
            for (a, b) in ps {
                let points = (0..=steps)
                    .map(|k| t_end * k as f64 / steps as f64)
                    .filter_map(|t| {
                        let xa = trace.state(a, t)?;
                        let xb = trace.state(b, t)?;
                        let d = xa.iter().zip(&xb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                        Some((t, d))
                    })
                    .collect();
                panels.push(Panel {
                    title: format!("||{a} - {b}||"),
                    series: vec![Series {
                        label: String::new(),
                        points,
                    }],
                });
            }
        }
    }
    let shaded = formula.map(windows).unwrap_or_default();

    let height = TOP + panels.len() as f64 * (PANEL + GAP) + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="18" font-size="13">{}</text>"#, escape(&traj.formula));
    for (k, panel) in panels.iter().enumerate() {
        let y0 = TOP + k as f64 * (PANEL + GAP);
        draw_panel(&mut s, panel, y0, t_end, &shaded);
    }
    s.push_str("</svg>\n");
    s
}

fn draw_panel(s: &mut String, panel: &Panel, y0: f64, t_end: f64, shaded: &[(f64, f64)]) {
    let w = WIDTH - LEFT - RIGHT;
    let (mut lo, mut hi) = panel
        .series
        .iter()
        .flat_map(|se| se.points.iter().map(|p| p.1))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let t_end = if t_end > 0.0 { t_end } else { 1.0 };
    let px = |t: f64| LEFT + w * t / t_end;
    let py = |v: f64| y0 + PANEL * (hi - v) / (hi - lo);

    for (a, b) in shaded {
        let (a, b) = (a.clamp(0.0, t_end), b.clamp(0.0, t_end));
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{y0:.2}" width="{:.2}" height="{PANEL}" fill="#4c72b0" fill-opacity="0.08"/>"##,
            px(a),
            px(b) - px(a)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{y0:.2}" width="{w:.2}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.2}">{}</text>"#, y0 - 5.0, escape(&panel.title));
    for k in 0..=5 {
        let t = t_end * k as f64 / 5.0;
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(t),
            y0 + PANEL + 14.0,
            tick(t)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            py(v) + 4.0,
            tick(v)
        );
    }
    for (k, se) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = se.points.iter().map(|(t, v)| format!("{:.2},{:.2}", px(*t), py(*v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
        if let Some((t, v)) = se.points.last() {
            if !se.label.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
                    px(*t) + 4.0,
                    py(*v) + 4.0,
                    escape(&se.label)
                );
            }
        }
    }
}

fn tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    format!("{r}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
