//! Text table and SVG charts rendered from evaluation CSVs.
//!
//! Output depends only on the input data, so regenerating a report from
//! unchanged artifacts is byte-identical.

use std::fmt::Write as _;

use crate::eval::{sma, EpisodeRecord, EvalSummary};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#17becf", "#8c564b", "#e377c2",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

/// Episode records grouped by label, in first-appearance order.
pub fn group_by_label(rows: &[(String, EpisodeRecord)]) -> Vec<(String, Vec<EpisodeRecord>)> {
    let mut groups: Vec<(String, Vec<EpisodeRecord>)> = Vec::new();
    for (label, rec) in rows {
        match groups.iter_mut().find(|(l, _)| l == label) {
            Some((_, v)) => v.push(rec.clone()),
            None => groups.push((label.clone(), vec![rec.clone()])),
        }
    }
    groups
}

pub fn summary_table(summaries: &[EvalSummary]) -> String {
    let headers = ["Configuration", "Mean Reward", "Std Reward", "Mean Collision Rate", "Std Collision Rate"];
    let rows: Vec<[String; 5]> = summaries
        .iter()
        .map(|s| {
            [
                s.label.clone(),
                format!("{:.2}", s.mean_reward),
                format!("{:.2}", s.std_reward),
                format!("{:.2}", s.mean_collision_rate),
                format!("{:.2}", s.std_collision_rate),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: [&str; 5]| {
        let _ = write!(out, "{:<w$}", cells[0], w = widths[0]);
        for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
    };
    line(&mut out, headers);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in &rows {
        line(&mut out, [&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round-number tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn svg_open(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - MARGIN_RIGHT + MARGIN_LEFT) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (WIDTH - MARGIN_RIGHT + MARGIN_LEFT) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn y_axis(out: &mut String, f: &Frame) {
    for t in ticks(f.y_lo, f.y_hi, 6) {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_LEFT:.1}" y="{MARGIN_TOP:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333333"/>"##,
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    );
}

fn legend_entry(out: &mut String, i: usize, label: &str) {
    let x = WIDTH - MARGIN_RIGHT + 12.0;
    let y = MARGIN_TOP + 10.0 + 18.0 * i as f64;
    let color = PALETTE[i % PALETTE.len()];
    let _ = writeln!(
        out,
        r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="3"/>"#,
        x + 18.0
    );
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 24.0, y + 4.0, escape(label));
}

/// Line chart of the moving average of episode rewards, one series per configuration.
pub fn sma_chart(groups: &[(String, Vec<EpisodeRecord>)], window: usize) -> String {
    let series: Vec<(&str, Vec<f64>)> = groups
        .iter()
        .map(|(l, recs)| (l.as_str(), sma(&recs.iter().map(|r| r.reward).collect::<Vec<_>>(), window)))
        .collect();
    let n = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let (y_lo, y_hi) = padded_range(series.iter().flat_map(|(_, s)| s.iter().copied()));
    let f = Frame {
        x_lo: 0.0,
        x_hi: (n.max(2) - 1) as f64,
        y_lo,
        y_hi,
    };
    let mut out = String::new();
    svg_open(&mut out, &format!("SMA of episode rewards (window {window})"), "Episode", "Reward (SMA)");
    y_axis(&mut out, &f);
    for t in ticks(f.x_lo, f.x_hi, 8) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(t),
            HEIGHT - MARGIN_BOTTOM + 16.0,
            fmt_tick(t)
        );
    }
    for (i, (label, s)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(x, y)| format!("{:.2},{:.2}", f.px(x as f64), f.py(*y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        legend_entry(&mut out, i, label);
    }
    out.push_str("</svg>\n");
    out
}

/// Per-configuration distribution of batched collision rates: every batch
/// as a dot, the mean as a bar and ±1 std as a box.
pub fn collision_chart(groups: &[(String, Vec<EpisodeRecord>)], batch: usize) -> String {
    let batch = batch.max(1);
    let rates: Vec<(&str, Vec<f64>)> = groups
        .iter()
        .map(|(l, recs)| {
            let r = recs
                .chunks(batch)
                .map(|c| c.iter().filter(|r| r.collided).count() as f64 / c.len() as f64)
                .collect();
            (l.as_str(), r)
        })
        .collect();
    let f = Frame {
        x_lo: -0.5,
        x_hi: rates.len().max(1) as f64 - 0.5,
        y_lo: -0.05,
        y_hi: 1.05,
    };
    let mut out = String::new();
    svg_open(&mut out, "Collision rate per batch", "Configuration", "Collision rate");
    y_axis(&mut out, &f);
    let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / rates.len().max(1) as f64;
    for (i, (label, r)) in rates.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = f.px(i as f64);
        let mean = r.iter().sum::<f64>() / r.len().max(1) as f64;
        let std = (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r.len().max(1) as f64).sqrt();
        let half = slot * 0.3;
        let (top, bottom) = (f.py((mean + std).min(1.05)), f.py((mean - std).max(-0.05)));
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.2" stroke="{color}"/>"#,
            cx - half,
            2.0 * half,
            bottom - top
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2.5"/>"#,
            cx - half,
            f.py(mean),
            cx + half,
            f.py(mean)
        );
        // Deterministic horizontal jitter so coincident rates stay visible.
        for (j, v) in r.iter().enumerate() {
            let jitter = ((j * 7919) % 11) as f64 / 10.0 - 0.5;
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                cx + jitter * half,
                f.py(*v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN_BOTTOM + 16.0,
            escape(label)
        );
        legend_entry(&mut out, i, label);
    }
    out.push_str("</svg>\n");
    out
}
