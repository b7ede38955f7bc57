//! Minimal SVG line charts for the three standard panels.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ControllerKind, EpisodeRecord};
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series {
    label: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
    equal_aspect: bool,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in series.iter().flat_map(|s| &s.points) {
        b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(b.0, b.1);
    let (y0, y1) = pad(b.2, b.3);
    (x0, x1, y0, y1)
}

impl Chart {
    fn render(&self) -> String {
        let (mut x0, mut x1, mut y0, mut y1) = bounds(&self.series);
        let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        if self.equal_aspect {
            // same metres per pixel on both axes
            let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            (x0, x1) = (cx - 0.5 * scale * pw, cx + 0.5 * scale * pw);
            (y0, y1) = (cy - 0.5 * scale * ph, cy + 0.5 * scale * ph);
        }
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#,
            WIDTH / 2.0,
            self.title
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
                sx(xv),
                HEIGHT - MARGIN + 16.0,
                xv
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
                MARGIN - 4.0,
                sy(yv) + 4.0,
                yv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            self.x_label
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            self.y_label
        );
        for (n, ser) in self.series.iter().enumerate() {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline class="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                ser.label.replace(' ', "-"),
                ser.color,
                pts.join(" ")
            );
            let ly = MARGIN + 14.0 + 16.0 * n as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                WIDTH - MARGIN - 120.0,
                WIDTH - MARGIN - 100.0,
                ser.color,
                WIDTH - MARGIN - 94.0,
                ly + 4.0,
                ser.label
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// First record of each controller, in controller order.
fn representatives(records: &[EpisodeRecord]) -> Vec<&EpisodeRecord> {
    ControllerKind::ALL
        .iter()
        .filter_map(|k| records.iter().filter(|r| r.controller == *k).min_by_key(|r| r.realization))
        .collect()
}

/// Writes `trajectories.svg`, `min_distance.svg` and `capacity.svg`.
///
/// The trajectory panel shows the Joint MPC episode when present, else the
/// first record.
pub fn emit_plots(dir: &Path, records: &[EpisodeRecord], d_min: f64) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let reps = representatives(records);
    let main = reps.iter().find(|r| r.controller == ControllerKind::Joint).unwrap_or(&reps[0]);
    let n_agents = main.steps.first().map_or(0, |s| s.states.len());

    let trajectories = Chart {
        title: format!("Top-down trajectories ({})", main.controller.label()),
        x_label: "x (m)".into(),
        y_label: "y (m)".into(),
        series: (0..n_agents)
            .map(|i| Series {
                label: format!("agent {i}"),
                color: PALETTE[i % PALETTE.len()],
                points: main.steps.iter().map(|s| (s.states[i].position.x, s.states[i].position.y)).collect(),
                dashed: false,
            })
            .collect(),
        equal_aspect: true,
    };

    let t_end = reps.iter().flat_map(|r| r.steps.last()).map(|s| s.time_s).fold(0.0, f64::max);
    let mut min_series: Vec<Series> = reps
        .iter()
        .enumerate()
        .map(|(n, r)| Series {
            label: r.controller.label().into(),
            color: PALETTE[n % PALETTE.len()],
            points: r.steps.iter().map(|s| (s.time_s, s.min_distance)).collect(),
            dashed: false,
        })
        .collect();
    min_series.push(Series {
        label: "d_min".into(),
        color: "#ff0000",
        points: vec![(0.0, d_min), (t_end, d_min)],
        dashed: true,
    });
    let min_distance = Chart {
        title: "Minimum inter-agent distance".into(),
        x_label: "time (s)".into(),
        y_label: "distance (m)".into(),
        series: min_series,
        equal_aspect: false,
    };

    let capacity = Chart {
        title: "Mean link capacity".into(),
        x_label: "time (s)".into(),
        y_label: "capacity (Gbit/s)".into(),
        series: reps
            .iter()
            .enumerate()
            .map(|(n, r)| Series {
                label: r.controller.label().into(),
                color: PALETTE[n % PALETTE.len()],
                points: r
                    .steps
                    .iter()
                    .map(|s| (s.time_s, s.capacity.iter().sum::<f64>() / s.capacity.len().max(1) as f64 / 1e9))
                    .collect(),
                dashed: false,
            })
            .collect(),
        equal_aspect: false,
    };

    let mut out = Vec::new();
    for (name, chart) in [
        ("trajectories.svg", trajectories),
        ("min_distance.svg", min_distance),
        ("capacity.svg", capacity),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, chart.render()).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
