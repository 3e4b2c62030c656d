//! Per-frame plot data: CSV rows and a small SVG chart.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::detector::{Detector, StepOutcome};
use crate::ingestion::FrameObservation;

pub const CSV_HEADER: &str = "t,ear,eye_state,score,alarm_active,perclos";

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub t: f64,
    pub ear: Option<f64>,
    pub eye_state: &'static str,
    pub score: u32,
    pub alarm_active: bool,
    pub perclos: f64,
}

impl PlotRow {
    pub fn capture(frame: &FrameObservation, outcome: &StepOutcome, detector: &Detector) -> Self {
        Self {
            t: frame.timestamp,
            ear: outcome.ear,
            eye_state: outcome.eye_state.as_str(),
            score: detector.state().score,
            alarm_active: detector.state().alarm_active,
            perclos: detector.perclos().unwrap_or(0.0),
        }
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        let ear = self.ear.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            self.t,
            ear,
            self.eye_state,
            self.score,
            u8::from(self.alarm_active),
            self.perclos
        )
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

/// EAR (blue, left scale) and score (red, right scale) against time, with
/// the score threshold dashed.
pub fn render_svg(rows: &[PlotRow], ear_threshold: f64, score_threshold: u32) -> String {
    let t0 = rows.first().map_or(0.0, |r| r.t);
    let t1 = rows.last().map_or(1.0, |r| r.t).max(t0 + 1e-9);
    let ear_max = rows.iter().filter_map(|r| r.ear).fold(0.5f64, f64::max);
    let score_max = rows.iter().map(|r| r.score).max().unwrap_or(0).max(score_threshold + 1) as f64;

    let x = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64, max: f64| HEIGHT - MARGIN - v / max * (HEIGHT - 2.0 * MARGIN);

    let mut ear_path = String::new();
    let mut pen_down = false;
    for r in rows {
        match r.ear {
            Some(e) => {
                let _ = write!(
                    ear_path,
                    "{}{:.2},{:.2} ",
                    if pen_down { "L" } else { "M" },
                    x(r.t),
                    y(e, ear_max)
                );
                pen_down = true;
            }
            None => pen_down = false,
        }
    }
    let score_points = rows.iter().fold(String::new(), |mut s, r| {
        let _ = write!(s, "{:.2},{:.2} ", x(r.t), y(r.score as f64, score_max));
        s
    });

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{v:.2}" x2="{r:.2}" y2="{v:.2}" stroke="#1f77b4" stroke-dasharray="2,4"/>"##,
        v = y(ear_threshold, ear_max),
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{v:.2}" x2="{r:.2}" y2="{v:.2}" stroke="#d62728" stroke-dasharray="6,4"/>"##,
        v = y(score_threshold as f64, score_max),
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#1f77b4"/>"##,
        ear_path.trim_end()
    );
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#d62728"/>"##,
        score_points.trim_end()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="20" font-size="12">EAR (max {ear_max:.2})</text>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="12" text-anchor="end">score (max {score_max})</text>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">t = {t0:.2} .. {t1:.2} s</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    svg.push_str("</svg>\n");
    svg
}
