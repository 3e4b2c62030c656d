//! Running the detector over labeled traces and scoring the alarms.
//!
//! An episode counts as detected when an `AlarmOn` falls inside
//! `[start, end + grace]`; any `AlarmOn` outside every such window is a
//! false alarm. The correct rate is `CR = 100 * C / A`, rendered with two
//! decimals.

use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::detector::{Detector, DetectorConfig, DetectorError, Event, EventKind, StepOutcome};
use crate::ingestion::{FrameObservation, Trace};
use crate::synth::table::{TableRow, EPISODES_PER_TEST, REFERENCE_TABLE};
use crate::synth::{Episode, ScenarioFile, SynthError};

/// Default slack after an episode ends during which an alarm still counts.
pub const DEFAULT_GRACE_S: f64 = 2.0;

/// A table row passes when at least this many of its episodes are detected.
pub const ROW_PASS_MIN_DETECTED: u32 = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("frame {index}: {source}")]
    Detector {
        index: usize,
        #[source]
        source: DetectorError,
    },
    #[error("correct rate needs at least one test")]
    ZeroTotal,
    #[error("scenario file missing: {0}")]
    MissingScenario(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Everything the detector emitted over one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub config_used: DetectorConfig,
    pub trace_id: String,
}

impl EventLog {
    pub fn alarm_onsets(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::AlarmOn)
    }

    /// One JSON line per event.
    pub fn to_json_lines(&self) -> String {
        self.events.iter().fold(String::new(), |mut out, e| {
            let _ = writeln!(out, "{}", e.to_json_line());
            out
        })
    }
}

/// Folds frames through a fresh detector, calling `on_step` after each one.
pub fn run_frames<'a, I, F>(frames: I, config: &DetectorConfig, mut on_step: F) -> Result<Detector, EvalError>
where
    I: IntoIterator<Item = &'a FrameObservation>,
    F: FnMut(&FrameObservation, &StepOutcome, &Detector),
{
    let mut detector = Detector::new(config.clone()).map_err(|source| EvalError::Detector { index: 0, source })?;
    for (index, frame) in frames.into_iter().enumerate() {
        let outcome = detector
            .step(frame)
            .map_err(|source| EvalError::Detector { index, source })?;
        on_step(frame, &outcome, &detector);
    }
    Ok(detector)
}

/// Batch form of the detector over a whole trace.
pub fn run_detector_on_trace(trace: &Trace, config: &DetectorConfig) -> Result<EventLog, EvalError> {
    let mut events = Vec::new();
    run_frames(&trace.frames, config, |_, outcome, _| {
        events.extend_from_slice(&outcome.events)
    })?;
    Ok(EventLog {
        events,
        config_used: config.clone(),
        trace_id: trace.source_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub episode: Episode,
    pub detected: bool,
    pub detection_latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub trace_id: String,
    pub per_episode: Vec<EpisodeResult>,
    pub detected_count: u32,
    pub episode_count: u32,
    pub false_alarm_count: u32,
    /// `None` when the trace has no episodes.
    pub correct_rate_percent: Option<f64>,
}

/// `100 * correct / total`.
pub fn correct_rate(correct: u32, total: u32) -> Result<f64, EvalError> {
    if total == 0 {
        return Err(EvalError::ZeroTotal);
    }
    Ok(100.0 * f64::from(correct) / f64::from(total))
}

/// Percent with the fixed two-decimal rendering used in reports.
pub fn format_percent(percent: f64) -> String {
    format!("{percent:.2}%")
}

/// Matches alarm onsets in `log` against ground-truth `episodes`.
pub fn match_alarms(log: &EventLog, episodes: &[Episode], grace_s: f64) -> EvalReport {
    let within = |t: f64, ep: &Episode| t >= ep.start_s && t <= ep.end_s + grace_s;
    let per_episode: Vec<EpisodeResult> = episodes
        .iter()
        .map(|ep| {
            let first = log.alarm_onsets().map(|e| e.timestamp).find(|&t| within(t, ep));
            EpisodeResult {
                episode: *ep,
                detected: first.is_some(),
                detection_latency_s: first.map(|t| t - ep.start_s),
            }
        })
        .collect();
    let false_alarm_count = log
        .alarm_onsets()
        .filter(|e| !episodes.iter().any(|ep| within(e.timestamp, ep)))
        .count() as u32;
    let detected_count = per_episode.iter().filter(|r| r.detected).count() as u32;
    let episode_count = episodes.len() as u32;
    EvalReport {
        trace_id: log.trace_id.clone(),
        per_episode,
        detected_count,
        episode_count,
        false_alarm_count,
        correct_rate_percent: correct_rate(detected_count, episode_count).ok(),
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trace: {}", self.trace_id)?;
        writeln!(
            f,
            "{:<8} {:>9} {:>9} {:>9} {:>10}",
            "episode", "start_s", "end_s", "detected", "latency_s"
        )?;
        for (i, r) in self.per_episode.iter().enumerate() {
            let latency = r
                .detection_latency_s
                .map_or_else(|| "-".to_owned(), |l| format!("{l:.3}"));
            writeln!(
                f,
                "{:<8} {:>9.3} {:>9.3} {:>9} {:>10}",
                i + 1,
                r.episode.start_s,
                r.episode.end_s,
                if r.detected { "yes" } else { "no" },
                latency
            )?;
        }
        writeln!(
            f,
            "DROWSINESS DETECTION ALARM: {} out of {}",
            self.detected_count, self.episode_count
        )?;
        writeln!(f, "false alarms: {}", self.false_alarm_count)?;
        match self.correct_rate_percent {
            Some(cr) => writeln!(
                f,
                "CR = ({}/{}) x 100% = {}",
                self.detected_count,
                self.episode_count,
                format_percent(cr)
            ),
            None => writeln!(f, "CR = n/a (no episodes)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRowResult {
    pub row: TableRow,
    pub report: EvalReport,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub rows: Vec<TableRowResult>,
    pub passed_count: u32,
    pub test_count: u32,
    pub correct_rate_percent: f64,
}

impl fmt::Display for TableReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10}  {:>13}  {:>17}  {:<8}  {:<15}  {:<26}  {:<4}",
            "INDIVIDUAL",
            "EAR THRESHOLD",
            "ALARM SENSITIVITY",
            "LIGHT",
            "REMARKS",
            "DROWSINESS DETECTION ALARM",
            "PASS"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10}  {:>13}  {:>17}  {:<8}  {:<15}  {:<26}  {:<4}",
                r.row.individual.to_string(),
                r.row.ear_threshold,
                r.row.alarm_sensitivity,
                r.row.light.to_string(),
                r.row.remark.to_string(),
                format!("{} out of {}", r.report.detected_count, r.report.episode_count),
                if r.passed { "yes" } else { "no" }
            )?;
        }
        writeln!(
            f,
            "CR = ({}/{}) x 100% = {}",
            self.passed_count,
            self.test_count,
            format_percent(self.correct_rate_percent)
        )
    }
}

/// Runs a scenario with its own detector settings and scores it.
pub fn evaluate_scenario(scenario: &ScenarioFile, grace_s: f64) -> Result<EvalReport, EvalError> {
    let labeled = scenario.generate()?;
    let config = scenario.detector.resolve();
    let log = run_detector_on_trace(&labeled.trace, &config)?;
    Ok(match_alarms(&log, &labeled.drowsy_episodes, grace_s))
}

/// Reproduces the ten-row accuracy table from the scenario files in `dir`.
pub fn reproduce_reference_table(dir: impl AsRef<Path>, grace_s: f64) -> Result<TableReport, EvalError> {
    let dir = dir.as_ref();
    let scenarios = REFERENCE_TABLE
        .iter()
        .map(|row| {
            let path = dir.join(row.file_name());
            if !path.is_file() {
                return Err(EvalError::MissingScenario(path.display().to_string()));
            }
            Ok((*row, ScenarioFile::load(&path)?))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rows = scenarios
        .iter()
        .map(|(row, scenario)| {
            let report = evaluate_scenario(scenario, grace_s)?;
            let passed = report.detected_count >= ROW_PASS_MIN_DETECTED.min(EPISODES_PER_TEST);
            Ok(TableRowResult {
                row: *row,
                report,
                passed,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let passed_count = rows.iter().filter(|r| r.passed).count() as u32;
    let test_count = rows.len() as u32;
    Ok(TableReport {
        correct_rate_percent: correct_rate(passed_count, test_count)?,
        rows,
        passed_count,
        test_count,
    })
}
