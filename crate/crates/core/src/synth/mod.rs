//! Deterministic synthetic EAR traces from scenario scripts.
//!
//! A script lays out segments of open eyes, closed eyes, periodic blinking
//! or a missing face over a fixed-rate timeline, then perturbs it with
//! Gaussian EAR noise and per-frame face dropout. Closed-eye segments longer
//! than the blink band become the ground-truth drowsy episodes.
//!
//! Randomness comes from [`SplitMix64`]. Each frame draws, in order, one
//! Gaussian (two uniforms) for noise and one uniform for dropout, whether or
//! not they end up used, so the stream layout depends only on the frame count.

pub mod table;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectorConfig, DetectorOverrides};
use crate::ingestion::{FrameObservation, Trace};
use crate::rng::SplitMix64;

pub use table::{scenario_from_table_row, Individual, Light, Remark, RowKey, TableRow, REFERENCE_TABLE};

/// Length of the closed run inside a [`SegmentKind::Blink`] period.
pub const BLINK_CLOSURE_S: f64 = 0.2;

// frame-boundary slack for products like 16.8 * 30
const FRAME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario script: {0}")]
    InvalidScript(String),
    #[error("unknown table row {0}")]
    UnknownRow(String),
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    OpenEyes,
    ClosedEyes,
    /// Open eyes with a [`BLINK_CLOSURE_S`] closure in the middle of every period.
    Blink {
        period_s: f64,
    },
    FaceAbsent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64, kind: SegmentKind) -> Self {
        Self { start_s, end_s, kind }
    }
}

fn default_open_ear() -> f64 {
    0.24
}

fn default_closed_ear() -> f64 {
    0.15
}

/// A scenario: timeline, eye baselines and perturbations. Frames not
/// covered by any segment are open-eyed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub duration_s: f64,
    pub fps: f64,
    #[serde(default = "default_open_ear")]
    pub baseline_open_ear: f64,
    #[serde(default = "default_closed_ear")]
    pub baseline_closed_ear: f64,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub noise_stddev: f64,
    #[serde(default)]
    pub dropout_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioScript {
    /// Constant open eyes with default baselines and no perturbation.
    pub fn new(duration_s: f64, fps: f64) -> Self {
        Self {
            duration_s,
            fps,
            baseline_open_ear: default_open_ear(),
            baseline_closed_ear: default_closed_ear(),
            segments: Vec::new(),
            noise_stddev: 0.0,
            dropout_probability: 0.0,
            seed: 0,
        }
    }

    pub fn with_segment(mut self, start_s: f64, end_s: f64, kind: SegmentKind) -> Self {
        self.segments.push(Segment::new(start_s, end_s, kind));
        self
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps + FRAME_EPS).floor() as usize
    }

    fn frame_index(&self, t: f64) -> usize {
        (t * self.fps - FRAME_EPS).ceil().max(0.0) as usize
    }

    fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidScript(msg));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        let ears = [self.baseline_open_ear, self.baseline_closed_ear];
        if ears.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return fail("baselines must be finite and non-negative".into());
        }
        if self.baseline_closed_ear >= self.baseline_open_ear {
            return fail("baseline_closed_ear must be below baseline_open_ear".into());
        }
        if !(self.noise_stddev.is_finite() && self.noise_stddev >= 0.0) {
            return fail(format!("noise_stddev must be non-negative, got {}", self.noise_stddev));
        }
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return fail(format!(
                "dropout_probability must lie in [0, 1], got {}",
                self.dropout_probability
            ));
        }
        let mut previous_end = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.start_s.is_finite() && seg.end_s.is_finite() && seg.start_s < seg.end_s) {
                return fail(format!("segment {i}: need start_s < end_s"));
            }
            if seg.start_s < previous_end || seg.end_s > self.duration_s {
                return fail(format!(
                    "segment {i}: segments must be ordered, disjoint and within [0, duration_s]"
                ));
            }
            if let SegmentKind::Blink { period_s } = seg.kind {
                if !(period_s.is_finite() && self.frames_for(period_s) > self.frames_for(BLINK_CLOSURE_S)) {
                    return fail(format!(
                        "segment {i}: blink period must exceed the {BLINK_CLOSURE_S} s closure"
                    ));
                }
            }
            previous_end = seg.end_s;
        }
        Ok(())
    }
}

/// A ground-truth interval during which an alarm is expected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub trace: Trace,
    pub drowsy_episodes: Vec<Episode>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Open,
    Closed,
    Absent,
}

/// Generates the frames of `script`. Identical scripts give identical traces.
pub fn generate_trace(script: &ScenarioScript) -> Result<LabeledTrace, SynthError> {
    script.validate()?;
    let n = script.frame_count();
    let blink_closed = script.frames_for(BLINK_CLOSURE_S).max(1);

    let mut targets = vec![Target::Open; n];
    for seg in &script.segments {
        let first = script.frame_index(seg.start_s).min(n);
        let last = script.frame_index(seg.end_s).min(n);
        for (k, target) in targets[first..last].iter_mut().enumerate() {
            *target = match seg.kind {
                SegmentKind::OpenEyes => Target::Open,
                SegmentKind::ClosedEyes => Target::Closed,
                SegmentKind::FaceAbsent => Target::Absent,
                SegmentKind::Blink { period_s } => {
                    let period = script.frames_for(period_s);
                    let phase = k % period;
                    if (period / 2..period / 2 + blink_closed).contains(&phase) {
                        Target::Closed
                    } else {
                        Target::Open
                    }
                }
            };
        }
    }

    let mut rng = SplitMix64::new(script.seed);
    let frames = targets
        .iter()
        .enumerate()
        .map(|(i, target)| {
            let timestamp = i as f64 / script.fps;
            let noise = rng.next_gaussian() * script.noise_stddev;
            let dropped = rng.next_f64() < script.dropout_probability;
            let base = match target {
                Target::Open => script.baseline_open_ear,
                Target::Closed => script.baseline_closed_ear,
                Target::Absent => return FrameObservation::no_face(timestamp),
            };
            if dropped {
                FrameObservation::no_face(timestamp)
            } else {
                FrameObservation::with_ear(timestamp, (base + noise).max(0.0))
            }
        })
        .collect();

    let blink_max_s = DetectorConfig::default().blink_max_s;
    let drowsy_episodes = script
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::ClosedEyes && s.end_s - s.start_s > blink_max_s)
        .map(|s| Episode {
            start_s: s.start_s,
            end_s: s.end_s,
        })
        .collect();

    Ok(LabeledTrace {
        trace: Trace::new("synthetic", frames),
        drowsy_episodes,
    })
}

/// A scenario document as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<TableRow>,
    /// Detector settings the scenario is meant to be run with.
    #[serde(default, skip_serializing_if = "DetectorOverrides::is_empty")]
    pub detector: DetectorOverrides,
    pub script: ScenarioScript,
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: display.clone(),
            source,
        })?;
        let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| SynthError::Format {
            path: display,
            message: e.to_string(),
        })?;
        file.script.validate()?;
        Ok(file)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario always serializes");
        s.push('\n');
        s
    }

    pub fn generate(&self) -> Result<LabeledTrace, SynthError> {
        let mut labeled = generate_trace(&self.script)?;
        labeled.trace.source_id = self.name.clone();
        Ok(labeled)
    }
}

/// Ground-truth sidecar written next to a generated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsFile {
    pub trace_id: String,
    pub drowsy_episodes: Vec<Episode>,
    #[serde(default, skip_serializing_if = "DetectorOverrides::is_empty")]
    pub detector: DetectorOverrides,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{classify_eye_state, EyeState};
    use crate::ingestion::{validate_trace, FaceData};

    fn ears(t: &LabeledTrace) -> Vec<Option<f64>> {
        t.trace
            .frames
            .iter()
            .map(|f| match f.face {
                FaceData::Ear(e) => Some(e),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn constant_open_segment() {
        let script = ScenarioScript::new(10.0, 30.0).with_segment(0.0, 10.0, SegmentKind::OpenEyes);
        let out = generate_trace(&script).unwrap();
        assert_eq!(out.trace.frames.len(), 300);
        assert!(ears(&out).iter().all(|e| *e == Some(0.24)));
        assert!(out.drowsy_episodes.is_empty());
        assert!(validate_trace(&out.trace).is_empty());
    }

    #[test]
    fn closed_segment_becomes_episode() {
        let script = ScenarioScript::new(10.0, 30.0).with_segment(3.0, 7.0, SegmentKind::ClosedEyes);
        let out = generate_trace(&script).unwrap();
        assert_eq!(
            out.drowsy_episodes,
            vec![Episode {
                start_s: 3.0,
                end_s: 7.0
            }]
        );
        let e = ears(&out);
        assert_eq!(e[89], Some(0.24));
        assert_eq!(e[90], Some(0.15));
        assert_eq!(e[209], Some(0.15));
        assert_eq!(e[210], Some(0.24));
    }

    #[test]
    fn short_closed_segment_is_not_episode() {
        let script = ScenarioScript::new(2.0, 30.0).with_segment(1.0, 1.3, SegmentKind::ClosedEyes);
        assert!(generate_trace(&script).unwrap().drowsy_episodes.is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut script = ScenarioScript::new(10.0, 30.0).with_segment(2.0, 9.0, SegmentKind::Blink { period_s: 1.5 });
        script.noise_stddev = 0.03;
        script.dropout_probability = 0.2;
        script.seed = 99;
        let a = generate_trace(&script).unwrap().trace.to_json_lines();
        let b = generate_trace(&script).unwrap().trace.to_json_lines();
        assert_eq!(a, b);
        script.seed = 100;
        assert_ne!(a, generate_trace(&script).unwrap().trace.to_json_lines());
    }

    #[test]
    fn blink_segment_layout() {
        let script = ScenarioScript::new(7.0, 30.0).with_segment(0.0, 7.0, SegmentKind::Blink { period_s: 1.0 });
        let e = ears(&generate_trace(&script).unwrap());
        let closed: Vec<usize> = (0..e.len()).filter(|&i| e[i] == Some(0.15)).collect();
        assert_eq!(closed.len(), 7 * 6);
        assert_eq!(&closed[..6], &[15, 16, 17, 18, 19, 20]);
    }

    #[test]
    fn full_dropout_and_face_absent() {
        let mut script = ScenarioScript::new(1.0, 30.0);
        script.dropout_probability = 1.0;
        assert!(ears(&generate_trace(&script).unwrap()).iter().all(Option::is_none));
        let script = ScenarioScript::new(1.0, 30.0).with_segment(0.5, 1.0, SegmentKind::FaceAbsent);
        let e = ears(&generate_trace(&script).unwrap());
        assert!(e[..15].iter().all(Option::is_some));
        assert!(e[15..].iter().all(Option::is_none));
    }

    #[test]
    fn noise_never_goes_negative() {
        let mut script = ScenarioScript::new(20.0, 30.0).with_segment(0.0, 20.0, SegmentKind::ClosedEyes);
        script.baseline_closed_ear = 0.01;
        script.noise_stddev = 0.5;
        assert!(ears(&generate_trace(&script).unwrap())
            .iter()
            .all(|e| e.unwrap() >= 0.0));
    }

    #[test]
    fn invalid_scripts() {
        let base = ScenarioScript::new(10.0, 30.0);
        let bad = [
            ScenarioScript {
                duration_s: 0.0,
                ..base.clone()
            },
            ScenarioScript {
                fps: -1.0,
                ..base.clone()
            },
            ScenarioScript {
                baseline_closed_ear: 0.3,
                ..base.clone()
            },
            ScenarioScript {
                dropout_probability: 1.5,
                ..base.clone()
            },
            ScenarioScript {
                noise_stddev: -0.1,
                ..base.clone()
            },
            base.clone().with_segment(5.0, 4.0, SegmentKind::OpenEyes),
            base.clone().with_segment(0.0, 11.0, SegmentKind::OpenEyes),
            base.clone()
                .with_segment(0.0, 5.0, SegmentKind::OpenEyes)
                .with_segment(4.0, 6.0, SegmentKind::ClosedEyes),
            base.clone()
                .with_segment(0.0, 5.0, SegmentKind::Blink { period_s: 0.1 }),
        ];
        for s in bad {
            assert!(matches!(generate_trace(&s), Err(SynthError::InvalidScript(_))), "{s:?}");
        }
    }

    #[test]
    fn noiseless_baselines_classify_at_table_thresholds() {
        let script = ScenarioScript::new(10.0, 30.0)
            .with_segment(0.0, 5.0, SegmentKind::OpenEyes)
            .with_segment(5.0, 10.0, SegmentKind::ClosedEyes);
        let e = ears(&generate_trace(&script).unwrap());
        for threshold in [0.2, 0.22] {
            let c = DetectorConfig {
                ear_threshold: threshold,
                ..DetectorConfig::default()
            };
            assert!(e[..150].iter().all(|&x| classify_eye_state(x, &c) == EyeState::Open));
            assert!(e[150..].iter().all(|&x| classify_eye_state(x, &c) == EyeState::Closed));
        }
        // The default open baseline (0.24) sits below the 0.25 threshold used
        // for individual B, whose scenarios carry their own baseline.
        let c = DetectorConfig {
            ear_threshold: 0.25,
            ..DetectorConfig::default()
        };
        assert_eq!(classify_eye_state(e[0], &c), EyeState::Closed);
    }

    #[test]
    fn scenario_file_round_trip() {
        let file = ScenarioFile {
            name: "demo".into(),
            row: None,
            detector: DetectorOverrides {
                score_threshold: Some(48),
                ..Default::default()
            },
            script: ScenarioScript::new(1.0, 30.0).with_segment(0.0, 0.5, SegmentKind::Blink { period_s: 0.4 }),
        };
        let json = file.to_json_pretty();
        assert!(json.contains(r#""kind": "blink""#));
        let back: ScenarioFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, file);
    }
}
