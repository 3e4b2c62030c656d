//! Score-accumulator alarm state machine.
//!
//! Every frame is classified as open, closed or faceless. Closed frames add
//! to a running score and open frames subtract from it (floored at zero).
//! The alarm is on exactly while the score is strictly above the threshold.
//! Alongside the score the detector keeps a PERCLOS window, classifies
//! closed runs as blinks or long closures, and treats a face that stays
//! missing for `no_face_limit` frames as a closed eye.
//!
//! Thresholds count frames, so the defaults assume roughly 30 fps input.
//! Durations (blink band, closure length) come from record timestamps.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{EyeIndexMap, GeometryError};
use crate::ingestion::FrameObservation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("timestamp {current} does not follow previous timestamp {previous}")]
    NonMonotonicTimestamp { previous: f64, current: f64 },
    #[error("timestamp {0} is not a finite non-negative number")]
    InvalidTimestamp(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("PERCLOS window is empty")]
    EmptyWindow,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

/// Tunable detector parameters. Every field has a default, so a config file
/// may name only the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// EAR strictly below this is a closed eye.
    pub ear_threshold: f64,
    /// The alarm is on while the score is strictly above this.
    pub score_threshold: u32,
    pub score_increment: u32,
    pub score_decrement: u32,
    /// Upper bound on the score. `None` means three times the threshold.
    pub score_cap: Option<u32>,
    /// PERCLOS window length in frames.
    pub perclos_window: usize,
    /// Consecutive faceless frames after which they count as closed.
    pub no_face_limit: u32,
    pub blink_min_s: f64,
    pub blink_max_s: f64,
    /// Only used by the generator and for reporting.
    pub nominal_fps: f64,
    pub eye_indices: EyeIndexMap,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            ear_threshold: 0.20,
            score_threshold: 10,
            score_increment: 1,
            score_decrement: 1,
            score_cap: None,
            perclos_window: 90,
            no_face_limit: 15,
            blink_min_s: 0.1,
            blink_max_s: 0.4,
            nominal_fps: 30.0,
            eye_indices: EyeIndexMap::default(),
        }
    }
}

impl DetectorConfig {
    pub fn effective_score_cap(&self) -> u32 {
        self.score_cap.unwrap_or_else(|| self.score_threshold.saturating_mul(3))
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let fail = |msg: &str| Err(DetectorError::InvalidConfig(msg.to_owned()));
        if !(self.ear_threshold.is_finite() && self.ear_threshold > 0.0) {
            return fail("ear_threshold must be positive");
        }
        if self.score_threshold == 0 {
            return fail("score_threshold must be positive");
        }
        if self.score_increment == 0 || self.score_decrement == 0 {
            return fail("score_increment and score_decrement must be at least 1");
        }
        if self.effective_score_cap() <= self.score_threshold {
            return fail("score_cap must exceed score_threshold");
        }
        if self.perclos_window == 0 {
            return fail("perclos_window must be positive");
        }
        if self.no_face_limit == 0 {
            return fail("no_face_limit must be positive");
        }
        if !(self.blink_min_s > 0.0 && self.blink_min_s < self.blink_max_s && self.blink_max_s.is_finite()) {
            return fail("need 0 < blink_min_s < blink_max_s");
        }
        if !(self.nominal_fps.is_finite() && self.nominal_fps > 0.0) {
            return fail("nominal_fps must be positive");
        }
        self.eye_indices.validate()?;
        Ok(())
    }
}

/// A partial [`DetectorConfig`]: only the fields that are set replace the
/// base values. Used for scenario overrides, config files and CLI flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ear_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_threshold: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_increment: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_decrement: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_cap: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perclos_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_face_limit: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blink_min_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blink_max_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal_fps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eye_indices: Option<EyeIndexMap>,
}

impl DetectorOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply_to(&self, config: &mut DetectorConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        set!(
            ear_threshold,
            score_threshold,
            score_increment,
            score_decrement,
            perclos_window,
            no_face_limit,
            blink_min_s,
            blink_max_s,
            nominal_fps,
            eye_indices
        );
        if self.score_cap.is_some() {
            config.score_cap = self.score_cap;
        }
    }

    /// `self` with every field that `other` sets replaced.
    pub fn merged_with(&self, other: &DetectorOverrides) -> DetectorOverrides {
        macro_rules! pick {
            ($($field:ident),*) => {
                DetectorOverrides { $($field: other.$field.or(self.$field)),* }
            };
        }
        pick!(
            ear_threshold,
            score_threshold,
            score_increment,
            score_decrement,
            score_cap,
            perclos_window,
            no_face_limit,
            blink_min_s,
            blink_max_s,
            nominal_fps,
            eye_indices
        )
    }

    pub fn resolve(&self) -> DetectorConfig {
        let mut config = DetectorConfig::default();
        self.apply_to(&mut config);
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EyeState {
    Open,
    Closed,
    NoFace,
}

impl EyeState {
    pub fn as_str(&self) -> &'static str {
        match self {
            EyeState::Open => "Open",
            EyeState::Closed => "Closed",
            EyeState::NoFace => "NoFace",
        }
    }
}

/// Classifies one frame. A value exactly at the threshold counts as open.
pub fn classify_eye_state(ear: Option<f64>, config: &DetectorConfig) -> EyeState {
    match ear {
        None => EyeState::NoFace,
        Some(e) if e < config.ear_threshold => EyeState::Closed,
        Some(_) => EyeState::Open,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureKind {
    ShortNoise,
    Blink,
    LongClosure,
}

/// Buckets a closed-run duration against the blink band (inclusive at both ends).
pub fn classify_closure(duration_s: f64, config: &DetectorConfig) -> ClosureKind {
    if duration_s < config.blink_min_s {
        ClosureKind::ShortNoise
    } else if duration_s <= config.blink_max_s {
        ClosureKind::Blink
    } else {
        ClosureKind::LongClosure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    AlarmOn,
    AlarmOff,
    Blink,
    LongClosureStart,
    FaceLost,
    FaceRecovered,
}

/// A detector output. Serializes as `{"kind":..,"t":..,"score":..,"ear":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    #[serde(rename = "t")]
    pub timestamp: f64,
    #[serde(rename = "score")]
    pub score_at_event: u32,
    #[serde(rename = "ear", default, skip_serializing_if = "Option::is_none")]
    pub ear_at_event: Option<f64>,
}

impl Event {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event always serializes")
    }
}

/// What one call to [`DetectorState::step`] observed and emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub ear: Option<f64>,
    /// Classification of the frame itself.
    pub eye_state: EyeState,
    /// State used for scoring and PERCLOS, after the no-face policy.
    pub effective_state: EyeState,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectorState {
    pub score: u32,
    pub alarm_active: bool,
    pub consecutive_no_face: u32,
    /// Timestamp of the first frame of the current closed run.
    pub closure_started_at: Option<f64>,
    long_closure_reported: bool,
    perclos_buffer: VecDeque<EyeState>,
    closed_in_window: usize,
    pub last_timestamp: Option<f64>,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn perclos_buffer(&self) -> &VecDeque<EyeState> {
        &self.perclos_buffer
    }

    /// Fraction of frames in the window whose effective state is closed.
    pub fn perclos(&self) -> Result<f64, DetectorError> {
        if self.perclos_buffer.is_empty() {
            return Err(DetectorError::EmptyWindow);
        }
        Ok(self.closed_in_window as f64 / self.perclos_buffer.len() as f64)
    }

    /// Advances the state machine by one frame.
    ///
    /// Timestamps must be strictly increasing. On error the state is left
    /// untouched.
    pub fn step(&mut self, obs: &FrameObservation, config: &DetectorConfig) -> Result<StepOutcome, DetectorError> {
        let t = obs.timestamp;
        if !(t.is_finite() && t >= 0.0) {
            return Err(DetectorError::InvalidTimestamp(t));
        }
        if let Some(previous) = self.last_timestamp {
            if t <= previous {
                return Err(DetectorError::NonMonotonicTimestamp { previous, current: t });
            }
        }
        let ear = obs.ear(&config.eye_indices)?;
        let eye_state = classify_eye_state(ear, config);
        let mut events = Vec::new();
        let mut emit = |kind, score| {
            events.push(Event {
                kind,
                timestamp: t,
                score_at_event: score,
                ear_at_event: ear,
            })
        };

        let effective_state = if eye_state == EyeState::NoFace {
            self.consecutive_no_face = self.consecutive_no_face.saturating_add(1);
            if self.consecutive_no_face == config.no_face_limit {
                emit(EventKind::FaceLost, self.score);
            }
            if self.consecutive_no_face >= config.no_face_limit {
                EyeState::Closed
            } else {
                EyeState::NoFace
            }
        } else {
            if self.consecutive_no_face >= config.no_face_limit {
                emit(EventKind::FaceRecovered, self.score);
            }
            self.consecutive_no_face = 0;
            eye_state
        };

        // Closed runs follow the observed eye only; a missing face discards
        // the run since its true length is unknown.
        match eye_state {
            EyeState::Closed => {
                let started = *self.closure_started_at.get_or_insert(t);
                if !self.long_closure_reported && t - started > config.blink_max_s {
                    self.long_closure_reported = true;
                    emit(EventKind::LongClosureStart, self.score);
                }
            }
            EyeState::Open => {
                if let Some(started) = self.closure_started_at.take() {
                    if classify_closure(t - started, config) == ClosureKind::Blink {
                        emit(EventKind::Blink, self.score);
                    }
                }
                self.long_closure_reported = false;
            }
            EyeState::NoFace => {
                self.closure_started_at = None;
                self.long_closure_reported = false;
            }
        }

        match effective_state {
            EyeState::Closed => {
                self.score = self
                    .score
                    .saturating_add(config.score_increment)
                    .min(config.effective_score_cap().max(self.score));
            }
            EyeState::Open => self.score = self.score.saturating_sub(config.score_decrement),
            EyeState::NoFace => {}
        }

        let alarm = self.score > config.score_threshold;
        if alarm != self.alarm_active {
            self.alarm_active = alarm;
            let kind = if alarm { EventKind::AlarmOn } else { EventKind::AlarmOff };
            emit(kind, self.score);
        }

        if self.perclos_buffer.len() == config.perclos_window
            && self.perclos_buffer.pop_front() == Some(EyeState::Closed)
        {
            self.closed_in_window -= 1;
        }
        self.perclos_buffer.push_back(effective_state);
        if effective_state == EyeState::Closed {
            self.closed_in_window += 1;
        }
        self.last_timestamp = Some(t);

        Ok(StepOutcome {
            ear,
            eye_state,
            effective_state,
            events,
        })
    }
}

/// A detector instance: a validated config plus its evolving state.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    state: DetectorState,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectorError> {
        config.validate()?;
        Ok(Self {
            config,
            state: DetectorState::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn step(&mut self, obs: &FrameObservation) -> Result<StepOutcome, DetectorError> {
        self.state.step(obs, &self.config)
    }

    pub fn perclos(&self) -> Result<f64, DetectorError> {
        self.state.perclos()
    }
}

/// Blinks per minute among `events` with timestamps in `(now_s - window_s, now_s]`.
pub fn blink_rate(events: &[Event], window_s: f64, now_s: f64) -> f64 {
    let start = now_s - window_s;
    let blinks = events
        .iter()
        .filter(|e| e.kind == EventKind::Blink && e.timestamp > start && e.timestamp <= now_s)
        .count();
    60.0 * blinks as f64 / window_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DT: f64 = 1.0 / 30.0;

    fn cfg() -> DetectorConfig {
        DetectorConfig::default()
    }

    fn closed(i: usize) -> FrameObservation {
        FrameObservation::with_ear(i as f64 * DT, 0.15)
    }

    fn open(i: usize) -> FrameObservation {
        FrameObservation::with_ear(i as f64 * DT, 0.24)
    }

    fn run(frames: &[FrameObservation], config: &DetectorConfig) -> (DetectorState, Vec<Event>) {
        let mut state = DetectorState::new();
        let mut events = Vec::new();
        for f in frames {
            events.extend(state.step(f, config).unwrap().events);
        }
        (state, events)
    }

    fn kinds(events: &[Event]) -> Vec<EventKind> {
        events.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn classify_examples() {
        let c = cfg();
        assert_eq!(classify_eye_state(Some(0.24), &c), EyeState::Open);
        assert_eq!(classify_eye_state(Some(0.15), &c), EyeState::Closed);
        assert_eq!(classify_eye_state(Some(0.20), &c), EyeState::Open);
        assert_eq!(classify_eye_state(None, &c), EyeState::NoFace);
    }

    #[test]
    fn closure_examples() {
        let c = cfg();
        assert_eq!(classify_closure(0.2, &c), ClosureKind::Blink);
        assert_eq!(classify_closure(0.05, &c), ClosureKind::ShortNoise);
        assert_eq!(classify_closure(1.0, &c), ClosureKind::LongClosure);
        assert_eq!(classify_closure(0.1, &c), ClosureKind::Blink);
        assert_eq!(classify_closure(0.4, &c), ClosureKind::Blink);
    }

    #[test]
    fn crossing_threshold_turns_alarm_on() {
        let mut state = DetectorState {
            score: 10,
            last_timestamp: Some(0.0),
            ..Default::default()
        };
        let out = state.step(&closed(1), &cfg()).unwrap();
        assert_eq!(state.score, 11);
        assert_eq!(kinds(&out.events), vec![EventKind::AlarmOn]);
        assert_eq!(out.events[0].score_at_event, 11);
    }

    #[test]
    fn score_floors_at_zero() {
        let mut state = DetectorState::new();
        let out = state.step(&open(0), &cfg()).unwrap();
        assert_eq!(state.score, 0);
        assert!(out.events.is_empty());
    }

    #[test]
    fn alarm_fires_once_at_eleventh_closed_frame() {
        let frames: Vec<_> = (0..25).map(closed).collect();
        let (state, events) = run(&frames, &cfg());
        let alarms: Vec<_> = events.iter().filter(|e| e.kind == EventKind::AlarmOn).collect();
        assert_eq!(alarms.len(), 1);
        assert_eq!(alarms[0].timestamp, closed(10).timestamp);
        assert_eq!(alarms[0].score_at_event, 11);
        assert_eq!(state.score, 25);
    }

    #[test]
    fn opening_releases_alarm() {
        let mut state = DetectorState {
            score: 11,
            alarm_active: true,
            ..Default::default()
        };
        let out = state.step(&open(0), &cfg()).unwrap();
        assert_eq!(state.score, 10);
        assert_eq!(kinds(&out.events), vec![EventKind::AlarmOff]);
    }

    #[test]
    fn score_respects_cap() {
        let frames: Vec<_> = (0..100).map(closed).collect();
        let (state, _) = run(&frames, &cfg());
        assert_eq!(state.score, 30);
        let c = DetectorConfig {
            score_cap: Some(50),
            ..cfg()
        };
        assert_eq!(run(&frames, &c).0.score, 50);
    }

    #[test]
    fn rejects_non_monotonic_time() {
        let mut state = DetectorState::new();
        state.step(&open(5), &cfg()).unwrap();
        let before = state.clone();
        let err = state.step(&open(5), &cfg()).unwrap_err();
        assert!(matches!(err, DetectorError::NonMonotonicTimestamp { .. }));
        assert_eq!(state, before);
        assert!(state.step(&open(4), &cfg()).is_err());
    }

    #[test]
    fn degenerate_landmarks_error() {
        use crate::geometry::{FaceLandmarks68, Point2};
        let face = FaceLandmarks68::new(vec![Point2::new(1.0, 1.0).unwrap(); 68]).unwrap();
        let err = DetectorState::new()
            .step(&FrameObservation::with_landmarks(0.0, face), &cfg())
            .unwrap_err();
        assert_eq!(err, DetectorError::Geometry(GeometryError::DegenerateEye));
    }

    #[test]
    fn blink_and_long_closure_events() {
        // 6 closed frames = 0.2 s run
        let frames: Vec<_> = (0..20)
            .map(|i| if (5..11).contains(&i) { closed(i) } else { open(i) })
            .collect();
        let (_, events) = run(&frames, &cfg());
        assert_eq!(kinds(&events), vec![EventKind::Blink]);
        assert_eq!(events[0].timestamp, open(11).timestamp);

        // 30 closed frames: long closure once, alarm, no blink
        let frames: Vec<_> = (0..60)
            .map(|i| if (5..35).contains(&i) { closed(i) } else { open(i) })
            .collect();
        let (_, events) = run(&frames, &cfg());
        assert_eq!(
            kinds(&events),
            vec![EventKind::AlarmOn, EventKind::LongClosureStart, EventKind::AlarmOff]
        );
        assert_eq!(events[0].timestamp, closed(15).timestamp);
        // first closed frame more than 0.4 s after the run started: index 5 + 13
        assert_eq!(events[1].timestamp, closed(18).timestamp);
    }

    #[test]
    fn short_closure_is_noise() {
        let frames: Vec<_> = (0..10).map(|i| if i == 3 { closed(i) } else { open(i) }).collect();
        assert!(run(&frames, &cfg()).1.is_empty());
    }

    #[test]
    fn no_face_policy() {
        let c = cfg();
        let frames: Vec<_> = (0..14).map(|i| FrameObservation::no_face(i as f64 * DT)).collect();
        let (state, events) = run(&frames, &c);
        assert!(events.is_empty());
        assert_eq!(state.score, 0);

        let mut frames: Vec<_> = (0..20).map(|i| FrameObservation::no_face(i as f64 * DT)).collect();
        frames.push(open(20));
        let (state, events) = run(&frames, &c);
        assert_eq!(events[0].kind, EventKind::FaceLost);
        assert_eq!(events[0].timestamp, frames[14].timestamp);
        // frames 14..=19 scored closed, then one open frame
        assert_eq!(state.score, 5);
        let last = &events[events.len() - 1];
        assert_eq!(last.kind, EventKind::FaceRecovered);
        assert_eq!(last.timestamp, frames[20].timestamp);
    }

    #[test]
    fn no_face_below_limit_keeps_score() {
        let mut frames: Vec<_> = (0..5).map(closed).collect();
        frames.extend((5..10).map(|i| FrameObservation::no_face(i as f64 * DT)));
        let (state, _) = run(&frames, &cfg());
        assert_eq!(state.score, 5);
    }

    #[test]
    fn perclos_examples() {
        assert_eq!(DetectorState::new().perclos(), Err(DetectorError::EmptyWindow));
        let c = DetectorConfig {
            perclos_window: 100,
            ..cfg()
        };
        let (s, _) = run(&(0..100).map(open).collect::<Vec<_>>(), &c);
        assert_eq!(s.perclos().unwrap(), 0.0);
        let (s, _) = run(&(0..100).map(closed).collect::<Vec<_>>(), &c);
        assert_eq!(s.perclos().unwrap(), 1.0);
        let frames: Vec<_> = (0..100).map(|i| if i % 10 < 3 { closed(i) } else { open(i) }).collect();
        let (s, _) = run(&frames, &c);
        assert_eq!(s.perclos().unwrap(), 0.3);
    }

    #[test]
    fn perclos_window_slides() {
        let c = DetectorConfig {
            perclos_window: 4,
            ..cfg()
        };
        let frames: Vec<_> = (0..10).map(|i| if i < 6 { closed(i) } else { open(i) }).collect();
        let (s, _) = run(&frames, &c);
        assert_eq!(s.perclos_buffer().len(), 4);
        assert_eq!(s.perclos().unwrap(), 0.0);
    }

    fn blink_at(t: f64) -> Event {
        Event {
            kind: EventKind::Blink,
            timestamp: t,
            score_at_event: 0,
            ear_at_event: None,
        }
    }

    #[test]
    fn blink_rate_examples() {
        let events: Vec<_> = [1.0, 5.0, 9.0, 13.0, 17.0].map(blink_at).to_vec();
        assert_eq!(blink_rate(&events, 20.0, 20.0), 15.0);
        assert_eq!(blink_rate(&[], 20.0, 20.0), 0.0);
        let events = [blink_at(9.5), blink_at(10.0), blink_at(9.0)];
        assert_eq!(blink_rate(&events, 1.0, 10.0), 120.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = [
            DetectorConfig {
                ear_threshold: 0.0,
                ..cfg()
            },
            DetectorConfig {
                score_increment: 0,
                ..cfg()
            },
            DetectorConfig {
                score_cap: Some(10),
                ..cfg()
            },
            DetectorConfig {
                blink_min_s: 0.5,
                ..cfg()
            },
            DetectorConfig {
                perclos_window: 0,
                ..cfg()
            },
        ];
        for c in bad {
            assert!(Detector::new(c).is_err());
        }
    }

    #[test]
    fn overrides_layer_onto_defaults() {
        let file = DetectorOverrides {
            ear_threshold: Some(0.25),
            score_threshold: Some(43),
            ..Default::default()
        };
        let flags = DetectorOverrides {
            score_threshold: Some(48),
            ..Default::default()
        };
        let c = file.merged_with(&flags).resolve();
        assert_eq!(c.ear_threshold, 0.25);
        assert_eq!(c.score_threshold, 48);
        assert_eq!(c.effective_score_cap(), 144);
        assert_eq!(c.perclos_window, 90);
        let parsed: DetectorOverrides = serde_json::from_str(r#"{"score_threshold":43}"#).unwrap();
        assert_eq!(parsed.score_threshold, Some(43));
        assert!(serde_json::from_str::<DetectorOverrides>(r#"{"score_treshold":43}"#).is_err());
    }

    #[test]
    fn event_line_format() {
        let e = Event {
            kind: EventKind::AlarmOn,
            timestamp: 0.5,
            score_at_event: 11,
            ear_at_event: Some(0.15),
        };
        assert_eq!(e.to_json_line(), r#"{"kind":"AlarmOn","t":0.5,"score":11,"ear":0.15}"#);
        let e = Event {
            ear_at_event: None,
            ..e
        };
        assert_eq!(e.to_json_line(), r#"{"kind":"AlarmOn","t":0.5,"score":11}"#);
    }

    fn arb_frames() -> impl Strategy<Value = Vec<FrameObservation>> {
        proptest::collection::vec(prop_oneof![3 => (0.0..0.4f64).prop_map(Some), 1 => Just(None)], 0..400).prop_map(
            |ears| {
                ears.into_iter()
                    .enumerate()
                    .map(|(i, e)| match e {
                        Some(e) => FrameObservation::with_ear(i as f64 * DT, e),
                        None => FrameObservation::no_face(i as f64 * DT),
                    })
                    .collect()
            },
        )
    }

    fn arb_config() -> impl Strategy<Value = DetectorConfig> {
        (0.1..0.3f64, 1u32..20, 1u32..4, 1u32..4, 1usize..50, 1u32..20).prop_map(|(thr, st, inc, dec, win, nf)| {
            DetectorConfig {
                ear_threshold: thr,
                score_threshold: st,
                score_increment: inc,
                score_decrement: dec,
                perclos_window: win,
                no_face_limit: nf,
                ..cfg()
            }
        })
    }

    proptest! {
        #[test]
        fn state_machine_invariants(frames in arb_frames(), c in arb_config()) {
            let mut state = DetectorState::new();
            let mut prev_score = 0u32;
            let mut alarm_kinds = Vec::new();
            for f in &frames {
                let out = state.step(f, &c).unwrap();
                prop_assert_eq!(state.alarm_active, state.score > c.score_threshold);
                prop_assert!(state.score.abs_diff(prev_score) <= c.score_increment.max(c.score_decrement));
                prop_assert!(state.perclos_buffer().len() <= c.perclos_window);
                let p = state.perclos().unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                prev_score = state.score;
                alarm_kinds.extend(out.events.iter().map(|e| e.kind).filter(|k| matches!(k, EventKind::AlarmOn | EventKind::AlarmOff)));
            }
            for (i, k) in alarm_kinds.iter().enumerate() {
                let expected = if i % 2 == 0 { EventKind::AlarmOn } else { EventKind::AlarmOff };
                prop_assert_eq!(*k, expected);
            }
        }

        #[test]
        fn alarm_onset_on_all_closed(st in 1u32..40, inc in 1u32..5) {
            let c = DetectorConfig { score_threshold: st, score_increment: inc, ..cfg() };
            let frames: Vec<_> = (0..200).map(closed).collect();
            let (_, events) = run(&frames, &c);
            let on = events.iter().position(|e| e.kind == EventKind::AlarmOn).unwrap();
            // one-based frame index ceil((st + 1) / inc)
            let expected = (st + 1).div_ceil(inc) as usize;
            prop_assert_eq!(events[on].timestamp, closed(expected - 1).timestamp);
        }

        #[test]
        fn single_run_blinks_iff_in_band(n in 1usize..30) {
            let frames: Vec<_> = (0..n + 10).map(|i| if (5..5 + n).contains(&i) { closed(i) } else { open(i) }).collect();
            let (_, events) = run(&frames, &cfg());
            let blinks = events.iter().filter(|e| e.kind == EventKind::Blink).count();
            let d = frames[5 + n].timestamp - frames[5].timestamp;
            let in_band = (0.1..=0.4).contains(&d);
            prop_assert_eq!(blinks, usize::from(in_band));
        }
    }
}
