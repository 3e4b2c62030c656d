//! Drowsiness detection from facial-landmark streams.
//!
//! Frames carry either 68 facial landmarks or a precomputed Eye Aspect
//! Ratio. The [`detector`] turns them into a running closed-eye score with
//! an alarm, blink and face-loss events and a PERCLOS window. [`synth`]
//! generates labeled traces from scenario scripts and [`eval`] scores
//! detector alarms against them.

pub mod cli;
pub mod detector;
pub mod eval;
pub mod geometry;
pub mod ingestion;
pub mod rng;
pub mod synth;

pub use detector::{Detector, DetectorConfig, DetectorOverrides, DetectorState, Event, EventKind, EyeState};
pub use eval::{EvalReport, EventLog};
pub use geometry::{compute_ear, EyeLandmarks, FaceLandmarks68, Point2};
pub use ingestion::{FrameObservation, Trace};
pub use synth::{generate_trace, LabeledTrace, ScenarioScript};
