//! The ten-row accuracy test table and its scenario mapping.
//!
//! Each row names an individual, the EAR threshold and alarm sensitivity used
//! for that run, the ambient light and a remark, plus the reported number of
//! alarms raised out of three drowsiness events. [`scenario_from_table_row`]
//! turns a row into a scenario script:
//!
//! | condition        | effect                  |
//! |------------------|-------------------------|
//! | Bright           | noise 0.005             |
//! | Dim              | noise 0.02              |
//! | Very Dim         | noise 0.05              |
//! | Rainy weather    | noise 0.04              |
//! | Wear sunglasses  | dropout 1.0             |
//! | Night drive      | dropout 0.5             |
//!
//! When light and remark both set a noise level the larger one applies.
//! The alarm sensitivity becomes the detector's score threshold.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ScenarioFile, ScenarioScript, Segment, SegmentKind, SynthError};
use crate::detector::DetectorOverrides;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Individual {
    A,
    B,
    C,
}

impl Individual {
    /// Open and closed EAR baselines of this individual's eyes.
    pub fn baselines(self) -> (f64, f64) {
        match self {
            Individual::A => (0.24, 0.15),
            Individual::B => (0.32, 0.215),
            Individual::C => (0.28, 0.10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Light {
    Bright,
    Dim,
    #[serde(rename = "Very Dim")]
    VeryDim,
}

impl Light {
    pub fn noise_stddev(self) -> f64 {
        match self {
            Light::Bright => 0.005,
            Light::Dim => 0.02,
            Light::VeryDim => 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Remark {
    Normal,
    #[serde(rename = "Wear sunglasses")]
    WearSunglasses,
    #[serde(rename = "Wear glasses")]
    WearGlasses,
    #[serde(rename = "Rainy weather")]
    RainyWeather,
    #[serde(rename = "Night drive")]
    NightDrive,
}

impl Remark {
    pub fn noise_stddev(self) -> f64 {
        match self {
            Remark::RainyWeather => 0.04,
            _ => 0.0,
        }
    }

    pub fn dropout_probability(self) -> f64 {
        match self {
            Remark::WearSunglasses => 1.0,
            Remark::NightDrive => 0.5,
            _ => 0.0,
        }
    }
}

macro_rules! display_via_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).expect("unit variant");
                f.write_str(s.as_str().expect("unit variant serializes as string"))
            }
        }
    )*};
}

display_via_serde!(Individual, Light, Remark);

/// Identifies one table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowKey {
    pub individual: Individual,
    pub light: Light,
    pub remark: Remark,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.individual, self.light, self.remark)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub individual: Individual,
    pub ear_threshold: f64,
    pub alarm_sensitivity: u32,
    pub light: Light,
    pub remark: Remark,
    /// Alarms raised out of [`EPISODES_PER_TEST`] in the reported run.
    pub reported_detected: u32,
}

impl TableRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            individual: self.individual,
            light: self.light,
            remark: self.remark,
        }
    }

    /// One-based position in [`REFERENCE_TABLE`].
    pub fn number(&self) -> usize {
        REFERENCE_TABLE
            .iter()
            .position(|r| r.key() == self.key())
            .map_or(0, |i| i + 1)
    }

    /// Scenario file name, e.g. `row03_a_bright_wear_sunglasses.json`.
    pub fn file_name(&self) -> String {
        let slug = format!("{}_{}_{}", self.individual, self.light, self.remark)
            .to_lowercase()
            .replace(' ', "_");
        format!("row{:02}_{slug}.json", self.number())
    }
}

const fn row(
    individual: Individual,
    ear_threshold: f64,
    alarm_sensitivity: u32,
    light: Light,
    remark: Remark,
    reported_detected: u32,
) -> TableRow {
    TableRow {
        individual,
        ear_threshold,
        alarm_sensitivity,
        light,
        remark,
        reported_detected,
    }
}

pub const REFERENCE_TABLE: [TableRow; 10] = {
    use Individual::*;
    use Light::*;
    use Remark::*;
    [
        row(A, 0.2, 48, Bright, Normal, 3),
        row(A, 0.2, 48, Dim, Normal, 3),
        row(A, 0.2, 48, Bright, WearSunglasses, 0),
        row(B, 0.25, 43, Bright, Normal, 3),
        row(B, 0.25, 43, Dim, Normal, 3),
        row(B, 0.25, 43, Dim, RainyWeather, 2),
        row(C, 0.22, 48, Bright, WearGlasses, 3),
        row(C, 0.22, 48, Dim, WearGlasses, 3),
        row(C, 0.22, 48, VeryDim, NightDrive, 1),
        row(C, 0.22, 48, VeryDim, Normal, 3),
    ]
};

pub const EPISODES_PER_TEST: u32 = 3;
pub const TEST_DURATION_S: f64 = 60.0;
pub const TEST_FPS: f64 = 30.0;
/// Drowsy episodes as (start, duration) in seconds: a short nod, a medium
/// closure and a long one.
pub const EPISODE_PLAN: [(f64, f64); 3] = [(15.0, 1.8), (30.0, 2.8), (45.0, 5.0)];
/// Blink period while awake.
pub const AWAKE_BLINK_PERIOD_S: f64 = 4.0;

pub fn lookup_row(key: RowKey) -> Result<&'static TableRow, SynthError> {
    REFERENCE_TABLE
        .iter()
        .find(|r| r.key() == key)
        .ok_or_else(|| SynthError::UnknownRow(key.to_string()))
}

/// Builds the scenario script for one of the ten table rows.
pub fn scenario_from_table_row(key: RowKey) -> Result<ScenarioScript, SynthError> {
    let row = lookup_row(key)?;
    let (open, closed) = row.individual.baselines();
    let mut segments = Vec::new();
    let mut cursor = 0.0;
    for (start, length) in EPISODE_PLAN {
        segments.push(Segment::new(
            cursor,
            start,
            SegmentKind::Blink {
                period_s: AWAKE_BLINK_PERIOD_S,
            },
        ));
        segments.push(Segment::new(start, start + length, SegmentKind::ClosedEyes));
        cursor = start + length;
    }
    segments.push(Segment::new(
        cursor,
        TEST_DURATION_S,
        SegmentKind::Blink {
            period_s: AWAKE_BLINK_PERIOD_S,
        },
    ));
    Ok(ScenarioScript {
        duration_s: TEST_DURATION_S,
        fps: TEST_FPS,
        baseline_open_ear: open,
        baseline_closed_ear: closed,
        segments,
        noise_stddev: row.light.noise_stddev().max(row.remark.noise_stddev()),
        dropout_probability: row.remark.dropout_probability(),
        seed: row.number() as u64,
    })
}

/// The complete scenario document for a row, detector settings included.
pub fn scenario_file_for_row(row: &TableRow) -> Result<ScenarioFile, SynthError> {
    Ok(ScenarioFile {
        name: row.file_name().trim_end_matches(".json").to_owned(),
        row: Some(*row),
        detector: DetectorOverrides {
            ear_threshold: Some(row.ear_threshold),
            score_threshold: Some(row.alarm_sensitivity),
            ..Default::default()
        },
        script: scenario_from_table_row(row.key())?,
    })
}
