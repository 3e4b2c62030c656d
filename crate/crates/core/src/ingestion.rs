//! Frame-record parsing and trace validation.
//!
//! The primary format is one JSON object per LF-terminated line:
//!
//! ```text
//! {"t":0.033,"face":true,"ear":0.24}
//! {"t":0.066,"face":true,"landmarks":[[x0,y0],...,[x67,y67]]}
//! {"t":0.1,"face":false}
//! ```
//!
//! `t` (seconds, non-negative) and `face` are required. A present face
//! carries exactly one of `landmarks` (68 points) or `ear`; an absent face
//! carries neither. Unknown fields are rejected.
//!
//! Eye-only traces may instead be CSV with the header `t,face,ear`, `face`
//! being `0` or `1` and `ear` left empty when `face` is `0`. The format is
//! chosen from the first non-blank line.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{extract_eyes, mean_ear, EyeIndexMap, FaceLandmarks68, GeometryError, Point2};

/// Header line that switches a trace reader into CSV mode.
pub const CSV_HEADER: &str = "t,face,ear";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema error at `{path}`: {message}")]
    Schema { line: usize, path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl IngestError {
    fn schema(line: usize, path: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Schema {
            line,
            path: path.into(),
            message: message.into(),
        }
    }

    fn parse(line: usize, message: impl Into<String>) -> Self {
        IngestError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// What a frame says about the face.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceData {
    Absent,
    Landmarks(FaceLandmarks68),
    /// Eye aspect ratio computed upstream.
    Ear(f64),
}

/// One timestamped input record, the stand-in for a single video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub timestamp: f64,
    pub face: FaceData,
}

impl FrameObservation {
    pub fn with_ear(timestamp: f64, ear: f64) -> Self {
        Self {
            timestamp,
            face: FaceData::Ear(ear),
        }
    }

    pub fn no_face(timestamp: f64) -> Self {
        Self {
            timestamp,
            face: FaceData::Absent,
        }
    }

    pub fn with_landmarks(timestamp: f64, landmarks: FaceLandmarks68) -> Self {
        Self {
            timestamp,
            face: FaceData::Landmarks(landmarks),
        }
    }

    pub fn face_present(&self) -> bool {
        !matches!(self.face, FaceData::Absent)
    }

    /// The frame's eye aspect ratio, averaging both eyes when landmarks are given.
    pub fn ear(&self, indices: &EyeIndexMap) -> Result<Option<f64>, GeometryError> {
        match &self.face {
            FaceData::Absent => Ok(None),
            FaceData::Ear(ear) => Ok(Some(*ear)),
            FaceData::Landmarks(face) => mean_ear(&extract_eyes(face, indices)?).map(Some),
        }
    }

    /// Serializes the observation as one JSON record, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        let (landmarks, ear) = match &self.face {
            FaceData::Absent => (None, None),
            FaceData::Landmarks(face) => (Some(face.points()), None),
            FaceData::Ear(ear) => (None, Some(*ear)),
        };
        let record = RecordOut {
            t: self.timestamp,
            face: self.face_present(),
            landmarks,
            ear,
        };
        serde_json::to_string(&record).expect("finite record always serializes")
    }

    /// Serializes an eye-only observation as a CSV row. Landmark frames have
    /// no CSV form.
    pub fn to_csv_line(&self) -> Option<String> {
        match &self.face {
            FaceData::Absent => Some(format!("{},0,", self.timestamp)),
            FaceData::Ear(ear) => Some(format!("{},1,{}", self.timestamp, ear)),
            FaceData::Landmarks(_) => None,
        }
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    t: f64,
    face: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    landmarks: Option<&'a [Point2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ear: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    t: f64,
    face: bool,
    #[serde(default)]
    landmarks: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    ear: Option<f64>,
}

fn check_timestamp(t: f64, line: usize) -> Result<f64, IngestError> {
    if t.is_finite() && t >= 0.0 {
        Ok(t)
    } else {
        Err(IngestError::schema(
            line,
            "t",
            format!("timestamp must be finite and non-negative, got {t}"),
        ))
    }
}

fn check_ear(ear: f64, line: usize) -> Result<f64, IngestError> {
    if ear.is_finite() && ear >= 0.0 {
        Ok(ear)
    } else {
        Err(IngestError::schema(
            line,
            "ear",
            format!("ear must be finite and non-negative, got {ear}"),
        ))
    }
}

/// Parses one JSON frame record. `line` is the one-based line number used in errors.
pub fn parse_frame_record(text: &str, line: usize) -> Result<FrameObservation, IngestError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RecordIn = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => IngestError::schema(line, path, inner.to_string()),
            _ => IngestError::parse(line, inner.to_string()),
        }
    })?;
    de.end().map_err(|e| IngestError::parse(line, e.to_string()))?;

    let timestamp = check_timestamp(raw.t, line)?;
    let face = match (raw.face, raw.landmarks, raw.ear) {
        (false, None, None) => FaceData::Absent,
        (false, _, _) => {
            return Err(IngestError::schema(
                line,
                "face",
                "absent face must carry neither landmarks nor ear",
            ))
        }
        (true, Some(points), None) => {
            if points.len() != crate::geometry::FACE_LANDMARK_COUNT {
                return Err(IngestError::schema(
                    line,
                    "landmarks",
                    format!("expected 68 landmarks, got {}", points.len()),
                ));
            }
            let points = points
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    let path = format!("landmarks[{i}]");
                    match p[..] {
                        [x, y] => Point2::new(x, y).map_err(|e| IngestError::schema(line, path, e.to_string())),
                        _ => Err(IngestError::schema(
                            line,
                            path,
                            format!("expected [x, y], got {} numbers", p.len()),
                        )),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            FaceData::Landmarks(FaceLandmarks68::new(points).expect("count checked above"))
        }
        (true, None, Some(ear)) => FaceData::Ear(check_ear(ear, line)?),
        (true, _, _) => {
            return Err(IngestError::schema(
                line,
                "face",
                "present face needs exactly one of landmarks or ear",
            ))
        }
    };
    Ok(FrameObservation { timestamp, face })
}

/// Parses one `t,face,ear` CSV row.
pub fn parse_csv_record(text: &str, line: usize) -> Result<FrameObservation, IngestError> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    let [t, face, ear] = fields[..] else {
        return Err(IngestError::parse(
            line,
            format!("expected 3 fields, got {}", fields.len()),
        ));
    };
    let t: f64 = t
        .parse()
        .map_err(|_| IngestError::parse(line, format!("invalid number `{t}` in column t")))?;
    let timestamp = check_timestamp(t, line)?;
    let face = match (face, ear) {
        ("0", "") => FaceData::Absent,
        ("0", _) => return Err(IngestError::schema(line, "ear", "ear must be empty when face is 0")),
        ("1", "") => return Err(IngestError::schema(line, "ear", "ear required when face is 1")),
        ("1", ear) => {
            let ear: f64 = ear
                .parse()
                .map_err(|_| IngestError::parse(line, format!("invalid number `{ear}` in column ear")))?;
            FaceData::Ear(check_ear(ear, line)?)
        }
        (other, _) => {
            return Err(IngestError::schema(
                line,
                "face",
                format!("face must be 0 or 1, got `{other}`"),
            ))
        }
    };
    Ok(FrameObservation { timestamp, face })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Unknown,
    Json,
    Csv,
}

/// Lazily parses frame records from a byte stream, one line at a time.
///
/// Iteration stops after the first error.
pub struct TraceReader<R> {
    reader: R,
    buf: Vec<u8>,
    line: usize,
    format: Format,
    done: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            buf: Vec::new(),
            line: 0,
            format: Format::Unknown,
            done: false,
        }
    }

    fn next_record(&mut self) -> Result<Option<FrameObservation>, IngestError> {
        loop {
            self.buf.clear();
            if self.reader.read_until(b'\n', &mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let text = std::str::from_utf8(&self.buf)
                .map_err(|e| IngestError::parse(self.line, format!("invalid UTF-8: {e}")))?
                .trim();
            if text.is_empty() {
                continue;
            }
            if self.format == Format::Unknown {
                if text == CSV_HEADER {
                    self.format = Format::Csv;
                    continue;
                }
                self.format = Format::Json;
            }
            return match self.format {
                Format::Csv => parse_csv_record(text, self.line),
                _ => parse_frame_record(text, self.line),
            }
            .map(Some);
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<FrameObservation, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_record().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Opens a trace file for lazy reading.
pub fn open_trace(path: impl AsRef<Path>) -> Result<TraceReader<BufReader<File>>, IngestError> {
    Ok(TraceReader::new(BufReader::new(File::open(path)?)))
}

/// An ordered sequence of frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub frames: Vec<FrameObservation>,
    pub source_id: String,
}

impl Trace {
    pub fn new(source_id: impl Into<String>, frames: Vec<FrameObservation>) -> Self {
        Self {
            frames,
            source_id: source_id.into(),
        }
    }

    /// Reads a whole trace file into memory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let frames = open_trace(path)?.collect::<Result<Vec<_>, _>>()?;
        let source_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self { frames, source_id })
    }

    /// The trace as JSON lines, each LF-terminated.
    pub fn to_json_lines(&self) -> String {
        self.frames.iter().fold(String::new(), |mut out, f| {
            let _ = writeln!(out, "{}", f.to_json_line());
            out
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceIssueKind {
    /// Timestamp went backwards.
    NonMonotonic {
        previous: f64,
        current: f64,
    },
    DuplicateTimestamp {
        timestamp: f64,
    },
    /// Warning only: the interval before this frame exceeds ten times the median.
    Gap {
        interval: f64,
        median_interval: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceIssue {
    pub index: usize,
    pub kind: TraceIssueKind,
}

impl TraceIssue {
    pub fn is_warning(&self) -> bool {
        matches!(self.kind, TraceIssueKind::Gap { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<TraceIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_violations(&self) -> bool {
        self.issues.iter().any(|i| !i.is_warning())
    }
}

/// Gap warnings fire above this multiple of the median frame interval.
pub const GAP_FACTOR: f64 = 10.0;

/// Reports ordering violations and suspicious gaps without rejecting the trace.
///
/// The median interval is the lower median of the strictly positive
/// inter-frame intervals.
pub fn validate_trace(trace: &Trace) -> ValidationReport {
    let times: Vec<f64> = trace.frames.iter().map(|f| f.timestamp).collect();
    let mut positive: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    positive.sort_by(f64::total_cmp);
    let median = positive.get(positive.len().saturating_sub(1) / 2).copied();

    let mut issues = Vec::new();
    for (i, w) in times.windows(2).enumerate() {
        let index = i + 1;
        let (previous, current) = (w[0], w[1]);
        let interval = current - previous;
        let kind = if interval < 0.0 {
            Some(TraceIssueKind::NonMonotonic { previous, current })
        } else if interval == 0.0 {
            Some(TraceIssueKind::DuplicateTimestamp { timestamp: current })
        } else {
            median
                .filter(|m| interval > GAP_FACTOR * m)
                .map(|median_interval| TraceIssueKind::Gap {
                    interval,
                    median_interval,
                })
        };
        issues.extend(kind.map(|kind| TraceIssue { index, kind }));
    }
    ValidationReport { issues }
}
