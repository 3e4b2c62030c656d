//! Landmark types and the Eye Aspect Ratio.
//!
//! An eye is described by six ordered points `a1..a6`: `a1` is the outer
//! corner, `a4` the inner corner, `a2`/`a3` sit on the upper lid and
//! `a6`/`a5` on the lower lid. The aspect ratio is
//!
//! ```text
//! EAR = (|a2 - a6| + |a3 - a5|) / (2 |a1 - a4|)
//! ```
//!
//! which stays roughly constant while the eye is open and drops towards zero
//! as the lids close.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of points in the standard facial shape-predictor layout.
pub const FACE_LANDMARK_COUNT: usize = 68;

/// Number of ocular landmarks per eye.
pub const EYE_LANDMARK_COUNT: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite landmark coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("expected {expected} landmarks, got {actual}")]
    WrongCount { expected: usize, actual: usize },
    #[error("degenerate eye: horizontal corners a1 and a4 coincide")]
    DegenerateEye,
    #[error("eye landmark index {index} is outside the 68-point layout")]
    IndexOutOfRange { index: usize },
}

/// A 2D landmark coordinate in pixels. Both components are finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    x: f64,
    y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite { x, y })
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

impl TryFrom<[f64; 2]> for Point2 {
    type Error = GeometryError;

    fn try_from([x, y]: [f64; 2]) -> Result<Self, Self::Error> {
        Point2::new(x, y)
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Euclidean distance between two landmarks.
pub fn euclidean_distance(p: Point2, q: Point2) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// The six ordered ocular landmarks `a1..a6` of one eye.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeLandmarks {
    points: [Point2; EYE_LANDMARK_COUNT],
}

impl EyeLandmarks {
    pub fn new(points: [Point2; EYE_LANDMARK_COUNT]) -> Self {
        Self { points }
    }

    pub fn from_slice(points: &[Point2]) -> Result<Self, GeometryError> {
        let points: [Point2; EYE_LANDMARK_COUNT] = points.try_into().map_err(|_| GeometryError::WrongCount {
            expected: EYE_LANDMARK_COUNT,
            actual: points.len(),
        })?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2; EYE_LANDMARK_COUNT] {
        &self.points
    }

    /// Landmark `a{n}` using the one-based numbering of the EAR formula.
    fn a(&self, n: usize) -> Point2 {
        self.points[n - 1]
    }
}

/// Eye Aspect Ratio of a single eye.
///
/// Fails with [`GeometryError::DegenerateEye`] when the horizontal corners
/// coincide; a zero denominator means the landmarks are corrupt and must not
/// be reported as a closed eye.
pub fn compute_ear(eye: &EyeLandmarks) -> Result<f64, GeometryError> {
    let horizontal = euclidean_distance(eye.a(1), eye.a(4));
    if horizontal == 0.0 {
        return Err(GeometryError::DegenerateEye);
    }
    let vertical = euclidean_distance(eye.a(2), eye.a(6)) + euclidean_distance(eye.a(3), eye.a(5));
    Ok(vertical / (2.0 * horizontal))
}

/// A full 68-point face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct FaceLandmarks68 {
    points: Vec<Point2>,
}

impl FaceLandmarks68 {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.len() != FACE_LANDMARK_COUNT {
            return Err(GeometryError::WrongCount {
                expected: FACE_LANDMARK_COUNT,
                actual: points.len(),
            });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }
}

impl TryFrom<Vec<Point2>> for FaceLandmarks68 {
    type Error = GeometryError;

    fn try_from(points: Vec<Point2>) -> Result<Self, Self::Error> {
        FaceLandmarks68::new(points)
    }
}

impl From<FaceLandmarks68> for Vec<Point2> {
    fn from(face: FaceLandmarks68) -> Self {
        face.points
    }
}

/// Which of the 68 face points form each eye, in `a1..a6` order.
///
/// The default is the usual zero-based layout: 36..=41 for the left eye and
/// 42..=47 for the right. Landmark sources with a different layout override
/// it through the detector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EyeIndexMap {
    pub left: [usize; EYE_LANDMARK_COUNT],
    pub right: [usize; EYE_LANDMARK_COUNT],
}

pub const DEFAULT_EYE_INDICES: EyeIndexMap = EyeIndexMap {
    left: [36, 37, 38, 39, 40, 41],
    right: [42, 43, 44, 45, 46, 47],
};

impl Default for EyeIndexMap {
    fn default() -> Self {
        DEFAULT_EYE_INDICES
    }
}

impl EyeIndexMap {
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self.left.iter().chain(&self.right).find(|&&i| i >= FACE_LANDMARK_COUNT) {
            Some(&index) => Err(GeometryError::IndexOutOfRange { index }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyePair {
    pub left: EyeLandmarks,
    pub right: EyeLandmarks,
}

/// Projects both eyes out of a face using `indices`.
pub fn extract_eyes(face: &FaceLandmarks68, indices: &EyeIndexMap) -> Result<EyePair, GeometryError> {
    indices.validate()?;
    let pick = |idx: &[usize; EYE_LANDMARK_COUNT]| EyeLandmarks::new(idx.map(|i| face.points[i]));
    Ok(EyePair {
        left: pick(&indices.left),
        right: pick(&indices.right),
    })
}

/// Mean of the two per-eye aspect ratios.
pub fn mean_ear(pair: &EyePair) -> Result<f64, GeometryError> {
    let left = compute_ear(&pair.left)?;
    let right = compute_ear(&pair.right)?;
    Ok((left + right) / 2.0)
}
