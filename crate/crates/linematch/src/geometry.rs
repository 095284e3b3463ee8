//! Geometric residuals between oriented 2D line segments.
//!
//! All angles are in radians. Segment orientation (the start/end order) is
//! preserved and meaningful: anti-parallel segments are distinct from
//! parallel ones.

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Target residual vector: a perfect match has angle residuals 0 and
/// overlap/length ratios 1.
pub const TARGET: [f64; 4] = [0.0, 0.0, 1.0, 1.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("zero-length segment (id {0})")]
    ZeroLength(u64),
    #[error("non-finite endpoint coordinate (id {0})")]
    NonFinite(u64),
}

/// Which epipolar direction the midpoint flow is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Rectified stereo pair: flow should be horizontal.
    Stereo,
    /// Consecutive frames under small motion: flow should be vertical.
    FrameToFrame,
}

/// Oriented 2D line segment in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment2D {
    start: Point2<f64>,
    end: Point2<f64>,
    id: u64,
}

impl LineSegment2D {
    pub fn new(start: Point2<f64>, end: Point2<f64>, id: u64) -> Result<Self, GeometryError> {
        if !(start.x.is_finite() && start.y.is_finite() && end.x.is_finite() && end.y.is_finite())
        {
            return Err(GeometryError::NonFinite(id));
        }
        if start == end {
            return Err(GeometryError::ZeroLength(id));
        }
        Ok(Self { start, end, id })
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64, id: u64) -> Result<Self, GeometryError> {
        Self::new(Point2::new(x1, y1), Point2::new(x2, y2), id)
    }

    pub fn start(&self) -> Point2<f64> {
        self.start
    }

    pub fn end(&self) -> Point2<f64> {
        self.end
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn length(&self) -> f64 {
        (self.start - self.end).norm()
    }

    pub fn midpoint(&self) -> Point2<f64> {
        nalgebra::center(&self.start, &self.end)
    }
}

/// Residual vector of a candidate pair: [angle, epipolar angle, overlap, length ratio].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorVector {
    pub theta: f64,
    pub theta_epip: f64,
    pub rho: f64,
    pub mu: f64,
}

impl ErrorVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.theta, self.theta_epip, self.rho, self.mu]
    }

    /// Euclidean distance to the perfect-match target.
    pub fn residual(&self) -> f64 {
        let d = [
            self.theta - TARGET[0],
            self.theta_epip - TARGET[1],
            self.rho - TARGET[2],
            self.mu - TARGET[3],
        ];
        d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Unit direction of a segment, from end towards start.
pub fn direction(seg: &LineSegment2D) -> Vector2<f64> {
    (seg.start - seg.end).normalize()
}

/// Angle between two oriented segments, in [0, pi).
pub fn angle_between(a: &LineSegment2D, b: &LineSegment2D) -> f64 {
    let da = direction(a);
    let db = direction(b);
    let cross = (da.x * db.y - da.y * db.x).abs();
    // atan2 is total where the atan quotient would divide by zero.
    cross.atan2(da.dot(&db))
}

/// Ratio of the longer to the shorter segment length, always >= 1.
pub fn length_ratio(a: &LineSegment2D, b: &LineSegment2D) -> f64 {
    let la = a.length();
    let lb = b.length();
    la.max(lb) / la.min(lb)
}

/// Common extent of the two segments as 1D intervals on a supporting line,
/// normalized by the larger projected interval. Symmetrized by averaging the
/// projections onto either segment's line. In [0, 1].
pub fn overlap(a: &LineSegment2D, b: &LineSegment2D) -> f64 {
    0.5 * (overlap_onto(a, b) + overlap_onto(b, a))
}

fn overlap_onto(a: &LineSegment2D, b: &LineSegment2D) -> f64 {
    let axis = direction(a);
    let project = |p: Point2<f64>| axis.dot(&p.coords);
    let (a0, a1) = minmax(project(a.start), project(a.end));
    let (b0, b1) = minmax(project(b.start), project(b.end));
    let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
    let denom = (a1 - a0).max(b1 - b0);
    if denom <= 0.0 {
        // b is perpendicular to a; its projection is a point.
        return 0.0;
    }
    (inter / denom).clamp(0.0, 1.0)
}

fn minmax(x: f64, y: f64) -> (f64, f64) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Midpoint flow vector m_a - m_b.
pub fn midpoint_flow(a: &LineSegment2D, b: &LineSegment2D) -> Vector2<f64> {
    a.midpoint() - b.midpoint()
}

/// Angular deviation of the midpoint flow from the expected epipolar
/// direction (horizontal for stereo, vertical frame-to-frame), in [0, pi/2].
/// Zero flow is defined as 0.
pub fn epipolar_angle(a: &LineSegment2D, b: &LineSegment2D, mode: MatchMode) -> f64 {
    let flow = midpoint_flow(a, b);
    let norm = flow.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let cross = match mode {
        MatchMode::Stereo => flow.y.abs(),        // |flow x (1,0)|
        MatchMode::FrameToFrame => flow.x.abs(), // |flow x (0,1)|
    };
    (cross / norm).clamp(0.0, 1.0).asin()
}

/// Assemble the full residual vector for a candidate pair.
pub fn error_vector(a: &LineSegment2D, b: &LineSegment2D, mode: MatchMode) -> ErrorVector {
    ErrorVector {
        theta: angle_between(a, b),
        theta_epip: epipolar_angle(a, b, mode),
        rho: overlap(a, b),
        mu: length_ratio(a, b),
    }
}
