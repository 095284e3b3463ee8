//! Purely geometric line-segment matching for stereo and frame-to-frame
//! tracking.
//!
//! Each reference segment is matched by solving a small nonnegative LASSO
//! over the geometric residuals of all candidates, followed by a uniqueness
//! ratio test and a robust epipolar outlier filter. A synthetic stereo scene
//! generator provides exact ground truth, and a Gauss-Newton estimator
//! recovers frame-to-frame motion from the resulting correspondences.

pub mod eval;
pub mod geometry;
pub mod io;
pub mod matcher;
pub mod motion;
pub mod se3;
pub mod sparse;
pub mod synth;

pub use geometry::{ErrorVector, LineSegment2D, MatchMode};
pub use matcher::{Match, MatchConfig, MatchSet};
pub use se3::{se3_exp, se3_log, PoseSE3};
pub use sparse::{solve_homotopy, solve_ista, DesignMatrix, SolverConfig, WeightVector};
pub use synth::{SceneConfig, Segment3D, StereoRig};
