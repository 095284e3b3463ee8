//! Frame-to-frame pose estimation from matched line segments: Gauss-Newton
//! on point-to-line reprojection errors with Pseudo-Huber IRLS weights,
//! followed by an outlier-removal refinement pass.

use crate::se3::{se3_exp, PoseSE3};
use crate::synth::{Segment3D, StereoRig};
use nalgebra::{Matrix6, Point3, Vector2, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },
    #[error("observed line coefficients are invalid")]
    InvalidLine,
    #[error("degenerate geometry: normal equations condition number {0:.3e}")]
    DegenerateGeometry(f64),
    #[error("transformed point behind camera")]
    PointBehindCamera,
}

/// A 3D segment in the previous frame paired with its matched 2D line in the
/// current frame. Line coefficients are normalized so the normal part
/// (l1, l2) has unit norm, making l . (u, v, 1) a pixel distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineObservation {
    pub segment3d: Segment3D,
    pub observed_line: Vector3<f64>,
}

impl LineObservation {
    pub fn new(segment3d: Segment3D, line: Vector3<f64>) -> Result<Self, MotionError> {
        if !line.iter().all(|x| x.is_finite()) {
            return Err(MotionError::InvalidLine);
        }
        let n = f64::sqrt(line.x * line.x + line.y * line.y);
        if n <= 0.0 {
            return Err(MotionError::InvalidLine);
        }
        Ok(Self {
            segment3d,
            observed_line: line / n,
        })
    }

    /// Build the observation from the observed segment's endpoints via the
    /// homogeneous cross product.
    pub fn from_endpoints(
        segment3d: Segment3D,
        start: Vector2<f64>,
        end: Vector2<f64>,
    ) -> Result<Self, MotionError> {
        let a = Vector3::new(start.x, start.y, 1.0);
        let b = Vector3::new(end.x, end.y, 1.0);
        Self::new(segment3d, a.cross(&b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    /// Pseudo-Huber scale in pixels.
    pub delta: f64,
    pub max_gn_iters: usize,
    /// Convergence threshold on the update norm.
    pub convergence_tol: f64,
    /// Residual cutoff for the second (outlier-free) pass, in pixels.
    pub outlier_threshold: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            max_gn_iters: 20,
            convergence_tol: 1e-8,
            outlier_threshold: 2.0,
        }
    }
}

/// IRLS weight of the Pseudo-Huber loss: rho'(r)/r = 1/sqrt(1 + (r/delta)^2).
pub fn pseudo_huber_weight(r: f64, delta: f64) -> f64 {
    1.0 / (1.0 + (r / delta).powi(2)).sqrt()
}

/// Pseudo-Huber loss value delta^2 (sqrt(1 + (r/delta)^2) - 1).
pub fn pseudo_huber_loss(r: f64, delta: f64) -> f64 {
    delta * delta * ((1.0 + (r / delta).powi(2)).sqrt() - 1.0)
}

/// Signed pixel distance from the projection of a transformed 3D point to a
/// normalized image line.
pub fn point_to_line_residual(
    endpoint: &Point3<f64>,
    pose: &PoseSE3,
    rig: &StereoRig,
    line: &Vector3<f64>,
) -> Result<f64, MotionError> {
    let p = pose.transform_point(endpoint);
    if p.z <= 1e-9 {
        return Err(MotionError::PointBehindCamera);
    }
    let px = rig.project(&p);
    Ok(line.x * px.x + line.y * px.y + line.z)
}

/// Residual and its analytic Jacobian w.r.t. a left-multiplicative twist
/// update exp(xi) * pose, with xi = [rho, phi].
pub fn residual_and_jacobian(
    endpoint: &Point3<f64>,
    pose: &PoseSE3,
    rig: &StereoRig,
    line: &Vector3<f64>,
) -> Result<(f64, Vector6<f64>), MotionError> {
    let p = pose.transform_point(endpoint);
    if p.z <= 1e-9 {
        return Err(MotionError::PointBehindCamera);
    }
    let inv_z = 1.0 / p.z;
    let u = rig.fx * p.x * inv_z + rig.cx;
    let v = rig.fy * p.y * inv_z + rig.cy;
    let r = line.x * u + line.y * v + line.z;

    // d(u,v)/dp
    let du = Vector3::new(rig.fx * inv_z, 0.0, -rig.fx * p.x * inv_z * inv_z);
    let dv = Vector3::new(0.0, rig.fy * inv_z, -rig.fy * p.y * inv_z * inv_z);
    // dr/dp = l1 du + l2 dv
    let drdp = line.x * du + line.y * dv;
    // dp/dxi at xi = 0: dp = d_rho + d_phi x p
    let mut jac = Vector6::zeros();
    jac[0] = drdp.x;
    jac[1] = drdp.y;
    jac[2] = drdp.z;
    let cross = Vector3::new(
        -p.y * drdp.z + p.z * drdp.y,
        p.x * drdp.z - p.z * drdp.x,
        -p.x * drdp.y + p.y * drdp.x,
    );
    // dr/dphi = drdp . (dphi x p) => components via triple product
    jac[3] = -cross.x;
    jac[4] = -cross.y;
    jac[5] = -cross.z;
    Ok((r, jac))
}

#[derive(Debug, Clone, Default)]
pub struct MotionStats {
    pub pass1_iters: usize,
    pub pass2_iters: usize,
    pub dropped_behind_camera: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct MotionEstimate {
    pub pose: PoseSE3,
    pub inlier_mask: Vec<bool>,
    pub stats: MotionStats,
}

const MAX_CONDITION: f64 = 1e12;
const MAX_HALVINGS: usize = 8;

/// Two-pass Gauss-Newton pose estimation.
///
/// Pass 1 minimizes the Pseudo-Huber cost of all residuals (two per
/// observation, one per endpoint). Pass 2 drops observations whose largest
/// absolute residual exceeds the cutoff and re-runs plain Gauss-Newton from
/// the pass-1 pose.
pub fn estimate_motion(
    observations: &[LineObservation],
    rig: &StereoRig,
    cfg: &RobustConfig,
    init: &PoseSE3,
) -> Result<MotionEstimate, MotionError> {
    if observations.len() < 3 {
        return Err(MotionError::TooFewObservations {
            min: 3,
            got: observations.len(),
        });
    }
    let mut stats = MotionStats::default();
    let all = vec![true; observations.len()];

    let (pose1, iters1, conv1) =
        gauss_newton(observations, &all, rig, cfg, init, true, &mut stats)?;
    stats.pass1_iters = iters1;

    // Outlier rejection on pass-1 residuals.
    let mut mask = vec![false; observations.len()];
    for (i, obs) in observations.iter().enumerate() {
        let worst = max_abs_residual(obs, &pose1, rig);
        mask[i] = matches!(worst, Some(r) if r <= cfg.outlier_threshold);
    }
    if mask.iter().filter(|&&m| m).count() < 3 {
        // Not enough inliers to refine; report pass 1 as the estimate.
        stats.converged = conv1;
        return Ok(MotionEstimate {
            pose: pose1,
            inlier_mask: mask,
            stats,
        });
    }

    let (pose2, iters2, conv2) =
        gauss_newton(observations, &mask, rig, cfg, &pose1, false, &mut stats)?;
    stats.pass2_iters = iters2;
    stats.converged = conv1 && conv2;
    Ok(MotionEstimate {
        pose: pose2,
        inlier_mask: mask,
        stats,
    })
}

fn max_abs_residual(obs: &LineObservation, pose: &PoseSE3, rig: &StereoRig) -> Option<f64> {
    let r1 = point_to_line_residual(&obs.segment3d.p, pose, rig, &obs.observed_line).ok()?;
    let r2 = point_to_line_residual(&obs.segment3d.q, pose, rig, &obs.observed_line).ok()?;
    Some(r1.abs().max(r2.abs()))
}

fn gauss_newton(
    observations: &[LineObservation],
    mask: &[bool],
    rig: &StereoRig,
    cfg: &RobustConfig,
    init: &PoseSE3,
    robust: bool,
    stats: &mut MotionStats,
) -> Result<(PoseSE3, usize, bool), MotionError> {
    let mut pose = *init;
    let mut cost = total_cost(observations, mask, rig, cfg, &pose, robust, stats);

    for iter in 0..cfg.max_gn_iters {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        let mut used = 0usize;
        for (obs, _) in observations.iter().zip(mask).filter(|(_, &m)| m) {
            for endpoint in [&obs.segment3d.p, &obs.segment3d.q] {
                match residual_and_jacobian(endpoint, &pose, rig, &obs.observed_line) {
                    Ok((r, jac)) => {
                        let w = if robust {
                            pseudo_huber_weight(r, cfg.delta)
                        } else {
                            1.0
                        };
                        h += w * jac * jac.transpose();
                        g += w * r * jac;
                        used += 1;
                    }
                    Err(MotionError::PointBehindCamera) => {
                        stats.dropped_behind_camera += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if used < 6 {
            return Err(MotionError::TooFewObservations { min: 3, got: used / 2 });
        }

        let eig = h.symmetric_eigen().eigenvalues;
        let (emin, emax) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
        if emin <= 0.0 || emax / emin > MAX_CONDITION {
            return Err(MotionError::DegenerateGeometry(emax / emin.max(f64::MIN_POSITIVE)));
        }

        let step = h
            .cholesky()
            .map(|ch| ch.solve(&(-g)))
            .ok_or(MotionError::DegenerateGeometry(emax / emin))?;

        // Step halving keeps the weighted cost non-increasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = se3_exp(&(scale * step)).compose(&pose);
            let trial_cost = total_cost(observations, mask, rig, cfg, &trial, robust, stats);
            if trial_cost <= cost + 1e-15 {
                pose = trial;
                cost = trial_cost;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Ok((pose, iter + 1, true)); // local minimum within step budget
        }
        if (scale * step).norm() < cfg.convergence_tol {
            return Ok((pose, iter + 1, true));
        }
    }
    Ok((pose, cfg.max_gn_iters, false))
}

fn total_cost(
    observations: &[LineObservation],
    mask: &[bool],
    rig: &StereoRig,
    cfg: &RobustConfig,
    pose: &PoseSE3,
    robust: bool,
    _stats: &mut MotionStats,
) -> f64 {
    let mut cost = 0.0;
    for (obs, _) in observations.iter().zip(mask).filter(|(_, &m)| m) {
        for endpoint in [&obs.segment3d.p, &obs.segment3d.q] {
            if let Ok(r) = point_to_line_residual(endpoint, pose, rig, &obs.observed_line) {
                cost += if robust {
                    pseudo_huber_loss(r, cfg.delta)
                } else {
                    0.5 * r * r
                };
            }
        }
    }
    cost
}
