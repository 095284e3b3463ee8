//! Rigid 3D transforms and the se(3) exponential map.

use nalgebra::{Matrix3, Point3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("rotation matrix is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation matrix has non-positive determinant")]
    NotProperRotation,
}

/// Rigid transform: x' = R x + t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, PoseError> {
        let dev = (rotation.transpose() * rotation - Matrix3::identity())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if dev > 1e-9 {
            return Err(PoseError::NotOrthonormal(dev));
        }
        if rotation.determinant() <= 0.0 {
            return Err(PoseError::NotProperRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Composition self * other: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: renormalize(self.rotation * other.rotation),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Project a near-orthonormal matrix back onto SO(3); keeps long compositions
/// within the pose invariants.
fn renormalize(r: Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut m = u * vt;
    if m.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        m = u2 * vt;
    }
    m
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map from a twist [rho, phi] (translational, rotational) to a
/// rigid transform, via the Rodrigues closed form.
pub fn se3_exp(xi: &Vector6<f64>) -> PoseSE3 {
    let rho = Vector3::new(xi[0], xi[1], xi[2]);
    let phi = Vector3::new(xi[3], xi[4], xi[5]);
    let theta = phi.norm();
    let k = skew(&phi);
    let (rotation, v) = if theta < 1e-9 {
        // second-order series, accurate to ~1e-18 here
        let r = Matrix3::identity() + k + 0.5 * (k * k);
        let v = Matrix3::identity() + 0.5 * k + (k * k) / 6.0;
        (renormalize(r), v)
    } else {
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        let c = (theta - theta.sin()) / (theta * theta * theta);
        let r = Matrix3::identity() + a * k + b * (k * k);
        let v = Matrix3::identity() + b * k + c * (k * k);
        (r, v)
    };
    PoseSE3 {
        rotation,
        translation: v * rho,
    }
}

/// Logarithm map, the inverse of [`se3_exp`] for rotation angles below pi.
pub fn se3_log(pose: &PoseSE3) -> Vector6<f64> {
    let r = pose.rotation;
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let phi = if theta < 1e-9 {
        Vector3::new(
            0.5 * (r[(2, 1)] - r[(1, 2)]),
            0.5 * (r[(0, 2)] - r[(2, 0)]),
            0.5 * (r[(1, 0)] - r[(0, 1)]),
        )
    } else {
        (theta / (2.0 * theta.sin()))
            * Vector3::new(
                r[(2, 1)] - r[(1, 2)],
                r[(0, 2)] - r[(2, 0)],
                r[(1, 0)] - r[(0, 1)],
            )
    };
    let k = skew(&phi);
    let v_inv = if theta < 1e-9 {
        Matrix3::identity() - 0.5 * k + (k * k) / 12.0
    } else {
        let half = 0.5 * theta;
        let cot_half = half.cos() / half.sin();
        Matrix3::identity() - 0.5 * k + ((1.0 - half * cot_half) / (theta * theta)) * (k * k)
    };
    let rho = v_inv * pose.translation;
    Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exp_of_zero_is_identity() {
        let p = se3_exp(&Vector6::zeros());
        assert_eq!(p.rotation(), &Matrix3::identity());
        assert_eq!(p.translation(), &Vector3::zeros());
    }

    #[test]
    fn pure_rotation_about_z() {
        let theta = 0.7;
        let p = se3_exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, theta));
        let r = p.rotation();
        assert!((r[(0, 0)] - theta.cos()).abs() < 1e-12);
        assert!((r[(1, 0)] - theta.sin()).abs() < 1e-12);
        assert!(p.translation().norm() < 1e-15);
    }

    #[test]
    fn exp_inverse_composes_to_identity() {
        let xi = Vector6::new(0.3, -0.2, 0.8, 0.1, -0.4, 0.25);
        let p = se3_exp(&xi).compose(&se3_exp(&-xi));
        assert!((p.rotation() - Matrix3::identity()).norm() < 1e-10);
        assert!(p.translation().norm() < 1e-10);
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut xi = Vector6::zeros();
            for i in 0..6 {
                xi[i] = rng.gen_range(-1.0..1.0);
            }
            // keep rotation angle below pi
            let phi_norm = f64::sqrt(xi[3] * xi[3] + xi[4] * xi[4] + xi[5] * xi[5]);
            if phi_norm >= 3.0 {
                continue;
            }
            let back = se3_log(&se3_exp(&xi));
            assert!((back - xi).norm() <= 1e-9, "xi {xi:?} back {back:?}");
        }
    }

    #[test]
    fn exp_output_satisfies_pose_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let mut xi = Vector6::zeros();
            for i in 0..6 {
                xi[i] = rng.gen_range(-3.0..3.0);
            }
            let p = se3_exp(&xi);
            assert!(PoseSE3::new(*p.rotation(), *p.translation()).is_ok());
        }
    }
}
