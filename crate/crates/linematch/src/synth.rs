//! Synthetic 3D line scenes projected through a calibrated, rectified stereo
//! rig. Every rendered view carries an exact ground-truth correspondence
//! table, so matching and motion estimation can be scored without real
//! imagery.

use crate::geometry::LineSegment2D;
use crate::se3::PoseSE3;
use nalgebra::{Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Ids at or above this value denote clutter segments with no 3D counterpart.
pub const CLUTTER_ID_BASE: u64 = 1_000_000;

const NEAR_PLANE: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
}

/// 3D line segment in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment3D {
    pub p: Point3<f64>,
    pub q: Point3<f64>,
    pub id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eye {
    Left,
    Right,
}

/// Calibrated rectified stereo pair; the right camera is displaced along +X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    pub width: f64,
    pub height: f64,
}

impl StereoRig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.baseline > 0.0) {
            return Err(SynthError::InvalidConfig(
                "fx, fy and baseline must be positive".into(),
            ));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(SynthError::InvalidConfig("image size must be positive".into()));
        }
        Ok(())
    }

    /// A VGA-like rig used by tests and the benchmark harness.
    pub fn default_vga() -> Self {
        Self {
            fx: 458.0,
            fy: 458.0,
            cx: 320.0,
            cy: 240.0,
            baseline: 0.11,
            width: 640.0,
            height: 480.0,
        }
    }

    /// Pinhole projection of a camera-frame point; caller guarantees z > 0.
    pub fn project(&self, p: &Point3<f64>) -> Point2<f64> {
        Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    #[default]
    Uniform,
    /// Parallel, equally spaced copies of one segment; stresses the epipolar
    /// outlier filter with ambiguous candidates.
    RepeatedStructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub segment_count: usize,
    pub depth_range: (f64, f64),
    pub length_range: (f64, f64),
    pub endpoint_noise_sigma: f64,
    pub dropout_rate: f64,
    pub clutter_count: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub preset: ScenePreset,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            segment_count: 100,
            depth_range: (2.0, 8.0),
            length_range: (0.5, 2.0),
            endpoint_noise_sigma: 0.0,
            dropout_rate: 0.0,
            clutter_count: 0,
            rng_seed: 0,
            preset: ScenePreset::Uniform,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (z0, z1) = self.depth_range;
        if !(z0 > 0.0 && z1 >= z0) {
            return Err(SynthError::InvalidConfig("depth_range must be positive and ordered".into()));
        }
        let (l0, l1) = self.length_range;
        if !(l0 > 0.0 && l1 >= l0) {
            return Err(SynthError::InvalidConfig("length_range must be positive and ordered".into()));
        }
        if !(self.endpoint_noise_sigma >= 0.0) {
            return Err(SynthError::InvalidConfig("endpoint_noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SynthError::InvalidConfig("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Sample a 3D scene in the left camera's viewing frustum (camera at the
/// origin looking down +Z). Deterministic for a fixed seed.
pub fn generate_scene(cfg: &SceneConfig, rig: &StereoRig) -> Result<Vec<Segment3D>, SynthError> {
    cfg.validate()?;
    rig.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    match cfg.preset {
        ScenePreset::Uniform => Ok(uniform_scene(cfg, rig, &mut rng)),
        ScenePreset::RepeatedStructure => Ok(repeated_scene(cfg, rig, &mut rng)),
    }
}

fn uniform_scene(cfg: &SceneConfig, rig: &StereoRig, rng: &mut ChaCha8Rng) -> Vec<Segment3D> {
    let margin_u = 0.1 * rig.width;
    let margin_v = 0.1 * rig.height;
    (0..cfg.segment_count)
        .map(|i| {
            let u = rng.gen_range(margin_u..rig.width - margin_u);
            let v = rng.gen_range(margin_v..rig.height - margin_v);
            let z = rng.gen_range(cfg.depth_range.0..=cfg.depth_range.1);
            let mid = rig.backproject(u, v, z);
            let dir = random_unit(rng);
            let half = 0.5 * rng.gen_range(cfg.length_range.0..=cfg.length_range.1);
            Segment3D {
                p: mid + half * dir,
                q: mid - half * dir,
                id: i as u64,
            }
        })
        .collect()
}

fn repeated_scene(cfg: &SceneConfig, rig: &StereoRig, rng: &mut ChaCha8Rng) -> Vec<Segment3D> {
    // Vertical segments on a regular horizontal lattice at a common depth,
    // with slight per-copy depth jitter so the scene is not fully degenerate.
    let z = 0.5 * (cfg.depth_range.0 + cfg.depth_range.1);
    let len = 0.5 * (cfg.length_range.0 + cfg.length_range.1);
    let n = cfg.segment_count.max(1);
    let u_lo = 0.15 * rig.width;
    let u_hi = 0.85 * rig.width;
    let v_mid = 0.5 * rig.height;
    (0..cfg.segment_count)
        .map(|i| {
            let frac = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let u = u_lo + frac * (u_hi - u_lo);
            let zj = z * (1.0 + 0.01 * rng.gen_range(-1.0..1.0));
            let mid = rig.backproject(u, v_mid, zj);
            let half = 0.5 * len * Vector3::new(0.0, 1.0, 0.0);
            Segment3D {
                p: mid + half,
                q: mid - half,
                id: i as u64,
            }
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let mut draw = || -> f64 { StandardNormal.sample(rng) };
        let v = Vector3::new(draw(), draw(), draw());
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Project a 3D segment into one eye of the rig under a world-to-camera
/// pose. Returns the segment clipped to the image rectangle, or `None` when
/// it lies behind the camera or fully outside the image.
pub fn project_segment(
    seg: &Segment3D,
    pose: &PoseSE3,
    rig: &StereoRig,
    eye: Eye,
) -> Option<LineSegment2D> {
    let shift = match eye {
        Eye::Left => Vector3::zeros(),
        Eye::Right => Vector3::new(rig.baseline, 0.0, 0.0),
    };
    let p_cam = pose.transform_point(&seg.p) - shift;
    let q_cam = pose.transform_point(&seg.q) - shift;
    if p_cam.z < NEAR_PLANE || q_cam.z < NEAR_PLANE {
        return None;
    }
    let a = rig.project(&Point3::from(p_cam));
    let b = rig.project(&Point3::from(q_cam));
    let (a, b) = clip_to_rect(a, b, rig.width, rig.height)?;
    LineSegment2D::new(a, b, seg.id).ok()
}

/// Liang-Barsky clipping of segment a-b to [0,w] x [0,h], preserving
/// orientation.
fn clip_to_rect(
    a: Point2<f64>,
    b: Point2<f64>,
    w: f64,
    h: f64,
) -> Option<(Point2<f64>, Point2<f64>)> {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    let checks = [(-d.x, a.x), (d.x, w - a.x), (-d.y, a.y), (d.y, h - a.y)];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 >= t1 {
        return None;
    }
    Some((a + t0 * d, a + t1 * d))
}

/// One rendered view: observed segments plus the table mapping 2D ids to the
/// originating 3D segment ids (clutter segments are absent from the table).
#[derive(Debug, Clone, Default)]
pub struct ViewData {
    pub segments: Vec<LineSegment2D>,
    pub truth: BTreeMap<u64, u64>,
}

/// The four views of a stereo frame pair.
#[derive(Debug, Clone)]
pub struct RenderedViews {
    pub left_k: ViewData,
    pub right_k: ViewData,
    pub left_k1: ViewData,
    pub right_k1: ViewData,
}

impl RenderedViews {
    pub fn view(&self, frame: u32, eye: Eye) -> &ViewData {
        match (frame, eye) {
            (0, Eye::Left) => &self.left_k,
            (0, Eye::Right) => &self.right_k,
            (1, Eye::Left) => &self.left_k1,
            (1, Eye::Right) => &self.right_k1,
            _ => panic!("frame must be 0 or 1"),
        }
    }
}

/// Render all four views with endpoint noise, per-view dropout and clutter.
pub fn render_views(
    scene: &[Segment3D],
    rig: &StereoRig,
    pose_k: &PoseSE3,
    pose_k1: &PoseSE3,
    cfg: &SceneConfig,
) -> Result<RenderedViews, SynthError> {
    cfg.validate()?;
    rig.validate()?;
    let render = |pose: &PoseSE3, eye: Eye, stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(stream + 1);
        render_one_view(scene, rig, pose, eye, cfg, &mut rng)
    };
    Ok(RenderedViews {
        left_k: render(pose_k, Eye::Left, 0),
        right_k: render(pose_k, Eye::Right, 1),
        left_k1: render(pose_k1, Eye::Left, 2),
        right_k1: render(pose_k1, Eye::Right, 3),
    })
}

fn render_one_view(
    scene: &[Segment3D],
    rig: &StereoRig,
    pose: &PoseSE3,
    eye: Eye,
    cfg: &SceneConfig,
    rng: &mut ChaCha8Rng,
) -> ViewData {
    let noise = Normal::new(0.0, cfg.endpoint_noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut view = ViewData::default();
    for seg in scene {
        let dropped = rng.gen::<f64>() < cfg.dropout_rate;
        if dropped {
            continue;
        }
        let Some(projected) = project_segment(seg, pose, rig, eye) else {
            continue;
        };
        let observed = if cfg.endpoint_noise_sigma > 0.0 {
            let jitter = |p: Point2<f64>, rng: &mut ChaCha8Rng| {
                Point2::new(p.x + noise.sample(rng), p.y + noise.sample(rng))
            };
            let s = jitter(projected.start(), rng);
            let e = jitter(projected.end(), rng);
            match LineSegment2D::new(s, e, seg.id) {
                Ok(seg2d) => seg2d,
                Err(_) => continue, // noise collapsed the segment
            }
        } else {
            projected
        };
        view.truth.insert(observed.id(), seg.id);
        view.segments.push(observed);
    }
    for i in 0..cfg.clutter_count {
        let id = CLUTTER_ID_BASE + i as u64;
        loop {
            let a = Point2::new(rng.gen_range(0.0..rig.width), rng.gen_range(0.0..rig.height));
            let b = Point2::new(rng.gen_range(0.0..rig.width), rng.gen_range(0.0..rig.height));
            if (a - b).norm() < 20.0 {
                continue;
            }
            if let Ok(seg2d) = LineSegment2D::new(a, b, id) {
                view.segments.push(seg2d);
                break;
            }
        }
    }
    view
}
