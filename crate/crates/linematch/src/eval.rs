//! Evaluation of a match set against synthetic ground truth: the 1-pixel
//! reprojection inlier rule plus precision/recall from the generator's
//! correspondence tables.

use crate::geometry::LineSegment2D;
use crate::io::{self, IoError, SegmentSets, TruthTables, View};
use crate::matcher::{Match, RejectionStats};
use crate::se3::PoseSE3;
use crate::synth::{self, Eye, Segment3D, StereoRig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing ground truth for frame {frame} view {view}")]
    MissingGroundTruth { frame: u32, view: View },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Everything the synth command wrote for one stereo frame pair.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub scene: Vec<Segment3D>,
    pub rig: StereoRig,
    pub pose_k: PoseSE3,
    pub pose_k1: PoseSE3,
    pub tables: TruthTables,
    pub segments: SegmentSets,
}

impl GroundTruth {
    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let poses: io::PoseFile = io::load_json(&dir.join("poses.json"))?;
        Ok(Self {
            scene: io::load_scene(&dir.join("scene.csv"))?,
            rig: io::load_json(&dir.join("rig.json"))?,
            pose_k: poses.pose_k,
            pose_k1: poses.pose_k1,
            tables: io::load_truth(&dir.join("truth.csv"))?,
            segments: io::load_segments(&dir.join("segments.csv"))?,
        })
    }

    pub fn pose(&self, frame: u32) -> &PoseSE3 {
        if frame == 0 {
            &self.pose_k
        } else {
            &self.pose_k1
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_ms: f64,
    pub match_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub match_count: usize,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    pub precision: f64,
    pub recall: f64,
    pub correct_count: usize,
    pub true_pair_count: usize,
    #[serde(default)]
    pub rejections: RejectionStats,
    #[serde(default)]
    pub timing: StageTimings,
}

impl EvalReport {
    pub fn consistent(&self) -> bool {
        let ratio_of = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        self.inlier_count <= self.match_count
            && (self.inlier_ratio - ratio_of(self.inlier_count, self.match_count)).abs() < 1e-12
            && (self.precision - ratio_of(self.correct_count, self.match_count)).abs() < 1e-12
            && (self.recall - ratio_of(self.correct_count, self.true_pair_count)).abs() < 1e-12
    }
}

/// Score matches between (ref_frame, ref_view) and (cand_frame, cand_view).
///
/// A match is an inlier when the ground-truth 3D segment behind its
/// reference, reprojected into the candidate view with the true pose, lies
/// within `threshold` pixels of the observed candidate line (max over the
/// two reprojected endpoints). Precision and recall compare against the
/// generator's correspondence tables.
pub fn evaluate(
    matches: &[Match],
    truth: &GroundTruth,
    ref_key: (u32, View),
    cand_key: (u32, View),
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let ref_table = truth
        .tables
        .get(&ref_key)
        .ok_or(EvalError::MissingGroundTruth {
            frame: ref_key.0,
            view: ref_key.1,
        })?;
    let cand_table = truth
        .tables
        .get(&cand_key)
        .ok_or(EvalError::MissingGroundTruth {
            frame: cand_key.0,
            view: cand_key.1,
        })?;
    let cand_segments = truth
        .segments
        .get(&cand_key)
        .ok_or(EvalError::MissingGroundTruth {
            frame: cand_key.0,
            view: cand_key.1,
        })?;

    let cand_eye = match cand_key.1 {
        View::L => Eye::Left,
        View::R => Eye::Right,
    };
    let cand_pose = truth.pose(cand_key.0);

    let mut inlier_count = 0;
    let mut correct_count = 0;
    for m in matches {
        let correct = match (ref_table.get(&m.ref_id), cand_table.get(&m.cand_id)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        };
        if correct {
            correct_count += 1;
        }
        if let Some(&id3d) = ref_table.get(&m.ref_id) {
            if let Some(seg3d) = truth.scene.iter().find(|s| s.id == id3d) {
                if let Some(observed) = cand_segments.iter().find(|s| s.id() == m.cand_id) {
                    if let Some(reproj) =
                        synth::project_segment(seg3d, cand_pose, &truth.rig, cand_eye)
                    {
                        let line = line_through(observed);
                        let d1 = point_line_distance(&line, reproj.start().x, reproj.start().y);
                        let d2 = point_line_distance(&line, reproj.end().x, reproj.end().y);
                        if d1.max(d2) < threshold {
                            inlier_count += 1;
                        }
                    }
                }
            }
        }
    }

    let ref_ids: BTreeSet<u64> = ref_table.values().copied().collect();
    let cand_ids: BTreeSet<u64> = cand_table.values().copied().collect();
    let true_pair_count = ref_ids.intersection(&cand_ids).count();

    let ratio_of = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(EvalReport {
        match_count: matches.len(),
        inlier_count,
        inlier_ratio: ratio_of(inlier_count, matches.len()),
        precision: ratio_of(correct_count, matches.len()),
        recall: ratio_of(correct_count, true_pair_count),
        correct_count,
        true_pair_count,
        rejections: RejectionStats::default(),
        timing: StageTimings::default(),
    })
}

fn line_through(seg: &LineSegment2D) -> Vector3<f64> {
    let a = Vector3::new(seg.start().x, seg.start().y, 1.0);
    let b = Vector3::new(seg.end().x, seg.end().y, 1.0);
    let l = a.cross(&b);
    let n = (l.x * l.x + l.y * l.y).sqrt();
    l / n
}

fn point_line_distance(line: &Vector3<f64>, x: f64, y: f64) -> f64 {
    (line.x * x + line.y * y + line.z).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MatchMode;
    use crate::matcher::{self, MatchConfig};
    use crate::synth::SceneConfig;
    use std::collections::BTreeMap;

    fn clean_truth(seed: u64, count: usize) -> (GroundTruth, Vec<Match>) {
        let rig = StereoRig::default_vga();
        let cfg = SceneConfig {
            segment_count: count,
            rng_seed: seed,
            ..Default::default()
        };
        let scene = synth::generate_scene(&cfg, &rig).unwrap();
        let views = synth::render_views(
            &scene,
            &rig,
            &PoseSE3::identity(),
            &PoseSE3::identity(),
            &cfg,
        )
        .unwrap();
        let mut tables: TruthTables = BTreeMap::new();
        let mut segments: SegmentSets = BTreeMap::new();
        tables.insert((0, View::L), views.left_k.truth.clone());
        tables.insert((0, View::R), views.right_k.truth.clone());
        segments.insert((0, View::L), views.left_k.segments.clone());
        segments.insert((0, View::R), views.right_k.segments.clone());
        let matches = matcher::match_sets(
            &views.left_k.segments,
            &views.right_k.segments,
            &MatchConfig::new(MatchMode::Stereo),
        )
        .matches;
        (
            GroundTruth {
                scene,
                rig,
                pose_k: PoseSE3::identity(),
                pose_k1: PoseSE3::identity(),
                tables,
                segments,
            },
            matches,
        )
    }

    #[test]
    fn clean_scene_scores_perfectly() {
        let (truth, matches) = clean_truth(17, 50);
        assert!(!matches.is_empty());
        let report = evaluate(&matches, &truth, (0, View::L), (0, View::R), 1.0).unwrap();
        assert_eq!(report.inlier_ratio, 1.0);
        assert_eq!(report.precision, 1.0);
        assert!(report.consistent());
    }

    #[test]
    fn shuffled_candidates_score_near_chance() {
        let (truth, matches) = clean_truth(18, 60);
        let n = matches.len();
        assert!(n > 20);
        // rotate candidate ids: every match becomes wrong
        let shuffled: Vec<Match> = matches
            .iter()
            .enumerate()
            .map(|(i, m)| Match {
                cand_id: matches[(i + 1) % n].cand_id,
                ..*m
            })
            .collect();
        let report = evaluate(&shuffled, &truth, (0, View::L), (0, View::R), 1.0).unwrap();
        assert_eq!(report.correct_count, 0);
        assert!(report.consistent());
    }

    #[test]
    fn missing_ground_truth_is_an_error() {
        let (truth, matches) = clean_truth(19, 10);
        let err = evaluate(&matches, &truth, (1, View::L), (0, View::R), 1.0);
        assert!(matches!(err, Err(EvalError::MissingGroundTruth { .. })));
    }
}
