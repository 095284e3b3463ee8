//! File formats: segment and match CSVs, ground-truth tables, JSON configs.
//!
//! All writes go through a temp-file-then-rename so partially written
//! outputs are never observed.

use crate::geometry::{GeometryError, LineSegment2D};
use crate::matcher::Match;
use crate::se3::PoseSE3;
use crate::synth::{SceneConfig, Segment3D, StereoRig};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at {path}:{row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },
    #[error("duplicate segment id at {path}:{row} (frame {frame}, view {view}, id {id})")]
    DuplicateId {
        path: String,
        row: usize,
        frame: u32,
        view: View,
        id: u64,
    },
    #[error("zero-length segment at {path}:{row}")]
    ZeroLengthSegment { path: String, row: usize },
    #[error("config error: {0}")]
    Config(String),
}

impl IoError {
    /// Process exit code for the CLI: 1 i/o, 2 parse, 3 config.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Io { .. } => 1,
            IoError::Parse { .. }
            | IoError::DuplicateId { .. }
            | IoError::ZeroLengthSegment { .. } => 2,
            IoError::Config(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub enum View {
    L,
    R,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            View::L => write!(f, "L"),
            View::R => write!(f, "R"),
        }
    }
}

impl FromStr for View {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(View::L),
            "R" => Ok(View::R),
            other => Err(format!("view must be L or R, got {other:?}")),
        }
    }
}

pub type SegmentSets = BTreeMap<(u32, View), Vec<LineSegment2D>>;

const SEGMENT_HEADER: &str = "frame,view,id,x1,y1,x2,y2";
const MATCH_HEADER: &str = "ref_id,cand_id,residual,weight";
const TRUTH_HEADER: &str = "frame,view,id2d,id3d";
const SCENE_HEADER: &str = "id,px,py,pz,qx,qy,qz";

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        row,
        message: message.into(),
    }
}

/// Atomic write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Load a segment file, grouped per (frame, view). Duplicate ids within a
/// group and zero-length rows are errors, reported with their row number.
pub fn load_segments(path: &Path) -> Result<SegmentSets, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SEGMENT_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(path, 1, format!("expected header {SEGMENT_HEADER:?}, got {header:?}")))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut sets: SegmentSets = BTreeMap::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(path, row, format!("expected 7 fields, got {}", fields.len())));
        }
        let frame: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, format!("frame: {e}")))?;
        let view: View = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, e))?;
        let id: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, format!("id: {e}")))?;
        let mut coords = [0.0f64; 4];
        for (k, f) in fields[3..].iter().enumerate() {
            coords[k] = f
                .trim()
                .parse()
                .map_err(|e| parse_err(path, row, format!("coordinate {}: {e}", k + 1)))?;
            if !coords[k].is_finite() {
                return Err(parse_err(path, row, "non-finite coordinate"));
            }
        }
        let group = sets.entry((frame, view)).or_default();
        if group.iter().any(|s| s.id() == id) {
            return Err(IoError::DuplicateId {
                path: path.display().to_string(),
                row,
                frame,
                view,
                id,
            });
        }
        let seg = LineSegment2D::from_coords(coords[0], coords[1], coords[2], coords[3], id)
            .map_err(|e| match e {
                GeometryError::ZeroLength(_) => IoError::ZeroLengthSegment {
                    path: path.display().to_string(),
                    row,
                },
                GeometryError::NonFinite(_) => parse_err(path, row, "non-finite coordinate"),
            })?;
        group.push(seg);
    }
    Ok(sets)
}

pub fn save_segments(path: &Path, sets: &SegmentSets) -> Result<(), IoError> {
    let mut out = String::from(SEGMENT_HEADER);
    out.push('\n');
    for ((frame, view), segs) in sets {
        for s in segs {
            out.push_str(&format!(
                "{frame},{view},{},{},{},{},{}\n",
                s.id(),
                s.start().x,
                s.start().y,
                s.end().x,
                s.end().y
            ));
        }
    }
    write_atomic(path, &out)
}

pub fn save_matches(path: &Path, matches: &[Match]) -> Result<(), IoError> {
    let mut out = String::from(MATCH_HEADER);
    out.push('\n');
    for m in matches {
        out.push_str(&format!("{},{},{},{}\n", m.ref_id, m.cand_id, m.residual, m.weight));
    }
    write_atomic(path, &out)
}

pub fn load_matches(path: &Path) -> Result<Vec<Match>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == MATCH_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(path, 1, format!("expected header {MATCH_HEADER:?}, got {header:?}")))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut matches = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, row, format!("expected 4 fields, got {}", fields.len())));
        }
        matches.push(Match {
            ref_id: fields[0]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, row, format!("ref_id: {e}")))?,
            cand_id: fields[1]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, row, format!("cand_id: {e}")))?,
            residual: fields[2]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, row, format!("residual: {e}")))?,
            weight: fields[3]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, row, format!("weight: {e}")))?,
        });
    }
    Ok(matches)
}

pub type TruthTables = BTreeMap<(u32, View), BTreeMap<u64, u64>>;

pub fn save_truth(path: &Path, tables: &TruthTables) -> Result<(), IoError> {
    let mut out = String::from(TRUTH_HEADER);
    out.push('\n');
    for ((frame, view), table) in tables {
        for (id2d, id3d) in table {
            out.push_str(&format!("{frame},{view},{id2d},{id3d}\n"));
        }
    }
    write_atomic(path, &out)
}

pub fn load_truth(path: &Path) -> Result<TruthTables, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRUTH_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(path, 1, format!("expected header {TRUTH_HEADER:?}, got {header:?}")))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut tables: TruthTables = BTreeMap::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(path, row, format!("expected 4 fields, got {}", fields.len())));
        }
        let frame: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, format!("frame: {e}")))?;
        let view: View = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, e))?;
        let id2d: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, format!("id2d: {e}")))?;
        let id3d: u64 = fields[3]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, format!("id3d: {e}")))?;
        tables.entry((frame, view)).or_default().insert(id2d, id3d);
    }
    Ok(tables)
}

pub fn save_scene(path: &Path, scene: &[Segment3D]) -> Result<(), IoError> {
    let mut out = String::from(SCENE_HEADER);
    out.push('\n');
    for s in scene {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.id, s.p.x, s.p.y, s.p.z, s.q.x, s.q.y, s.q.z
        ));
    }
    write_atomic(path, &out)
}

pub fn load_scene(path: &Path) -> Result<Vec<Segment3D>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SCENE_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(path, 1, format!("expected header {SCENE_HEADER:?}, got {header:?}")))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut scene = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(path, row, format!("expected 7 fields, got {}", fields.len())));
        }
        let id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, row, format!("id: {e}")))?;
        let mut c = [0.0f64; 6];
        for (k, f) in fields[1..].iter().enumerate() {
            c[k] = f
                .trim()
                .parse()
                .map_err(|e| parse_err(path, row, format!("coordinate {}: {e}", k + 1)))?;
        }
        scene.push(Segment3D {
            p: Point3::new(c[0], c[1], c[2]),
            q: Point3::new(c[3], c[4], c[5]),
            id,
        });
    }
    Ok(scene)
}

/// Ground-truth poses of the two stereo frames.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseFile {
    pub pose_k: PoseSE3,
    pub pose_k1: PoseSE3,
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::Config(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, &text)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| IoError::Config(format!("{}: {e}", path.display())))
}

/// On-disk matcher configuration; mode comes from the CLI flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfigFile {
    pub lambda: f64,
    pub kkt_tolerance: f64,
    pub row_weights: [f64; 4],
    pub uniqueness_factor: f64,
    pub sigma_multiplier: f64,
    pub min_overlap: f64,
}

impl Default for MatchConfigFile {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            kkt_tolerance: 1e-9,
            row_weights: [1.0; 4],
            uniqueness_factor: 2.0,
            sigma_multiplier: 2.0,
            min_overlap: 0.0,
        }
    }
}

impl MatchConfigFile {
    pub fn into_match_config(
        self,
        mode: crate::geometry::MatchMode,
    ) -> Result<crate::matcher::MatchConfig, IoError> {
        if !(self.uniqueness_factor >= 1.0) {
            return Err(IoError::Config("uniqueness_factor must be >= 1".into()));
        }
        if !(self.sigma_multiplier > 0.0) {
            return Err(IoError::Config("sigma_multiplier must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.min_overlap) {
            return Err(IoError::Config("min_overlap must be in [0, 1)".into()));
        }
        let solver = crate::sparse::SolverConfig {
            lambda: self.lambda,
            max_iters: None,
            tolerance: self.kkt_tolerance,
            row_weights: self.row_weights,
        };
        solver
            .validate()
            .map_err(|e| IoError::Config(e.to_string()))?;
        Ok(crate::matcher::MatchConfig {
            mode,
            solver,
            uniqueness_factor: self.uniqueness_factor,
            sigma_multiplier: self.sigma_multiplier,
            min_overlap: self.min_overlap,
        })
    }
}

/// Synth command configuration: a scene plus the rig and inter-frame motion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthJobConfig {
    #[serde(flatten)]
    pub scene: SceneConfig,
    #[serde(default = "default_rig")]
    pub rig: StereoRig,
    /// Twist [rho, phi] taking frame k coordinates to frame k+1.
    #[serde(default = "default_motion")]
    pub motion_twist: [f64; 6],
}

fn default_rig() -> StereoRig {
    StereoRig::default_vga()
}

// Default inter-frame motion: dominantly downward translation, so image
// flow follows the small-motion vertical-epipolar assumption the
// frame-to-frame matcher relies on.
fn default_motion() -> [f64; 6] {
    [0.002, 0.05, 0.003, 0.001, 0.0005, 0.001]
}

impl Default for SynthJobConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            rig: default_rig(),
            motion_twist: default_motion(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn header_only_file_is_empty_collection() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        fs::write(&path, format!("{SEGMENT_HEADER}\n")).unwrap();
        let sets = load_segments(&path).unwrap();
        assert!(sets.is_empty());
    }

    #[test]
    fn zero_length_row_reports_row_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        fs::write(&path, format!("{SEGMENT_HEADER}\n0,L,1,5,5,5,5\n")).unwrap();
        match load_segments(&path) {
            Err(IoError::ZeroLengthSegment { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected ZeroLengthSegment, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        fs::write(
            &path,
            format!("{SEGMENT_HEADER}\n0,L,1,0,0,10,0\n0,L,1,5,5,15,5\n"),
        )
        .unwrap();
        match load_segments(&path) {
            Err(IoError::DuplicateId { row, id, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(id, 1);
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        fs::write(&path, format!("{SEGMENT_HEADER}\n0,L,1,0,0,10\n")).unwrap();
        match load_segments(&path) {
            Err(IoError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn segment_round_trip_on_random_sets() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..20 {
            let mut sets: SegmentSets = BTreeMap::new();
            for frame in 0..2u32 {
                for view in [View::L, View::R] {
                    let n = rng.gen_range(0..30);
                    let segs: Vec<_> = (0..n)
                        .map(|i| {
                            LineSegment2D::from_coords(
                                rng.gen_range(-10.0..650.0),
                                rng.gen_range(-10.0..490.0),
                                rng.gen_range(-10.0..650.0) + 1.0,
                                rng.gen_range(-10.0..490.0) + 1.0,
                                i as u64,
                            )
                            .unwrap()
                        })
                        .collect();
                    if !segs.is_empty() {
                        sets.insert((frame, view), segs);
                    }
                }
            }
            save_segments(&path, &sets).unwrap();
            assert_eq!(load_segments(&path).unwrap(), sets);
        }
    }

    #[test]
    fn match_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("matches.csv");
        let matches = vec![
            Match {
                ref_id: 0,
                cand_id: 3,
                residual: 0.015625,
                weight: 0.875,
            },
            Match {
                ref_id: 2,
                cand_id: 1,
                residual: 0.1,
                weight: 1.0,
            },
        ];
        save_matches(&path, &matches).unwrap();
        assert_eq!(load_matches(&path).unwrap(), matches);
    }

    #[test]
    fn config_defaults_are_the_documented_constants() {
        let cfg: MatchConfigFile = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.uniqueness_factor, 2.0);
        assert_eq!(cfg.sigma_multiplier, 2.0);
    }

    #[test]
    fn bad_config_values_rejected() {
        let cfg = MatchConfigFile {
            uniqueness_factor: 0.5,
            ..Default::default()
        };
        assert!(cfg.into_match_config(crate::geometry::MatchMode::Stereo).is_err());
    }
}
