use clap::{Parser, Subcommand, ValueEnum};
use linematch::eval::{self, EvalError, GroundTruth, StageTimings};
use linematch::geometry::MatchMode;
use linematch::io::{self, IoError, MatchConfigFile, SynthJobConfig, View};
use linematch::matcher::{self, RejectionStats};
use linematch::se3::{se3_exp, PoseSE3};
use linematch::synth;
use nalgebra::Vector6;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "linematch", version, about = "Geometric line-segment matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Stereo,
    F2f,
}

impl From<ModeArg> for MatchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stereo => MatchMode::Stereo,
            ModeArg::F2f => MatchMode::FrameToFrame,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Match two segment sets from a segment file.
    Match {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Directory containing segments.csv.
        #[arg(long = "in")]
        input: PathBuf,
        /// Matcher configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for matches.csv and stats.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic stereo scene with ground truth.
    Synth {
        /// Scene configuration JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a match file against synthetic ground truth.
    Eval {
        #[arg(long)]
        matches: PathBuf,
        /// Directory written by `linematch synth`.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "stereo")]
        mode: ModeArg,
    },
    /// Time the matching stage on synthetic scenes.
    Bench {
        /// Comma-separated candidate set sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        /// Optional path for the machine-readable results.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("LINEMATCH_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            _ => {
                eprintln!("error: LINEMATCH_THREADS must be a positive integer");
                return ExitCode::from(3);
            }
        }
    }
    let result = match cli.command {
        Command::Match {
            mode,
            input,
            config,
            out,
        } => cmd_match(mode.into(), &input, config.as_deref(), &out),
        Command::Synth { config, out } => cmd_synth(config.as_deref(), &out),
        Command::Eval {
            matches,
            truth,
            threshold,
            mode,
        } => cmd_eval(&matches, &truth, threshold, mode.into()),
        Command::Bench { sizes, reps, json } => cmd_bench(&sizes, reps, json.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(e) => e.exit_code(),
            CliError::Eval(EvalError::Io(e)) => e.exit_code(),
            CliError::Eval(EvalError::MissingGroundTruth { .. }) => 2,
            CliError::Input(_) => 2,
        }
    }
}

/// The two views a mode compares: stereo matches L vs R of the first frame,
/// frame-to-frame matches the L views of the first two frames.
fn mode_views(
    sets: &io::SegmentSets,
    mode: MatchMode,
) -> Result<((u32, View), (u32, View)), CliError> {
    let frames: Vec<u32> = {
        let mut f: Vec<u32> = sets.keys().map(|(frame, _)| *frame).collect();
        f.dedup();
        f
    };
    match mode {
        MatchMode::Stereo => {
            let frame = *frames.first().ok_or_else(|| {
                CliError::Input("no segments in input".into())
            })?;
            Ok(((frame, View::L), (frame, View::R)))
        }
        MatchMode::FrameToFrame => {
            let left_frames: Vec<u32> = sets
                .keys()
                .filter(|(_, v)| *v == View::L)
                .map(|(f, _)| *f)
                .collect();
            if left_frames.len() < 2 {
                return Err(CliError::Input(
                    "frame-to-frame mode needs L views of two frames".into(),
                ));
            }
            Ok(((left_frames[0], View::L), (left_frames[1], View::L)))
        }
    }
}

#[derive(Serialize)]
struct MatchStats {
    mode: MatchMode,
    ref_frame: u32,
    ref_view: View,
    cand_frame: u32,
    cand_view: View,
    ref_count: usize,
    cand_count: usize,
    accepted: usize,
    rejections: RejectionStats,
    timing: StageTimings,
}

fn cmd_match(
    mode: MatchMode,
    input: &Path,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let t_start = Instant::now();
    let cfg_file: MatchConfigFile = match config {
        Some(path) => io::load_json(path)?,
        None => MatchConfigFile::default(),
    };
    let cfg = cfg_file.into_match_config(mode)?;

    let sets = io::load_segments(&input.join("segments.csv"))?;
    let (ref_key, cand_key) = mode_views(&sets, mode)?;
    let empty = Vec::new();
    let set1 = sets.get(&ref_key).unwrap_or(&empty);
    let set2 = sets.get(&cand_key).unwrap_or(&empty);
    let load_ms = t_start.elapsed().as_secs_f64() * 1e3;

    let t_match = Instant::now();
    let result = matcher::match_sets(set1, set2, &cfg);
    let match_ms = t_match.elapsed().as_secs_f64() * 1e3;

    std::fs::create_dir_all(out).map_err(|e| IoError::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    io::save_matches(&out.join("matches.csv"), &result.matches)?;
    let stats = MatchStats {
        mode,
        ref_frame: ref_key.0,
        ref_view: ref_key.1,
        cand_frame: cand_key.0,
        cand_view: cand_key.1,
        ref_count: set1.len(),
        cand_count: set2.len(),
        accepted: result.matches.len(),
        rejections: result.stats,
        timing: StageTimings {
            load_ms,
            match_ms,
            total_ms: t_start.elapsed().as_secs_f64() * 1e3,
        },
    };
    io::save_json(&out.join("stats.json"), &stats)?;
    println!(
        "{} matches ({} references, {} candidates)",
        result.matches.len(),
        set1.len(),
        set2.len()
    );
    Ok(())
}

fn cmd_synth(config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let job: SynthJobConfig = match config {
        Some(path) => io::load_json(path)?,
        None => SynthJobConfig::default(),
    };
    job.scene
        .validate()
        .map_err(|e| IoError::Config(e.to_string()))?;
    job.rig
        .validate()
        .map_err(|e| IoError::Config(e.to_string()))?;

    let scene = synth::generate_scene(&job.scene, &job.rig)
        .map_err(|e| IoError::Config(e.to_string()))?;
    let pose_k = PoseSE3::identity();
    let pose_k1 = se3_exp(&Vector6::from_column_slice(&job.motion_twist));
    let views = synth::render_views(&scene, &job.rig, &pose_k, &pose_k1, &job.scene)
        .map_err(|e| IoError::Config(e.to_string()))?;

    std::fs::create_dir_all(out).map_err(|e| IoError::Io {
        path: out.display().to_string(),
        source: e,
    })?;

    let mut sets: io::SegmentSets = BTreeMap::new();
    let mut tables: io::TruthTables = BTreeMap::new();
    for (frame, view, data) in [
        (0, View::L, &views.left_k),
        (0, View::R, &views.right_k),
        (1, View::L, &views.left_k1),
        (1, View::R, &views.right_k1),
    ] {
        sets.insert((frame, view), data.segments.clone());
        tables.insert((frame, view), data.truth.clone());
    }
    io::save_segments(&out.join("segments.csv"), &sets)?;
    io::save_truth(&out.join("truth.csv"), &tables)?;
    io::save_scene(&out.join("scene.csv"), &scene)?;
    io::save_json(&out.join("rig.json"), &job.rig)?;
    io::save_json(&out.join("poses.json"), &io::PoseFile { pose_k, pose_k1 })?;
    println!(
        "scene with {} segments rendered to 4 views in {}",
        scene.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    matches_path: &Path,
    truth_dir: &Path,
    threshold: f64,
    mode: MatchMode,
) -> Result<(), CliError> {
    let matches = io::load_matches(matches_path)?;
    let truth = GroundTruth::load(truth_dir)?;
    let (ref_key, cand_key) = match mode {
        MatchMode::Stereo => ((0, View::L), (0, View::R)),
        MatchMode::FrameToFrame => ((0, View::L), (1, View::L)),
    };
    let report = eval::evaluate(&matches, &truth, ref_key, cand_key, threshold)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    size: usize,
    reps: usize,
    median_ms: f64,
    p95_ms: f64,
}

fn cmd_bench(sizes: &[usize], reps: usize, json: Option<&Path>) -> Result<(), CliError> {
    let rig = linematch::StereoRig::default_vga();
    let mut rows = Vec::new();
    for &size in sizes {
        let cfg = linematch::SceneConfig {
            segment_count: size,
            endpoint_noise_sigma: 0.5,
            rng_seed: 42,
            ..Default::default()
        };
        let scene = synth::generate_scene(&cfg, &rig).map_err(|e| IoError::Config(e.to_string()))?;
        let views = synth::render_views(&scene, &rig, &PoseSE3::identity(), &PoseSE3::identity(), &cfg)
            .map_err(|e| IoError::Config(e.to_string()))?;
        let match_cfg = matcher::MatchConfig::new(MatchMode::Stereo);
        // warm-up
        let _ = matcher::match_sets(&views.left_k.segments, &views.right_k.segments, &match_cfg);
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = Instant::now();
            let _ = matcher::match_sets(&views.left_k.segments, &views.right_k.segments, &match_cfg);
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (median_ms, p95_ms) = if times.is_empty() {
            (0.0, 0.0)
        } else {
            (
                times[times.len() / 2],
                times[((times.len() as f64 * 0.95) as usize).min(times.len() - 1)],
            )
        };
        rows.push(BenchRow {
            size,
            reps,
            median_ms,
            p95_ms,
        });
    }
    println!("{:>8} {:>8} {:>12} {:>12}", "size", "reps", "median_ms", "p95_ms");
    for row in &rows {
        println!(
            "{:>8} {:>8} {:>12.3} {:>12.3}",
            row.size, row.reps, row.median_ms, row.p95_ms
        );
    }
    if let Some(path) = json {
        io::save_json(path, &rows)?;
    }
    Ok(())
}
