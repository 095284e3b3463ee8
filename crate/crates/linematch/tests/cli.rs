//! Black-box tests of the `linematch` binary: the synth -> match -> eval
//! pipeline and the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_linematch")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn pipeline_synth_match_eval() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    let match_dir = dir.path().join("match");

    let out = run(&["synth", "--out", synth_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["segments.csv", "truth.csv", "scene.csv", "rig.json", "poses.json"] {
        assert!(synth_dir.join(file).exists(), "missing {file}");
    }

    for mode in ["stereo", "f2f"] {
        let out = run(&[
            "match",
            "--mode",
            mode,
            "--in",
            synth_dir.to_str().unwrap(),
            "--out",
            match_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(match_dir.join("matches.csv").exists());
        assert!(match_dir.join("stats.json").exists());

        let matches_csv = match_dir.join("matches.csv");
        let out = run(&[
            "eval",
            "--matches",
            matches_csv.to_str().unwrap(),
            "--truth",
            synth_dir.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let precision = report["precision"].as_f64().unwrap();
        assert!(
            precision > 0.8,
            "mode {mode}: pipeline precision {precision}"
        );
    }
}

#[test]
fn custom_config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let synth_cfg = dir.path().join("scene.json");
    std::fs::write(
        &synth_cfg,
        r#"{"segment_count": 30, "depth_range": [2.0, 6.0], "length_range": [0.5, 1.5],
            "endpoint_noise_sigma": 0.2, "dropout_rate": 0.0, "clutter_count": 3,
            "rng_seed": 11}"#,
    )
    .unwrap();
    let synth_dir = dir.path().join("synth");
    let out = run(&[
        "synth",
        "--config",
        synth_cfg.to_str().unwrap(),
        "--out",
        synth_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let match_cfg = dir.path().join("match.json");
    std::fs::write(
        &match_cfg,
        r#"{"lambda": 0.1, "uniqueness_factor": 2.0, "sigma_multiplier": 2.0, "min_overlap": 0.1}"#,
    )
    .unwrap();
    let match_dir = dir.path().join("match");
    let out = run(&[
        "match",
        "--mode",
        "stereo",
        "--in",
        synth_dir.to_str().unwrap(),
        "--config",
        match_cfg.to_str().unwrap(),
        "--out",
        match_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_reports_requested_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("bench.json");
    let out = run(&[
        "bench",
        "--sizes",
        "20,40",
        "--reps",
        "3",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["size"], 20);
    assert_eq!(rows[1]["size"], 40);
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "match",
        "--mode",
        "stereo",
        "--in",
        dir.path().join("nope").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

fn write_segments(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn malformed_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_segments(
        &dir.path().join("segments.csv"),
        "frame,view,id,x1,y1,x2,y2\n0,L,0,not_a_number,0,10,0\n",
    );
    let out = run(&[
        "match",
        "--mode",
        "stereo",
        "--in",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    // the message names the offending row
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));
}

#[test]
fn zero_length_segment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_segments(
        &dir.path().join("segments.csv"),
        "frame,view,id,x1,y1,x2,y2\n0,L,0,5,5,5,5\n",
    );
    let out = run(&[
        "match",
        "--mode",
        "stereo",
        "--in",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    std::fs::write(
        &cfg,
        r#"{"segment_count": 10, "depth_range": [-1.0, 6.0], "length_range": [0.5, 1.5],
            "endpoint_noise_sigma": 0.0, "dropout_rate": 0.0, "clutter_count": 0,
            "rng_seed": 0}"#,
    )
    .unwrap();
    let out = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn invalid_thread_env_exits_3() {
    let out = Command::new(bin())
        .env("LINEMATCH_THREADS", "zero")
        .args(["bench", "--sizes", "10", "--reps", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn thread_cap_is_accepted() {
    let out = Command::new(bin())
        .env("LINEMATCH_THREADS", "1")
        .args(["bench", "--sizes", "10", "--reps", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
}
