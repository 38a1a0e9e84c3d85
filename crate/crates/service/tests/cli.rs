use std::path::PathBuf;
use std::process::{Command, Output};

use focusloop::TelemetryRecord;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_focusloop"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn headless(name: &str, extra: &[&str]) -> (Output, Vec<TelemetryRecord>) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("telemetry.jsonl");
    let output = bin()
        .arg("--headless")
        .arg("--script")
        .arg(scenario(name))
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    let records = std::fs::read_to_string(&out)
        .map(|text| {
            text.lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect()
        })
        .unwrap_or_default();
    (output, records)
}

#[test]
fn ramp_exits_zero_with_success_log() {
    let (out, records) = headless("ramp.json", &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let last = records.last().unwrap();
    assert_eq!(last.phase, "success");
    assert!(last.events.iter().any(|e| e == "wind_on"));
}

#[test]
fn flat_exits_two() {
    let (out, records) = headless("flat.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(records.last().unwrap().phase, "failure:timeout");
}

#[test]
fn seed_and_mode_flags_change_the_run() {
    let (_, base) = headless("ramp.json", &[]);
    let (_, same) = headless("ramp.json", &["--seed", "7"]);
    let (_, other) = headless("ramp.json", &["--seed", "8"]);
    let (out, avg) = headless("ramp.json", &["--mode", "time_avg"]);
    assert_eq!(base, same);
    assert_ne!(base, other);
    assert_ne!(base, avg);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(2));
}

#[test]
fn headless_record_writes_replayable_frames() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    let (out, _) = headless("yank.json", &["--record", frames.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let file = std::io::BufReader::new(std::fs::File::open(&frames).unwrap());
    let replay = focusloop::ingest::Replay::new(file, 0.0);
    let n = replay.inspect(|r| assert!(r.is_ok(), "{r:?}")).count();
    assert!(n > 60 * 256, "{n} frames");
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"game":{"force_lo_n":60,"force_hi_n":10}}"#).unwrap();
    let (out, _) = headless("ramp.json", &["--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("force band"));

    let (out, _) = headless("missing.json", &[]);
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("--bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["--mode", "fast"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("--headless").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["--source", "replay", "--listen", "127.0.0.1:0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config",
        "--source",
        "--profile",
        "--replay",
        "--listen",
        "--record",
        "--headless",
        "--script",
        "--out",
        "--seed",
        "--mode",
    ] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
}
