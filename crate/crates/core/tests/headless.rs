use std::path::PathBuf;

use focusloop::game::{FailureReason, SessionPhase};
use focusloop::headless::{run_headless, HeadlessScript, EXIT_GAME_FAILURE, EXIT_SUCCESS};
use focusloop::{EngineConfig, TelemetryRecord};

fn scenario(name: &str) -> HeadlessScript {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    HeadlessScript::load(path).unwrap()
}

fn run(name: &str) -> (focusloop::headless::HeadlessOutcome, Vec<u8>) {
    let mut out = Vec::new();
    let outcome = run_headless(&EngineConfig::default(), &scenario(name), &mut out, None).unwrap();
    (outcome, out)
}

#[test]
fn ramp_scenario_succeeds() {
    let (outcome, log) = run("ramp.json");
    assert_eq!(outcome.final_phase, SessionPhase::Success);
    assert_eq!(outcome.exit_code, EXIT_SUCCESS);
    let last: TelemetryRecord =
        serde_json::from_str(std::str::from_utf8(&log).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last.phase, "success");
    assert!(last.feedback.wind_on);
    eprintln!("ramp ended at {:.2} s", outcome.end_us as f64 / 1e6);
}

#[test]
fn flat_scenario_times_out() {
    let (outcome, _) = run("flat.json");
    assert_eq!(
        outcome.final_phase,
        SessionPhase::Failure(FailureReason::Timeout)
    );
    assert_eq!(outcome.exit_code, EXIT_GAME_FAILURE);
}

#[test]
fn yank_scenario_never_moves() {
    let (outcome, log) = run("yank.json");
    assert_eq!(outcome.exit_code, EXIT_GAME_FAILURE);
    for line in std::str::from_utf8(&log).unwrap().lines() {
        let rec: TelemetryRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.pull.displacement_m, 0.0);
    }
}

#[test]
fn same_seed_same_log() {
    let (_, a) = run("ramp.json");
    let (_, b) = run("ramp.json");
    assert_eq!(a, b);
}

#[test]
fn recorded_frames_replay_to_the_same_log() {
    let script = scenario("ramp.json");
    let cfg = EngineConfig::default();
    let mut log = Vec::new();
    let mut frames = Vec::new();
    let outcome = run_headless(&cfg, &script, &mut log, Some(&mut frames)).unwrap();
    assert!(outcome.frames > 0);

    let mut engine = focusloop::Engine::new(cfg).unwrap();
    engine
        .apply(focusloop::OperatorCommand::StartCalibration)
        .unwrap();
    let mut replayed = Vec::new();
    for frame in focusloop::ingest::Replay::new(std::io::Cursor::new(frames), 0.0) {
        let frame = frame.unwrap();
        if engine.phase() == SessionPhase::Pull {
            let elapsed = engine.session().state().pull.elapsed_s();
            engine.set_force(script.force_at(elapsed));
        }
        for rec in engine.ingest(&frame).unwrap() {
            replayed.extend_from_slice(rec.to_json().as_bytes());
            replayed.push(b'\n');
        }
        if engine.phase().is_terminal() {
            break;
        }
    }
    assert_eq!(
        String::from_utf8(replayed).unwrap(),
        String::from_utf8(log).unwrap()
    );
}
