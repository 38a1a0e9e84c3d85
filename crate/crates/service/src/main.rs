use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use focusloop::estimator::ScoreMode;
use focusloop::game::SessionPhase;
use focusloop::headless::{
    run_headless_to_path, HeadlessScript, EXIT_ERROR, EXIT_GAME_FAILURE, EXIT_SUCCESS,
};
use focusloop::ingest::SyntheticProfile;
use focusloop::{load_config, EngineConfig};
use focusloop_service::{serve, ServeOptions, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    Synth,
    Replay,
    Tcp,
}

/// Concentration biofeedback engine.
///
/// Exit codes: 0 session succeeded (or server stopped before a result),
/// 1 error, 2 session ended in failure.
#[derive(Debug, Parser)]
#[command(name = "focusloop", version)]
struct Cli {
    /// Engine configuration (JSON); defaults apply to anything omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Where EEG and gaze frames come from.
    #[arg(long, value_enum, default_value_t = SourceKind::Synth)]
    source: SourceKind,
    /// Synthetic profile JSON, or a headless script whose profile is used.
    #[arg(long, value_name = "PATH")]
    profile: Option<PathBuf>,
    /// Recording to replay with `--source replay`.
    #[arg(long, value_name = "PATH")]
    replay: Option<PathBuf>,
    /// Dashboard WebSocket address (overrides `service.listen`).
    #[arg(long, value_name = "HOST:PORT")]
    listen: Option<String>,
    /// Sensor protocol address for `--source tcp` (overrides `ingest.sensor_listen`).
    #[arg(long, value_name = "HOST:PORT")]
    sensor_listen: Option<String>,
    /// Pacing factor for synthetic and replayed sources; 0 disables pacing.
    #[arg(long, value_name = "X")]
    speed: Option<f64>,
    /// Record ingested frames as JSONL.
    #[arg(long, value_name = "PATH")]
    record: Option<PathBuf>,
    /// Run a scripted session without pacing and exit.
    #[arg(long, requires_all = ["script", "out"])]
    headless: bool,
    /// Headless script (profile, force trace, commands).
    #[arg(long, value_name = "PATH")]
    script: Option<PathBuf>,
    /// Telemetry JSONL output for `--headless`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Seed for synthetic sources.
    #[arg(long)]
    seed: Option<u64>,
    /// Score output mode.
    #[arg(long, value_parser = parse_mode, value_name = "linear|time_avg")]
    mode: Option<ScoreMode>,
}

fn parse_mode(s: &str) -> Result<ScoreMode, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit(EXIT_ERROR)
            } else {
                exit(EXIT_SUCCESS)
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(cli) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            exit(EXIT_ERROR)
        }
    }
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn phase_exit_code(phase: SessionPhase) -> i32 {
    match phase {
        SessionPhase::Failure(_) => EXIT_GAME_FAILURE,
        _ => EXIT_SUCCESS,
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut config = match &cli.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => EngineConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.estimator.mode = mode;
    }
    if let Some(listen) = &cli.listen {
        config.service.listen = listen.clone();
    }
    if let Some(addr) = &cli.sensor_listen {
        config.ingest.sensor_listen = addr.clone();
    }
    if let Some(speed) = cli.speed {
        config.ingest.replay_speed = speed;
    }
    config.validate()?;

    if cli.headless {
        return run_headless_cli(&cli, &config);
    }
    let source = match cli.source {
        SourceKind::Synth => {
            let mut profile = match &cli.profile {
                Some(path) => load_profile(path)?,
                None => demo_profile(),
            };
            if let Some(seed) = cli.seed {
                profile.seed = seed;
            }
            Source::Synth {
                profile,
                speed: config.ingest.replay_speed,
            }
        }
        SourceKind::Replay => {
            let Some(path) = cli.replay.clone() else {
                bail!("--source replay needs --replay PATH");
            };
            Source::Replay {
                path,
                speed: config.ingest.replay_speed,
            }
        }
        SourceKind::Tcp => Source::Tcp {
            listen: config.ingest.sensor_listen.clone(),
        },
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = serve(
            config,
            source,
            ServeOptions {
                record: cli.record.clone(),
            },
        )
        .await?;
        eprintln!("dashboard: ws://{}/ws", handle.addr);
        if let Some(addr) = handle.sensor_addr {
            eprintln!("sensors: tcp://{addr}");
        }
        tokio::signal::ctrl_c().await?;
        let phase = handle.shutdown().await?;
        eprintln!("stopped in phase {phase}");
        Ok(phase_exit_code(phase))
    })
}

fn run_headless_cli(cli: &Cli, config: &EngineConfig) -> anyhow::Result<i32> {
    let (Some(script_path), Some(out)) = (&cli.script, &cli.out) else {
        bail!("--headless needs --script and --out");
    };
    let mut script = HeadlessScript::load(script_path)
        .with_context(|| format!("loading {}", script_path.display()))?;
    if let Some(seed) = cli.seed {
        script.seed = Some(seed);
    }
    let outcome = run_headless_to_path(config, &script, out, cli.record.as_deref())?;
    eprintln!(
        "{}: {} records, {} frames, ended at {:.2} s",
        outcome.final_phase,
        outcome.records,
        outcome.frames,
        outcome.end_us as f64 / 1e6
    );
    Ok(outcome.exit_code)
}

/// Accepts either a bare profile or a headless script carrying one.
fn load_profile(path: &Path) -> anyhow::Result<SyntheticProfile> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let profile = if value.get("profile").is_some() {
        let script = HeadlessScript::from_json_str(&text)?;
        let mut p = script.profile;
        if let Some(seed) = script.seed {
            p.seed = seed;
        }
        p
    } else {
        serde_json::from_value(value)?
    };
    profile.validate()?;
    Ok(profile)
}

/// Steady mid-level alpha over beta and theta, for trying the dashboard.
fn demo_profile() -> SyntheticProfile {
    serde_json::from_value(serde_json::json!({
        "components": [
            { "frequency_hz": 10.0, "amplitude": [[0, 4], [30, 4], [30, 12], [60, 12], [60, 4], [80, 12]] },
            { "frequency_hz": 20.0, "amplitude": [[0, 8]] },
            { "frequency_hz": 6.0, "amplitude": [[0, 6]] }
        ],
        "noise_amplitude_uv": 2.0,
        "gaze_script": [{ "from_s": 0.0, "yaw_deg": 0.0, "pitch_deg": 0.0 }],
        "seed": 1
    }))
    .expect("demo profile is valid")
}
