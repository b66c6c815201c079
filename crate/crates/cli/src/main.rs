//! `comaguard` command line.
//!
//! Exit codes: 0 success, 1 verification divergence, 2 usage or I/O error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use comaguard_core::event::{parse_jsonl, to_jsonl};
use comaguard_core::oracle::verify_events;
use comaguard_core::replay::{Replay, WallClockPacer};
use comaguard_core::scenario::{generate_scenario, ScenarioKind, ScenarioSpec};
use comaguard_core::settings::Settings;
use comaguard_core::trace::{parse_trace, write_trace};
use comaguard_core::{EventKind, TraceRecord};
use comaguard_service::{serve, Registry, ServiceConfig};

#[derive(Parser)]
#[command(name = "comaguard", version, about = "Immobility and coma-risk detector")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a trace and write the event log.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Logical seconds per wall second. Unpaced when omitted.
        #[arg(long)]
        speed: Option<f64>,
        /// Event log path, `-` for standard output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scenario trace.
    Gen {
        #[arg(long)]
        kind: ScenarioKind,
        /// Seconds. Defaults to a length that covers the whole scenario.
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace path, standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an event log against an independent model of the detector.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        events: PathBuf,
    },
    /// Serve the session API until interrupted.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, env = "COMAGUARD_GATEWAY_URL")]
        gateway_url: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Keep sessions in memory only.
        #[arg(long, conflicts_with = "data_dir")]
        in_memory: bool,
    },
}

fn load_settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        Some(p) => Settings::load(p).with_context(|| format!("config {}", p.display())),
        None => Ok(Settings::default()),
    }
}

fn load_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = fs::File::open(path).with_context(|| format!("trace {}", path.display()))?;
    parse_trace(file).with_context(|| format!("trace {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        _ => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_run(trace: &Path, config: Option<&Path>, speed: Option<f64>, out: &Path) -> Result<ExitCode> {
    let settings = load_settings(config)?;
    let records = load_trace(trace)?;
    let replay = Replay::new(settings.detection, settings.contacts)
        .gateway(settings.gateway)
        .tick_period_s(settings.tick_period_s);
    let output = match speed {
        Some(s) => replay.speed(s).run_paced(&records, &mut WallClockPacer::default()),
        None => replay.run(&records),
    }
    .with_context(|| format!("trace {}", trace.display()))?;
    write_out(Some(out), &to_jsonl(&output.events))?;

    let count = |f: fn(&EventKind) -> bool| output.events.iter().filter(|e| f(&e.kind)).count();
    let summary = format!(
        "alarms={} attempts={} events={}",
        count(|k| matches!(k, EventKind::AlarmRaised { .. })),
        count(|k| matches!(k, EventKind::ContactAttempt { .. })),
        output.events.len(),
    );
    if out == Path::new("-") {
        eprintln!("{summary}");
    } else {
        println!("{summary}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(kind: ScenarioKind, duration: Option<u64>, seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let mut spec = ScenarioSpec::new(kind, seed);
    if let Some(d) = duration {
        spec.duration_s = d;
    }
    let records = generate_scenario(&spec)?;
    write_out(out, &write_trace(&records)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(trace: &Path, config: Option<&Path>, events: &Path) -> Result<ExitCode> {
    let settings = load_settings(config)?;
    let records = load_trace(trace)?;
    let text = fs::read_to_string(events).with_context(|| format!("events {}", events.display()))?;
    let log = parse_jsonl(&text).with_context(|| format!("events {}", events.display()))?;
    let verdict = verify_events(
        &records,
        &settings.detection,
        &settings.contacts,
        settings.tick_period_s,
        &log,
    );
    if verdict.is_pass() {
        println!("PASS {} events", log.len());
        return Ok(ExitCode::SUCCESS);
    }
    let divergences = verdict.divergences();
    println!("FAIL {} divergences", divergences.len());
    for d in divergences {
        println!("{d}");
    }
    Ok(ExitCode::from(1))
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("signal handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

fn cmd_serve(
    port: Option<u16>,
    gateway_url: Option<String>,
    config: Option<&Path>,
    data_dir: Option<PathBuf>,
    in_memory: bool,
) -> Result<ExitCode> {
    let mut svc = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("config {}", p.display()))?;
            ServiceConfig::from_json(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => ServiceConfig::default(),
    };
    if let Some(port) = port {
        svc.options.port = port;
    }
    if gateway_url.is_some() {
        svc.options.gateway_url = gateway_url;
    }
    if data_dir.is_some() {
        svc.options.data_dir = data_dir;
    }
    if in_memory {
        svc.options.data_dir = None;
    }

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = ("0.0.0.0", svc.options.port);
        let listener = match tokio::net::TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) => bail!("cannot listen on port {}: {e}", svc.options.port),
        };
        let gateway = svc.options.gateway_url.clone().unwrap_or_else(|| "offline script".into());
        let registry = Registry::open(svc).context("recovering sessions")?;
        println!("listening on {} (gateway: {gateway})", listener.local_addr()?);
        serve(listener, registry, shutdown_signal()).await?;
        println!("stopped");
        Ok(ExitCode::SUCCESS)
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.cmd {
        Cmd::Run { trace, config, speed, out } => cmd_run(&trace, config.as_deref(), speed, &out),
        Cmd::Gen { kind, duration, seed, out } => cmd_gen(kind, duration, seed, out.as_deref()),
        Cmd::Verify { trace, config, events } => cmd_verify(&trace, config.as_deref(), &events),
        Cmd::Serve {
            port,
            gateway_url,
            config,
            data_dir,
            in_memory,
        } => cmd_serve(port, gateway_url, config.as_deref(), data_dir, in_memory),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
