//! Stand-alone mock notification gateway.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use comaguard_core::gateway::{Behavior, GatewayScript};
use comaguard_service::MockGateway;

#[derive(Parser)]
#[command(name = "comaguard-mock-gateway", version, about = "Scriptable notification gateway for tests")]
struct Args {
    #[arg(long, default_value_t = 8090)]
    port: u16,
    /// JSON gateway script: `{"default": "fail", "numbers": {"+1555...": "deliver"}}`.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Behaviour for numbers without a rule, when no script is given.
    #[arg(long, value_parser = ["deliver", "fail", "no_answer"], default_value = "fail")]
    default: String,
}

async fn run(args: Args) -> Result<()> {
    let script = match &args.script {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("script {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("script {}", p.display()))?
        }
        None => GatewayScript::uniform(serde_json::from_value::<Behavior>(args.default.clone().into())?),
    };
    let mock = MockGateway::new(script);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port))
        .await
        .with_context(|| format!("cannot listen on port {}", args.port))?;
    println!("mock gateway on {}", listener.local_addr()?);
    axum::serve(listener, mock.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
