use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vulncred::registry::{Registry, SharedRegistry};
use vulncred_services::{http, init_logging, registry_api};

/// Tamper-evident registry of DID documents and revocation status lists.
#[derive(Parser)]
#[command(name = "registry", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replays and verifies the chain in `--data`, then serves it.
    Serve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    init_logging();
    let Command::Serve { data, listen } = Cli::parse().command;
    let registry = match Registry::open(&data) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("registry: refusing to start: {e}");
            return ExitCode::FAILURE;
        }
    };
    log::info!("replayed {} block(s) from {}", registry.len(), data.display());
    let listener = match http::bind(&listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("registry: cannot listen on {listen}: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = http::serve(listener, registry_api::router(SharedRegistry::new(registry))).await {
        eprintln!("registry: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
