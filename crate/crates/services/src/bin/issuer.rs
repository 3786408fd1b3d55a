use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use vulncred::issuer::{ingest, IssuerConfig, IssuerService};
use vulncred_services::client::RemoteRegistry;
use vulncred_services::{http, init_logging, issuer_api};

/// Health-authority issuer of vulnerability credentials.
#[derive(Parser)]
#[command(name = "issuer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Loads subject records and serves challenge issuance.
    Serve {
        /// Subject records, `.csv` or JSON Lines.
        #[arg(long)]
        records: PathBuf,
        /// Base URL of the registry service.
        #[arg(long)]
        registry: String,
        #[arg(long, default_value = "127.0.0.1:8081")]
        listen: String,
        /// Directory for the issuer key and issuance journal; in memory when absent.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Public base URL written into the issuer's DID document.
        #[arg(long)]
        public_url: Option<String>,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("issuer: {msg}");
    ExitCode::FAILURE
}

#[tokio::main]
async fn main() -> ExitCode {
    init_logging();
    let Command::Serve { records, registry, listen, state, public_url } = Cli::parse().command;
    let records = match ingest(&records) {
        Ok(r) => r,
        Err(vulncred::issuer::IngestError::Rejected(lines)) => {
            for l in &lines {
                eprintln!("issuer: {l}");
            }
            return fail(format!("{} record(s) rejected; nothing loaded", lines.len()));
        }
        Err(e) => return fail(e),
    };
    let listener = match http::bind(&listen).await {
        Ok(l) => l,
        Err(e) => return fail(format!("cannot listen on {listen}: {e}")),
    };
    let endpoint = public_url.unwrap_or_else(|| format!("http://{}", listener.local_addr().expect("bound")));
    let registry = Arc::new(RemoteRegistry::new(&registry));
    let config = IssuerConfig { service_endpoint: Some(endpoint), state_dir: state, ..Default::default() };
    let service = match tokio::task::spawn_blocking(move || IssuerService::start(config, registry)).await {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return fail(e),
        Err(e) => return fail(e),
    };
    let loaded = service.load_records(records);
    log::info!("issuer {} ready with {loaded} record(s)", service.did());
    if let Err(e) = http::serve(listener, issuer_api::router(Arc::new(service))).await {
        return fail(e);
    }
    ExitCode::SUCCESS
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_consistent() {
        Cli::command().debug_assert();
    }
}
