use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Parser, Subcommand};
use vulncred::exchange::Decision;
use vulncred::time::SystemClock;
use vulncred::wallet::{KdfParams, Wallet};
use vulncred_services::client::{join, Http, HttpTransport, RemoteRegistry, Reply};
use vulncred_services::wallet_api::{self, ObtainBody, WalletAgent};
use vulncred_services::{http, init_logging};

const AGENT: &str = "http://127.0.0.1:8083";

/// Holder agent: encrypted credential wallet with a consent inbox.
#[derive(Parser)]
#[command(name = "wallet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Opens (or creates) the wallet and serves the holder agent.
    Serve {
        /// Encrypted wallet file.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8083")]
        listen: String,
        /// Base URL of the registry service.
        #[arg(long)]
        registry: String,
        /// Public base URL verifiers push requests to; published in the holder DID.
        #[arg(long)]
        public_url: Option<String>,
        /// Environment variable holding the wallet passphrase.
        #[arg(long, default_value = "VULNCRED_WALLET_PASSPHRASE")]
        passphrase_env: String,
        /// Permit a non-loopback listen address. The consent API still answers loopback peers only.
        #[arg(long)]
        allow_remote: bool,
    },
    /// Answers a pending request in the running agent's inbox.
    #[command(group(ArgGroup::new("choice").required(true).args(["accept", "deny", "grant"])))]
    Decide {
        request_id: String,
        #[arg(long)]
        accept: bool,
        #[arg(long)]
        deny: bool,
        /// Item indices to grant, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grant: Option<Vec<usize>>,
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
    /// Requests this holder's credential pair from an issuer.
    Obtain {
        #[arg(long)]
        issuer: String,
        #[arg(long)]
        nhs_number: String,
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
    /// Prints the holder DID.
    Did {
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
    /// Lists inbox requests.
    Inbox {
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
    /// Lists stored credentials and their last status.
    Show {
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
    /// Re-checks stored credentials against the registry.
    Refresh {
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
    /// Prints the disclosure audit log.
    Audit {
        #[arg(long, default_value = AGENT)]
        agent: String,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("wallet: {msg}");
    ExitCode::FAILURE
}

fn print_reply(reply: Result<Reply, String>) -> ExitCode {
    match reply {
        Ok(r) if r.ok() => {
            match serde_json::from_slice::<serde_json::Value>(&r.body) {
                Ok(v) => println!("{}", serde_json::to_string_pretty(&v).expect("json prints")),
                Err(_) => println!("{}", r.text()),
            }
            ExitCode::SUCCESS
        }
        Ok(r) => fail(format!("{} {}", r.status, r.error_message())),
        Err(e) => fail(e),
    }
}

async fn serve(
    store: PathBuf,
    listen: String,
    registry: String,
    public_url: Option<String>,
    passphrase_env: String,
    allow_remote: bool,
) -> ExitCode {
    let addr: SocketAddr = match listen.parse() {
        Ok(a) => a,
        Err(e) => return fail(format!("listen address {listen}: {e}")),
    };
    if !addr.ip().is_loopback() && !allow_remote {
        return fail(format!("{listen} is not a loopback address; pass --allow-remote to expose the protocol endpoint"));
    }
    let Ok(passphrase) = std::env::var(&passphrase_env) else {
        return fail(format!("set the wallet passphrase in ${passphrase_env}"));
    };
    let opened = tokio::task::spawn_blocking(move || Wallet::open_or_create(&store, &passphrase, KdfParams::default()));
    let wallet = match opened.await {
        Ok(Ok(w)) => Arc::new(w),
        Ok(Err(e)) => return fail(e),
        Err(e) => return fail(e),
    };
    let listener = match http::bind(&listen).await {
        Ok(l) => l,
        Err(e) => return fail(format!("cannot listen on {listen}: {e}")),
    };
    let base = public_url.unwrap_or_else(|| format!("http://{}", listener.local_addr().expect("bound")));
    let agent = WalletAgent {
        wallet,
        registry: Arc::new(RemoteRegistry::new(&registry)),
        transport: Arc::new(HttpTransport::default()),
        clock: Arc::new(SystemClock),
    };
    let a = agent.clone();
    let endpoint = join(&base, "/present/request");
    match tokio::task::spawn_blocking(move || a.wallet.publish_endpoint(&*a.registry, &endpoint)).await {
        Ok(Ok(did)) => log::info!("holder {did} ready"),
        Ok(Err(e)) => return fail(e),
        Err(e) => return fail(e),
    }
    wallet_api::spawn_expiry(agent.clone());
    if let Err(e) = http::serve(listener, wallet_api::router(agent)).await {
        return fail(e);
    }
    ExitCode::SUCCESS
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let http = Http::default();
    match cli.command {
        Command::Serve { store, listen, registry, public_url, passphrase_env, allow_remote } => {
            init_logging();
            serve(store, listen, registry, public_url, passphrase_env, allow_remote).await
        }
        Command::Decide { request_id, accept, deny, grant, agent } => {
            let decision = match (accept, deny, grant) {
                (true, _, _) => Decision::AcceptAll,
                (_, true, _) => Decision::Deny,
                (_, _, Some(g)) => Decision::Partial(g),
                _ => unreachable!("clap requires one choice"),
            };
            print_reply(http.post_json(&join(&agent, &format!("/inbox/{request_id}/decide")), &decision))
        }
        Command::Obtain { issuer, nhs_number, agent } => {
            let body = ObtainBody { issuer_url: issuer, nhs_number };
            print_reply(http.post_json(&join(&agent, "/wallet/obtain"), &body))
        }
        Command::Did { agent } => print_reply(http.get(&join(&agent, "/wallet/did"))),
        Command::Inbox { agent } => print_reply(http.get(&join(&agent, "/inbox"))),
        Command::Show { agent } => print_reply(http.get(&join(&agent, "/wallet"))),
        Command::Refresh { agent } => print_reply(http.post_bytes(&join(&agent, "/wallet/refresh"), b"")),
        Command::Audit { agent } => print_reply(http.get(&join(&agent, "/audit"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn decide_takes_exactly_one_choice() {
        let cli = Cli::try_parse_from(["wallet", "decide", "r1", "--grant", "0,2"]).unwrap();
        assert!(matches!(cli.command, Command::Decide { grant: Some(g), .. } if g == [0, 2]));
        assert!(Cli::try_parse_from(["wallet", "decide", "r1"]).is_err());
        assert!(Cli::try_parse_from(["wallet", "decide", "r1", "--accept", "--deny"]).is_err());
    }
}
