use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use vulncred::bank::{BankConfig, BankService};
use vulncred::did::Did;
use vulncred::exchange::{RequestItem, RequestParams};
use vulncred::Timestamp;
use vulncred_services::bank_api::{self, BankApi, OpenExchange, ReviewBody};
use vulncred_services::client::{join, Http, HttpTransport, RemoteRegistry};
use vulncred_services::{http, init_logging};

/// Bank verifier: vulnerability exchanges and care-flag reviews.
#[derive(Parser)]
#[command(name = "bank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serves the protocol endpoint and the staff API.
    Serve {
        /// Base URL of the registry service.
        #[arg(long)]
        registry: String,
        #[arg(long, default_value = "127.0.0.1:8082")]
        listen: String,
        /// Directory for the flag store and bank key; in memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Public base URL holders send responses to.
        #[arg(long)]
        public_url: Option<String>,
    },
    /// Lists care flags due for review or arrears monitoring at `--now`.
    Review {
        /// RFC 3339 instant, e.g. 2022-05-01T00:00:00Z.
        #[arg(long)]
        now: Timestamp,
        #[arg(long, default_value = "http://127.0.0.1:8082")]
        bank: String,
    },
    /// Opens an exchange with a customer's holder agent.
    Open {
        customer: String,
        #[arg(long, conflicts_with = "holder_endpoint")]
        holder_did: Option<Did>,
        #[arg(long)]
        holder_endpoint: Option<String>,
        /// Ask for a proof of at least this age instead of the Fairness-for-All scheme.
        #[arg(long)]
        age_at_least: Option<i64>,
        /// Date the age is checked at; today when absent.
        #[arg(long, requires = "age_at_least")]
        check_date: Option<NaiveDate>,
        /// Claims to request revealed, comma separated.
        #[arg(long, value_delimiter = ',')]
        reveal: Vec<String>,
        #[arg(long, default_value = "vulnerability support assessment")]
        purpose: String,
        #[arg(long, default_value = "http://127.0.0.1:8082")]
        bank: String,
    },
    /// Shows a customer's care flags.
    Flags {
        customer: String,
        #[arg(long, default_value = "http://127.0.0.1:8082")]
        bank: String,
    },
    /// Erases all vulnerability evidence held for a customer.
    Forget {
        customer: String,
        #[arg(long, default_value = "http://127.0.0.1:8082")]
        bank: String,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("bank: {msg}");
    ExitCode::FAILURE
}

/// Prints a service reply as pretty JSON; error replies fail the command.
fn print_reply(reply: Result<vulncred_services::client::Reply, String>) -> ExitCode {
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

async fn serve(registry: String, listen: String, store: Option<PathBuf>, public_url: Option<String>) -> ExitCode {
    let listener = match http::bind(&listen).await {
        Ok(l) => l,
        Err(e) => return fail(format!("cannot listen on {listen}: {e}")),
    };
    let base = public_url.unwrap_or_else(|| format!("http://{}", listener.local_addr().expect("bound")));
    let registry: Arc<RemoteRegistry> = Arc::new(RemoteRegistry::new(&registry));
    let config = BankConfig { response_endpoint: Some(join(&base, "/present/response")), store_dir: store, ..Default::default() };
    let reg = registry.clone();
    let bank = match tokio::task::spawn_blocking(move || BankService::start(config, reg)).await {
        Ok(Ok(b)) => b,
        Ok(Err(e)) => return fail(e),
        Err(e) => return fail(e),
    };
    log::info!("bank {} ready", bank.did());
    let api = BankApi { bank: Arc::new(bank), registry, transport: Arc::new(HttpTransport::default()) };
    if let Err(e) = http::serve(listener, bank_api::router(api)).await {
        return fail(e);
    }
    ExitCode::SUCCESS
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let http = Http::default();
    match cli.command {
        Command::Serve { registry, listen, store, public_url } => {
            init_logging();
            serve(registry, listen, store, public_url).await
        }
        Command::Review { now, bank } => {
            let body = ReviewBody { now: Some(now), actions: Vec::new() };
            print_reply(http.post_json(&join(&bank, "/flags/review"), &body))
        }
        Command::Open { customer, holder_did, holder_endpoint, age_at_least, check_date, reveal, purpose, bank } => {
            let mut items: Vec<RequestItem> = reveal.iter().map(|c| RequestItem::reveal(c)).collect();
            if let Some(years) = age_at_least {
                items.push(RequestItem::age_at_least(years, check_date.unwrap_or_else(|| Timestamp::now().date())));
            }
            let params = (!items.is_empty()).then(|| RequestParams::itemized(items, &purpose));
            let body = OpenExchange { customer_ref: customer, holder_did, holder_endpoint, params };
            print_reply(http.post_json(&join(&bank, "/exchange/open"), &body))
        }
        Command::Flags { customer, bank } => {
            print_reply(http.get(&join(&bank, &format!("/flags/{customer}"))))
        }
        Command::Forget { customer, bank } => {
            print_reply(http.post_bytes(&join(&bank, &format!("/forget/{customer}")), b""))
        }
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
    fn review_requires_an_instant() {
        let cli = Cli::try_parse_from(["bank", "review", "--now", "2022-05-01T00:00:00Z"]).unwrap();
        assert!(matches!(cli.command, Command::Review { now, .. } if now.to_string() == "2022-05-01T00:00:00Z"));
        assert!(Cli::try_parse_from(["bank", "review", "--now", "tomorrow"]).is_err());
        assert!(Cli::try_parse_from(["bank", "open", "c", "--check-date", "2021-06-01"]).is_err());
    }
}
