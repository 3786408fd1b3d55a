//! HTTP front ends for the registry, issuer, bank verifier and holder agent,
//! plus the blocking clients they use to reach one another.

pub mod bank_api;
pub mod client;
pub mod http;
pub mod issuer_api;
pub mod registry_api;
pub mod wallet_api;

/// Logging for the command-line tools; `RUST_LOG` overrides the default.
pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
}
