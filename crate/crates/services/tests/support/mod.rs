#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use chrono::NaiveDate;
use vulncred::bank::{BankConfig, BankService};
use vulncred::canonical::from_canonical_bytes;
use vulncred::did::Did;
use vulncred::exchange::{Decision, PresentationRequest, RequestParams};
use vulncred::issuer::{IssuerConfig, IssuerService, SubjectRecord};
use vulncred::registry::{Registry, SharedRegistry};
use vulncred::time::{Clock, ManualClock};
use vulncred::wallet::{KdfParams, Wallet};
use vulncred::Timestamp;
use vulncred_services::bank_api::{self, BankApi, OpenExchange};
use vulncred_services::client::{join, Http, HttpTransport, RemoteRegistry, Reply};
use vulncred_services::wallet_api::{self, ObtainBody, WalletAgent};
use vulncred_services::{http, issuer_api, registry_api};

/// Synthetic numbers that pass the mod-11 check.
pub const NHS: [&str; 7] =
    ["9434765919", "3416721101", "6840388549", "2143044321", "4451956838", "2374184048", "9483669464"];

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// True if any JSON scalar in `v` equals the integer or its decimal string.
pub fn json_has_integer(v: &serde_json::Value, n: i64) -> bool {
    match v {
        serde_json::Value::Number(x) => x.as_i64() == Some(n),
        serde_json::Value::String(s) => s == &n.to_string(),
        serde_json::Value::Array(a) => a.iter().any(|x| json_has_integer(x, n)),
        serde_json::Value::Object(o) => o.values().any(|x| json_has_integer(x, n)),
        _ => false,
    }
}

/// Every byte of every file under `dir`.
pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out
}

pub fn record(nhs: &str, dob: NaiveDate, drivers: [bool; 4], months: i64, detail: &str, did: Did) -> SubjectRecord {
    SubjectRecord {
        nhs_number: nhs.into(),
        date_of_birth: dob,
        assessment_date: date(2021, 4, 20),
        driver_health: drivers[0],
        driver_life_events: drivers[1],
        driver_low_resilience: drivers[2],
        driver_low_capability: drivers[3],
        work_incapacity_months: months,
        detail: detail.into(),
        subject_did: did,
    }
}

async fn listen() -> tokio::net::TcpListener {
    tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap()
}

/// All four services in this process, talking HTTP to one another on
/// loopback and sharing one manual clock.
pub struct Stack {
    pub rt: tokio::runtime::Runtime,
    pub clock: Arc<ManualClock>,
    pub dir: tempfile::TempDir,
    pub registry: SharedRegistry,
    pub registry_url: String,
    pub issuer: Arc<IssuerService>,
    pub issuer_url: String,
    pub bank: Arc<BankService>,
    pub bank_url: String,
    pub http: Http,
}

pub struct Holder {
    pub wallet: Arc<Wallet>,
    pub url: String,
    pub did: Did,
}

impl Stack {
    pub fn new(at: Timestamp) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
        let clock = Arc::new(ManualClock::new(at));
        let dir = tempfile::tempdir().unwrap();

        let registry = SharedRegistry::new(Registry::open(&dir.path().join("registry")).unwrap());
        let registry_url = Self::spawn(&rt, registry_api::router(registry.clone()));

        let issuer_listener = rt.block_on(listen());
        let issuer_url = format!("http://{}", issuer_listener.local_addr().unwrap());
        let issuer = IssuerService::start(
            IssuerConfig {
                clock: clock.clone(),
                service_endpoint: Some(issuer_url.clone()),
                state_dir: Some(dir.path().join("issuer")),
                ..Default::default()
            },
            Arc::new(RemoteRegistry::new(&registry_url)),
        )
        .unwrap();
        let issuer = Arc::new(issuer);
        rt.spawn(http::serve(issuer_listener, issuer_api::router(issuer.clone())));

        let bank_listener = rt.block_on(listen());
        let bank_url = format!("http://{}", bank_listener.local_addr().unwrap());
        let bank_registry = Arc::new(RemoteRegistry::new(&registry_url));
        let bank = BankService::start(
            BankConfig {
                clock: clock.clone(),
                response_endpoint: Some(join(&bank_url, "/present/response")),
                store_dir: Some(dir.path().join("bank")),
                ..Default::default()
            },
            bank_registry.clone(),
        )
        .unwrap();
        let bank = Arc::new(bank);
        let api = BankApi { bank: bank.clone(), registry: bank_registry, transport: Arc::new(HttpTransport::default()) };
        rt.spawn(http::serve(bank_listener, bank_api::router(api)));

        Stack { rt, clock, dir, registry, registry_url, issuer, issuer_url, bank, bank_url, http: Http::default() }
    }

    fn spawn(rt: &tokio::runtime::Runtime, router: axum::Router) -> String {
        let listener = rt.block_on(listen());
        let url = format!("http://{}", listener.local_addr().unwrap());
        rt.spawn(http::serve(listener, router));
        url
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn bank_store(&self) -> PathBuf {
        self.dir.path().join("bank")
    }

    /// A holder agent with an encrypted wallet, its endpoint published in
    /// its DID document.
    pub fn holder(&self, name: &str) -> Holder {
        let path = self.dir.path().join(format!("{name}.wallet"));
        let wallet = Arc::new(Wallet::create(&path, "passphrase", KdfParams::insecure_fast()).unwrap());
        let listener = self.rt.block_on(listen());
        let url = format!("http://{}", listener.local_addr().unwrap());
        let agent = WalletAgent {
            wallet: wallet.clone(),
            registry: Arc::new(RemoteRegistry::new(&self.registry_url)),
            transport: Arc::new(HttpTransport::default()),
            clock: self.clock.clone(),
        };
        let did = wallet.publish_endpoint(&*agent.registry, &join(&url, "/present/request")).unwrap();
        self.rt.spawn(http::serve(listener, wallet_api::router(agent)));
        Holder { wallet, url, did }
    }

    /// A holder whose record is loaded at the issuer and whose pair has been
    /// obtained through the HTTP issuance flow.
    pub fn enrolled(&self, name: &str, rec: impl FnOnce(Did) -> SubjectRecord) -> Holder {
        let h = self.holder(name);
        let rec = rec(h.did.clone());
        let nhs = rec.nhs_number.clone();
        self.issuer.load_records([rec]);
        let reply = self
            .http
            .post_json(&join(&h.url, "/wallet/obtain"), &ObtainBody { issuer_url: self.issuer_url.clone(), nhs_number: nhs })
            .unwrap();
        assert!(reply.ok(), "obtain: {} {}", reply.status, reply.error_message());
        h
    }

    pub fn open(&self, customer: &str, holder: &Holder, params: Option<RequestParams>) -> PresentationRequest {
        let body = OpenExchange {
            customer_ref: customer.into(),
            holder_did: Some(holder.did.clone()),
            holder_endpoint: None,
            params,
        };
        let reply = self.http.post_json(&join(&self.bank_url, "/exchange/open"), &body).unwrap();
        assert!(reply.ok(), "open: {} {}", reply.status, reply.error_message());
        from_canonical_bytes(&reply.body).unwrap()
    }

    pub fn decide(&self, holder: &Holder, request_id: &str, decision: &Decision) -> Reply {
        self.http.post_json(&join(&holder.url, &format!("/inbox/{request_id}/decide")), decision).unwrap()
    }

    pub fn get(&self, base: &str, path: &str) -> Reply {
        self.http.get(&join(base, path)).unwrap()
    }

    pub fn post(&self, base: &str, path: &str, body: &serde_json::Value) -> Reply {
        self.http.post_json(&join(base, path), body).unwrap()
    }
}

/// A service binary run as a child process, killed on drop.
pub struct Proc {
    pub child: Child,
    pub url: String,
}

impl Proc {
    /// Starts `exe` with `args` and waits for its `listening on` line.
    pub fn start(exe: &str, args: &[&str], envs: &[(&str, &str)]) -> Proc {
        let mut cmd = Command::new(exe);
        cmd.args(args).stdout(Stdio::piped()).stderr(Stdio::null()).env("RUST_LOG", "warn");
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().unwrap_or_else(|e| panic!("spawn {exe}: {e}"));
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        let url = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{exe}: unexpected {line:?}")).into();
        Proc { child, url }
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Runs a one-shot CLI command and returns (success, stdout, stderr).
pub fn run(exe: &str, args: &[&str]) -> (bool, String, String) {
    let out = Command::new(exe).args(args).output().unwrap_or_else(|e| panic!("run {exe}: {e}"));
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}
