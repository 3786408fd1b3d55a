#![allow(dead_code)]

use std::sync::Arc;

use chrono::NaiveDate;
use vulncred::bank::{BankConfig, BankService};
use vulncred::exchange::{
    HolderTransport, PresentationRequest, PresentationResponse, TransportError, VerifierTransport,
};
use vulncred::issuer::{IssuerConfig, IssuerService, SubjectRecord};
use vulncred::registry::{SharedRegistry, Registry};
use vulncred::time::{Clock, ManualClock};
use vulncred::wallet::Wallet;
use vulncred::Timestamp;

pub const INPROC: &str = "inproc";

/// Delivers bank requests straight into a wallet's inbox.
pub struct ToWallet(pub Arc<Wallet>, pub Arc<dyn Clock>);

impl HolderTransport for ToWallet {
    fn deliver(&self, _endpoint: &str, request: &PresentationRequest) -> Result<(), TransportError> {
        self.0.receive_request(request.clone(), self.1.now()).map_err(|e| TransportError(e.to_string()))
    }
}

/// Delivers wallet responses straight to the bank, remembering the last
/// outcome for assertions.
pub struct ToBank(pub Arc<BankService>, pub std::sync::Mutex<Vec<PresentationResponse>>);

impl VerifierTransport for ToBank {
    fn respond(&self, _endpoint: &str, response: &PresentationResponse) -> Result<(), TransportError> {
        self.1.lock().unwrap().push(response.clone());
        self.0.receive(response).map(|_| ()).map_err(|e| TransportError(e.to_string()))
    }
}

pub struct World {
    pub clock: Arc<ManualClock>,
    pub registry: Arc<SharedRegistry>,
    pub issuer: IssuerService,
    pub bank: Arc<BankService>,
    pub store_dir: tempfile::TempDir,
}

impl World {
    pub fn new(at: Timestamp) -> Self {
        let clock = Arc::new(ManualClock::new(at));
        let registry = Arc::new(SharedRegistry::new(Registry::in_memory().with_clock(clock.clone())));
        let issuer = IssuerService::start(
            IssuerConfig { clock: clock.clone(), ..Default::default() },
            registry.clone(),
        )
        .unwrap();
        let store_dir = tempfile::tempdir().unwrap();
        let bank = BankService::start(
            BankConfig {
                response_endpoint: Some(INPROC.into()),
                store_dir: Some(store_dir.path().to_path_buf()),
                clock: clock.clone(),
                ..Default::default()
            },
            registry.clone(),
        )
        .unwrap();
        World { clock, registry, issuer, bank: Arc::new(bank), store_dir }
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// A wallet holding both credentials for a subject born on `dob`.
    pub fn holder(&self, nhs: &str, dob: NaiveDate, drivers: [bool; 4], months: i64) -> Arc<Wallet> {
        let wallet = Arc::new(Wallet::in_memory());
        let did = wallet.ensure_anchored(&*self.registry).unwrap();
        self.issuer.load_records([SubjectRecord {
            nhs_number: nhs.into(),
            date_of_birth: dob,
            assessment_date: NaiveDate::from_ymd_opt(2021, 4, 20).unwrap(),
            driver_health: drivers[0],
            driver_life_events: drivers[1],
            driver_low_resilience: drivers[2],
            driver_low_capability: drivers[3],
            work_incapacity_months: months,
            detail: "post-viral fatigue, ward 7 follow-up".into(),
            subject_did: did,
        }]);
        let challenge = self.issuer.challenge();
        let pair = self.issuer.issue_for(&wallet.sign_issue_request(&challenge, nhs)).unwrap();
        wallet.store_pair(pair, self.now()).unwrap();
        wallet
    }

    pub fn connect(&self, customer: &str, wallet: &Arc<Wallet>) -> (ToWallet, ToBank) {
        self.bank.register_customer(customer, Some(INPROC.into())).unwrap();
        (ToWallet(wallet.clone(), self.clock.clone()), ToBank(self.bank.clone(), Default::default()))
    }
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

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}
