//! Bank-side verifier and the care-support flag lifecycle.
//!
//! A verified presentation that reveals a driver as `true` produces one
//! ACTIVE flag for that category. Flags come up for review every 12 calendar
//! months; while the customer is in arrears they are also monitored every 3
//! months. Erasure replaces every flag with a tombstone, drops the stored
//! presentations and compacts the on-disk store so the old bytes are gone.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{digest_parts, to_canonical_bytes, Hash32};
use crate::credential::ClaimValue;
use crate::did::{self, generate_did, Did, DidAnchor, KeyPair};
use crate::disclosure::{DisclosedFacts, Presentation, ProvenPredicate};
use crate::exchange::{
    build_request, receive_response, ExchangeError, HolderTransport, PresentationRequest, PresentationResponse,
    RequestParams, VerificationOutcome, VerificationResult, VerifierState,
};
use crate::registry::{with_view, RegistryError, RegistryHandle};
use crate::time::{Clock, SystemClock, Timestamp};

const KEYS_FILE: &str = "bank-keys.json";

pub const REVIEW_INTERVAL_MONTHS: u32 = 12;
pub const ARREARS_INTERVAL_MONTHS: u32 = 3;
const SNAPSHOT_FILE: &str = "snapshot.json";
const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Health,
    LifeEvents,
    LowResilience,
    LowCapability,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Health, Category::LifeEvents, Category::LowResilience, Category::LowCapability];

    pub fn claim(self) -> &'static str {
        match self {
            Category::Health => "driver_health",
            Category::LifeEvents => "driver_life_events",
            Category::LowResilience => "driver_low_resilience",
            Category::LowCapability => "driver_low_capability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagSource {
    Presentation,
    AgentManual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagState {
    Active,
    Resolved,
    Erased,
}

/// Why a flag exists: the verified facts, or the agent's note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub request_id: Option<String>,
    pub credential_id: Option<String>,
    pub revealed: BTreeMap<String, ClaimValue>,
    pub proven: Vec<ProvenPredicate>,
    pub agent_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CareFlag {
    pub flag_id: String,
    pub customer_ref: String,
    pub category: Category,
    pub source: FlagSource,
    pub evidence: Evidence,
    pub created_at: Timestamp,
    /// Start of the current review cycle; `review_due` is this plus 12 months.
    pub cycle_start: Timestamp,
    pub review_due: Timestamp,
    pub arrears_monitoring: Option<Timestamp>,
    pub state: FlagState,
}

/// All that remains of an erased flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub flag_id: String,
    pub state: FlagState,
    pub tombstone: Hash32,
    pub erased_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPresentation {
    pub request_id: String,
    pub received_at: Timestamp,
    pub presentation: Presentation,
    pub facts: DisclosedFacts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub holder_endpoint: Option<String>,
    pub in_arrears: bool,
    pub care_support: Vec<CareFlag>,
    pub erased: Vec<Tombstone>,
    pub presentations: Vec<StoredPresentation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewAction {
    ReviewDue,
    MonitorDue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub customer_ref: String,
    pub flag_id: String,
    pub category: Category,
    pub action: ReviewAction,
    pub due_at: Timestamp,
}

/// What an agent does with an item from [`BankService::run_review`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewDecision {
    Renew,
    Resolve,
    Monitored,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErasureReport {
    pub flags: usize,
    pub presentations: usize,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("unknown customer {0}")]
    UnknownCustomer(String),
    #[error("unknown flag {0}")]
    UnknownFlag(String),
    #[error("holder endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("{0}")]
    InvalidAction(String),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("store: {0}")]
    Store(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize, Default)]
struct Snapshot {
    customers: BTreeMap<String, CustomerRecord>,
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    customer: String,
    record: CustomerRecord,
}

/// Snapshot plus journal. Every mutation appends the affected customer's
/// whole record; erasure writes a new snapshot and starts an empty journal.
struct FlagStore {
    state: Snapshot,
    dir: Option<PathBuf>,
    journal: Option<File>,
}

impl FlagStore {
    fn in_memory() -> Self {
        FlagStore { state: Snapshot::default(), dir: None, journal: None }
    }

    fn open(dir: &Path) -> Result<Self, std::io::Error> {
        std::fs::create_dir_all(dir)?;
        let mut state: Snapshot = match std::fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(b) => serde_json::from_slice(&b).map_err(invalid)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Snapshot::default(),
            Err(e) => return Err(e),
        };
        let journal_path = dir.join(JOURNAL_FILE);
        if let Ok(f) = File::open(&journal_path) {
            let lines: Vec<String> = BufReader::new(f).lines().collect::<Result<_, _>>()?;
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<JournalEntry>(line) {
                    Ok(e) => {
                        state.customers.insert(e.customer, e.record);
                    }
                    Err(_) if i + 1 == lines.len() => log::warn!("ignoring torn journal tail"),
                    Err(e) => return Err(invalid(e)),
                }
            }
        }
        let journal = OpenOptions::new().create(true).append(true).open(&journal_path)?;
        Ok(FlagStore { state, dir: Some(dir.to_path_buf()), journal: Some(journal) })
    }

    fn record(&self, customer: &str) -> Option<&CustomerRecord> {
        self.state.customers.get(customer)
    }

    fn record_mut(&mut self, customer: &str) -> Result<&mut CustomerRecord, BankError> {
        self.state.customers.get_mut(customer).ok_or_else(|| BankError::UnknownCustomer(customer.into()))
    }

    fn persist(&mut self, customer: &str) -> Result<(), std::io::Error> {
        let Some(journal) = self.journal.as_mut() else { return Ok(()) };
        let record = self.state.customers.get(customer).cloned().unwrap_or_default();
        let mut line = to_canonical_bytes(&JournalEntry { customer: customer.into(), record }).map_err(invalid)?;
        line.push(b'\n');
        journal.write_all(&line)?;
        journal.sync_data()
    }

    /// Rewrites the snapshot from current state and seals a fresh journal.
    fn compact(&mut self) -> Result<(), std::io::Error> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&to_canonical_bytes(&self.state).map_err(invalid)?)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        let journal_path = dir.join(JOURNAL_FILE);
        self.journal = None;
        File::create(&journal_path)?.sync_all()?;
        self.journal = Some(OpenOptions::new().append(true).open(&journal_path)?);
        Ok(())
    }
}

fn invalid(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
}

pub struct BankConfig {
    pub keys: Option<KeyPair>,
    /// URL of this bank's `/present/response`, sent to holders in requests.
    pub response_endpoint: Option<String>,
    pub store_dir: Option<PathBuf>,
    pub clock: Arc<dyn Clock>,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig { keys: None, response_endpoint: None, store_dir: None, clock: Arc::new(SystemClock) }
    }
}

pub struct BankService {
    did: Did,
    response_endpoint: Option<String>,
    registry: Arc<dyn RegistryHandle>,
    verifier: VerifierState,
    store: Mutex<FlagStore>,
    clock: Arc<dyn Clock>,
}

impl BankService {
    pub fn start(config: BankConfig, registry: Arc<dyn RegistryHandle>) -> Result<Self, BankError> {
        let keys = match (config.keys, &config.store_dir) {
            (Some(k), _) => k,
            (None, Some(dir)) => {
                std::fs::create_dir_all(dir)?;
                did::load_or_create_keys(&dir.join(KEYS_FILE))?
            }
            (None, None) => generate_did(None).2,
        };
        let (did, doc, keys) = did::did_from_keys(keys, None);
        if !with_view(&*registry, |v| did::resolve(&did, v).is_ok())? {
            registry.anchor(&DidAnchor::new(doc, &keys))?;
        }
        let store = match &config.store_dir {
            Some(dir) => FlagStore::open(dir)?,
            None => FlagStore::in_memory(),
        };
        Ok(BankService {
            did,
            response_endpoint: config.response_endpoint,
            registry,
            verifier: VerifierState::new(),
            store: Mutex::new(store),
            clock: config.clock,
        })
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn verifier_state(&self) -> &VerifierState {
        &self.verifier
    }

    /// Records (or updates) where a customer's holder agent listens.
    pub fn register_customer(&self, customer_ref: &str, holder_endpoint: Option<String>) -> Result<(), BankError> {
        let mut store = self.store.lock().expect("store poisoned");
        let rec = store.state.customers.entry(customer_ref.into()).or_default();
        if holder_endpoint.is_some() {
            rec.holder_endpoint = holder_endpoint;
        }
        store.persist(customer_ref)?;
        Ok(())
    }

    pub fn customer(&self, customer_ref: &str) -> Option<CustomerRecord> {
        self.store.lock().expect("store poisoned").record(customer_ref).cloned()
    }

    /// Builds a request for `customer_ref` and pushes it to their holder.
    pub fn open_exchange(
        &self,
        customer_ref: &str,
        params: RequestParams,
        transport: &dyn HolderTransport,
    ) -> Result<PresentationRequest, BankError> {
        let endpoint = self
            .customer(customer_ref)
            .ok_or_else(|| BankError::UnknownCustomer(customer_ref.into()))?
            .holder_endpoint
            .ok_or_else(|| BankError::EndpointUnreachable(format!("no holder endpoint for {customer_ref}")))?;
        let request = build_request(&self.did, self.response_endpoint.clone(), params, self.clock.now())?;
        self.verifier.register(request.clone(), Some(customer_ref.into()));
        transport.deliver(&endpoint, &request).map_err(|e| BankError::EndpointUnreachable(e.0))?;
        log::info!("opened exchange {} for {customer_ref}", request.request_id);
        Ok(request)
    }

    /// Protocol endpoint: verifies a holder's response and, when verified,
    /// stores the presentation and applies flags.
    pub fn receive(&self, response: &PresentationResponse) -> Result<VerificationOutcome, BankError> {
        let now = self.clock.now();
        let outcome = with_view(&*self.registry, |v| receive_response(response, &self.verifier, v, now))??;
        if let (VerificationResult::Verified { facts }, Some(customer), Some(p)) =
            (&outcome.result, &outcome.customer_ref, &response.presentation)
        {
            let mut store = self.store.lock().expect("store poisoned");
            if let Ok(rec) = store.record_mut(customer) {
                rec.presentations.push(StoredPresentation {
                    request_id: outcome.request_id.clone(),
                    received_at: now,
                    presentation: p.clone(),
                    facts: facts.clone(),
                });
                store.persist(customer)?;
                drop(store);
                self.apply_flags(&outcome, customer, now)?;
            }
        }
        Ok(outcome)
    }

    /// One ACTIVE flag per driver revealed as `true`. An existing live flag of
    /// the same category takes the new evidence and restarts its review clock.
    pub fn apply_flags(
        &self,
        outcome: &VerificationOutcome,
        customer_ref: &str,
        now: Timestamp,
    ) -> Result<Vec<CareFlag>, BankError> {
        let Some(facts) = outcome.facts() else { return Ok(Vec::new()) };
        let evidence = Evidence {
            request_id: Some(outcome.request_id.clone()),
            credential_id: Some(facts.credential_id.clone()),
            revealed: facts.revealed.clone(),
            proven: facts.proven.clone(),
            agent_note: None,
        };
        let categories: Vec<Category> = Category::ALL
            .into_iter()
            .filter(|c| facts.revealed.get(c.claim()).and_then(ClaimValue::as_bool) == Some(true))
            .collect();
        let mut store = self.store.lock().expect("store poisoned");
        let out = upsert_flags(store.record_mut(customer_ref)?, customer_ref, &categories, FlagSource::Presentation, &evidence, now);
        store.persist(customer_ref)?;
        Ok(out)
    }

    /// Phone-channel flag recorded by an agent.
    pub fn add_manual_flag(&self, customer_ref: &str, category: Category, note: &str) -> Result<CareFlag, BankError> {
        let now = self.clock.now();
        let evidence = Evidence {
            request_id: None,
            credential_id: None,
            revealed: BTreeMap::new(),
            proven: Vec::new(),
            agent_note: Some(note.into()),
        };
        let mut store = self.store.lock().expect("store poisoned");
        let rec = store.state.customers.entry(customer_ref.into()).or_default();
        let flag = upsert_flags(rec, customer_ref, &[category], FlagSource::AgentManual, &evidence, now).remove(0);
        store.persist(customer_ref)?;
        Ok(flag)
    }

    /// Marks a customer as in (or out of) arrears. Entering arrears starts
    /// 3-monthly monitoring on every ACTIVE flag.
    pub fn set_arrears(&self, customer_ref: &str, in_arrears: bool) -> Result<(), BankError> {
        let now = self.clock.now();
        let mut store = self.store.lock().expect("store poisoned");
        let rec = store.record_mut(customer_ref)?;
        rec.in_arrears = in_arrears;
        for f in rec.care_support.iter_mut().filter(|f| f.state == FlagState::Active) {
            f.arrears_monitoring = match (in_arrears, f.arrears_monitoring) {
                (true, Some(t)) => Some(t),
                (true, None) => Some(now.plus_months(ARREARS_INTERVAL_MONTHS)),
                (false, _) => None,
            };
        }
        store.persist(customer_ref)?;
        Ok(())
    }

    pub fn flags(&self, customer_ref: &str) -> Result<(Vec<CareFlag>, Vec<Tombstone>), BankError> {
        let store = self.store.lock().expect("store poisoned");
        let rec = store.record(customer_ref).ok_or_else(|| BankError::UnknownCustomer(customer_ref.into()))?;
        Ok((rec.care_support.clone(), rec.erased.clone()))
    }

    /// Items due at `now`, boundary inclusive.
    pub fn run_review(&self, now: Timestamp) -> Vec<ReviewItem> {
        let store = self.store.lock().expect("store poisoned");
        let mut out = Vec::new();
        for (customer, rec) in &store.state.customers {
            for f in rec.care_support.iter().filter(|f| f.state == FlagState::Active) {
                let item = |action, due_at| ReviewItem {
                    customer_ref: customer.clone(),
                    flag_id: f.flag_id.clone(),
                    category: f.category,
                    action,
                    due_at,
                };
                if f.review_due <= now {
                    out.push(item(ReviewAction::ReviewDue, f.review_due));
                }
                if let Some(m) = f.arrears_monitoring.filter(|m| *m <= now) {
                    out.push(item(ReviewAction::MonitorDue, m));
                }
            }
        }
        out
    }

    /// Acts on a review item. Renewal keeps the 12-month cadence from the
    /// previous due date; monitoring advances by one 3-month step.
    pub fn act(&self, customer_ref: &str, flag_id: &str, decision: ReviewDecision) -> Result<CareFlag, BankError> {
        let mut store = self.store.lock().expect("store poisoned");
        let rec = store.record_mut(customer_ref)?;
        let f = rec
            .care_support
            .iter_mut()
            .find(|f| f.flag_id == flag_id)
            .ok_or_else(|| BankError::UnknownFlag(flag_id.into()))?;
        if f.state != FlagState::Active {
            return Err(BankError::InvalidAction(format!("flag {flag_id} is not active")));
        }
        match decision {
            ReviewDecision::Renew => {
                f.cycle_start = f.review_due;
                f.review_due = f.cycle_start.plus_months(REVIEW_INTERVAL_MONTHS);
            }
            ReviewDecision::Resolve => {
                f.state = FlagState::Resolved;
                f.arrears_monitoring = None;
            }
            ReviewDecision::Monitored => {
                let m = f
                    .arrears_monitoring
                    .ok_or_else(|| BankError::InvalidAction(format!("flag {flag_id} is not monitored")))?;
                f.arrears_monitoring = Some(m.plus_months(ARREARS_INTERVAL_MONTHS));
            }
        }
        let flag = f.clone();
        store.persist(customer_ref)?;
        Ok(flag)
    }

    /// Erases everything held about a customer's vulnerability. Flags become
    /// tombstones; presentations, facts and exchange outcomes are dropped.
    pub fn forget_customer(&self, customer_ref: &str) -> Result<ErasureReport, BankError> {
        let now = self.clock.now();
        let mut store = self.store.lock().expect("store poisoned");
        let rec = store.record_mut(customer_ref)?;
        let report = ErasureReport { flags: rec.care_support.len(), presentations: rec.presentations.len() };
        for f in std::mem::take(&mut rec.care_support) {
            let tombstone = digest_parts(&[b"erased:", f.flag_id.as_bytes(), now.to_string().as_bytes()]);
            rec.erased.push(Tombstone { flag_id: f.flag_id, state: FlagState::Erased, tombstone, erased_at: now });
        }
        rec.presentations.clear();
        self.verifier.forget_customer(customer_ref);
        store.compact()?;
        log::info!("erased {} flag(s), {} presentation(s) for {customer_ref}", report.flags, report.presentations);
        Ok(report)
    }
}

fn upsert_flags(
    rec: &mut CustomerRecord,
    customer_ref: &str,
    categories: &[Category],
    source: FlagSource,
    evidence: &Evidence,
    now: Timestamp,
) -> Vec<CareFlag> {
    let monitoring = rec.in_arrears.then(|| now.plus_months(ARREARS_INTERVAL_MONTHS));
    let mut out = Vec::new();
    for &category in categories {
        let existing = rec.care_support.iter_mut().find(|f| f.category == category && f.state == FlagState::Active);
        let flag = match existing {
            Some(f) => {
                f.source = source;
                f.evidence = evidence.clone();
                f.cycle_start = now;
                f.review_due = now.plus_months(REVIEW_INTERVAL_MONTHS);
                f.arrears_monitoring = f.arrears_monitoring.or(monitoring);
                f.clone()
            }
            None => {
                let f = CareFlag {
                    flag_id: uuid::Uuid::new_v4().to_string(),
                    customer_ref: customer_ref.into(),
                    category,
                    source,
                    evidence: evidence.clone(),
                    created_at: now,
                    cycle_start: now,
                    review_due: now.plus_months(REVIEW_INTERVAL_MONTHS),
                    arrears_monitoring: monitoring,
                    state: FlagState::Active,
                };
                rec.care_support.push(f.clone());
                f
            }
        };
        out.push(flag);
    }
    out
}
