//! The NHS-like issuer: subject records in, credential pairs out.
//!
//! Records are loaded from CSV or JSON. The issuer keeps an append-only
//! journal of issued envelopes for audit; salts and ladder seeds go to the
//! holder in the issuance response and nowhere else.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{to_canonical_bytes, Nonce, Signature64};
use crate::credential::{
    self, issue, verify_full, ClaimValue, CredentialError, FailReason, HolderSecrets, Issuance, SchemaDefinition,
    StatusRef, StatusSlots, Validity, VerifiableCredential, DRIVER_CLAIMS,
};
use crate::did::{self, generate_did, verify_signature, Did, DidAnchor, KeyPair};
use crate::registry::{with_view, RegistryError, RegistryHandle, StatusList, StatusUpdate};
use crate::time::{Clock, SystemClock, Timestamp};

/// How long an issuance challenge stays redeemable.
pub const CHALLENGE_TTL_SECS: i64 = 5 * 60;
const MAX_OPEN_CHALLENGES: usize = 10_000;
const JOURNAL_FILE: &str = "journal.jsonl";
const KEYS_FILE: &str = "issuer-keys.json";

/// Expected mod-11 check digit for the first nine digits of an NHS number, or
/// `None` when the digits cannot form a valid number.
pub fn nhs_check_digit(first_nine: &[u8; 9]) -> Option<u8> {
    let sum: u32 = first_nine.iter().zip((2..=10).rev()).map(|(&d, w)| u32::from(d) * w).sum();
    match 11 - sum % 11 {
        11 => Some(0),
        10 => None,
        c => Some(c as u8),
    }
}

pub fn nhs_number_valid(s: &str) -> bool {
    let digits: Vec<u8> = s.bytes().map(|b| b.wrapping_sub(b'0')).collect();
    if digits.len() != 10 || digits.iter().any(|&d| d > 9) {
        return false;
    }
    let first: [u8; 9] = digits[..9].try_into().expect("ten digits");
    nhs_check_digit(&first) == Some(digits[9])
}

/// One row of the issuer's subject records. The subject DID is bound in
/// person before the record is loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub nhs_number: String,
    pub date_of_birth: NaiveDate,
    pub assessment_date: NaiveDate,
    pub driver_health: bool,
    pub driver_life_events: bool,
    pub driver_low_resilience: bool,
    pub driver_low_capability: bool,
    pub work_incapacity_months: i64,
    #[serde(default)]
    pub detail: String,
    pub subject_did: Did,
}

impl SubjectRecord {
    fn drivers(&self) -> [bool; 4] {
        [self.driver_health, self.driver_life_events, self.driver_low_resilience, self.driver_low_capability]
    }

    fn check(&self) -> Result<(), RecordProblem> {
        if !nhs_number_valid(&self.nhs_number) {
            return Err(RecordProblem::Checksum);
        }
        if self.assessment_date < self.date_of_birth {
            return Err(RecordProblem::Invalid("assessment_date is before date_of_birth".into()));
        }
        if !(0..=120).contains(&self.work_incapacity_months) {
            return Err(RecordProblem::Invalid("work_incapacity_months must be within 0..=120".into()));
        }
        Ok(())
    }

    /// Claim values for the full credential.
    pub fn full_values(&self) -> BTreeMap<String, ClaimValue> {
        let mut v = self.fairness_values();
        v.insert("nhs_number".into(), ClaimValue::Text(self.nhs_number.clone()));
        v.insert("date_of_birth".into(), ClaimValue::Date(self.date_of_birth));
        v.insert("birth_year".into(), ClaimValue::Integer(i64::from(self.date_of_birth.year())));
        v.insert("assessment_date".into(), ClaimValue::Date(self.assessment_date));
        if !self.detail.is_empty() {
            v.insert("detail".into(), ClaimValue::Text(self.detail.clone()));
        }
        v
    }

    /// Claim values for the Fairness-for-All credential: drivers and
    /// incapacity only.
    pub fn fairness_values(&self) -> BTreeMap<String, ClaimValue> {
        let mut v: BTreeMap<String, ClaimValue> =
            DRIVER_CLAIMS.iter().zip(self.drivers()).map(|(n, b)| (n.to_string(), ClaimValue::Boolean(b))).collect();
        v.insert("work_incapacity_months".into(), ClaimValue::Integer(self.work_incapacity_months));
        v
    }
}

enum RecordProblem {
    Checksum,
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LineError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: NHS number fails the mod-11 check")]
    Checksum { line: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

impl LineError {
    pub fn line(&self) -> usize {
        match self {
            LineError::Parse { line, .. } | LineError::Checksum { line } | LineError::Invalid { line, .. } => *line,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read records: {0}")]
    Io(#[from] std::io::Error),
    #[error("{} rejected record(s); first: {}", .0.len(), .0[0])]
    Rejected(Vec<LineError>),
}

fn classify(line: usize, record: SubjectRecord, out: &mut Vec<SubjectRecord>, errors: &mut Vec<LineError>) {
    match record.check() {
        Ok(()) => out.push(record),
        Err(RecordProblem::Checksum) => errors.push(LineError::Checksum { line }),
        Err(RecordProblem::Invalid(message)) => errors.push(LineError::Invalid { line, message }),
    }
}

/// Parses CSV records. Columns are the [`SubjectRecord`] field names; the
/// header is line 1, so the first record is line 2.
pub fn parse_csv(text: &str) -> Result<Vec<SubjectRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_rejection(1, e))?.clone();
    let (mut out, mut errors) = (Vec::new(), Vec::new());
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                errors.push(LineError::Parse { line, message: e.to_string() });
                continue;
            }
        };
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        match row.deserialize::<SubjectRecord>(Some(&headers)) {
            Ok(record) => classify(line, record, &mut out, &mut errors),
            Err(e) => errors.push(LineError::Parse { line, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Rejected(errors))
    }
}

fn csv_rejection(line: usize, e: csv::Error) -> IngestError {
    IngestError::Rejected(vec![LineError::Parse { line, message: e.to_string() }])
}

/// Parses JSON Lines records, one object per line. Blank lines are skipped.
pub fn parse_json_lines(text: &str) -> Result<Vec<SubjectRecord>, IngestError> {
    let (mut out, mut errors) = (Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SubjectRecord>(raw) {
            Ok(record) => classify(line, record, &mut out, &mut errors),
            Err(e) => errors.push(LineError::Parse { line, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Rejected(errors))
    }
}

/// Loads a record file, choosing the format by extension (`.csv`, or
/// `.json`/`.jsonl` for JSON Lines).
pub fn ingest(path: &Path) -> Result<Vec<SubjectRecord>, IngestError> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("jsonl") => parse_json_lines(&text),
        _ => parse_csv(&text),
    }
}

#[derive(Debug, Error)]
pub enum IssuerError {
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("no record for this subject")]
    UnknownSubject,
    #[error("credential {0} not found")]
    NotFound(String),
    #[error("issued credential failed its own check: {0}")]
    SelfCheck(FailReason),
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
}

/// A credential together with the secrets only its holder may keep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Delivered {
    pub credential: VerifiableCredential,
    pub secrets: HolderSecrets,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssuedPair {
    pub full: Delivered,
    pub fairness: Delivered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueChallenge {
    pub issuer: Did,
    pub challenge: Nonce,
    pub expires_at: Timestamp,
}

/// Holder-initiated issuance: the subject proves control of its DID by
/// signing the challenge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRequest {
    pub subject: Did,
    pub nhs_number: String,
    pub challenge: Nonce,
    pub signature: Signature64,
}

#[derive(Serialize)]
struct ChallengeBody<'a> {
    challenge: &'a Nonce,
    issuer: &'a Did,
    nhs_number: &'a str,
    subject: &'a Did,
}

impl IssueRequest {
    pub fn signing_bytes(issuer: &Did, subject: &Did, nhs_number: &str, challenge: &Nonce) -> Vec<u8> {
        to_canonical_bytes(&ChallengeBody { challenge, issuer, nhs_number, subject }).expect("always encodable")
    }

    pub fn sign(issuer: &Did, subject: &Did, nhs_number: &str, challenge: Nonce, subject_keys: &KeyPair) -> Self {
        let signature = subject_keys.sign(&Self::signing_bytes(issuer, subject, nhs_number, &challenge));
        IssueRequest { subject: subject.clone(), nhs_number: nhs_number.into(), challenge, signature }
    }
}

/// Administrative view of an issued credential. Carries no claim data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedSummary {
    pub credential_id: String,
    pub schema: String,
    pub subject: Did,
    pub status_ref: StatusRef,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
}

impl From<&VerifiableCredential> for IssuedSummary {
    fn from(vc: &VerifiableCredential) -> Self {
        IssuedSummary {
            credential_id: vc.credential_id.clone(),
            schema: vc.schema.clone(),
            subject: vc.subject.clone(),
            status_ref: vc.status_ref.clone(),
            issued_at: vc.issued_at,
            expires_at: vc.expires_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationAck {
    pub credential_id: String,
    pub status_ref: StatusRef,
    pub list_version: u64,
}

#[derive(Default)]
struct IssuerState {
    slots: StatusSlots,
    issued: BTreeMap<String, IssuedSummary>,
    challenges: HashMap<Nonce, Timestamp>,
}

pub struct IssuerConfig {
    pub keys: Option<KeyPair>,
    pub service_endpoint: Option<String>,
    /// Directory for the journal and keys; `None` keeps everything in memory.
    pub state_dir: Option<PathBuf>,
    pub validity: Validity,
    pub clock: Arc<dyn Clock>,
}

impl Default for IssuerConfig {
    fn default() -> Self {
        IssuerConfig {
            keys: None,
            service_endpoint: None,
            state_dir: None,
            validity: Validity::default(),
            clock: Arc::new(SystemClock),
        }
    }
}

pub struct IssuerService {
    did: Did,
    keys: KeyPair,
    registry: Arc<dyn RegistryHandle>,
    records: Mutex<HashMap<String, SubjectRecord>>,
    state: Mutex<IssuerState>,
    journal: Option<Mutex<File>>,
    journal_path: Option<PathBuf>,
    validity: Validity,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for IssuerService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IssuerService").field("did", &self.did).finish_non_exhaustive()
    }
}

impl IssuerService {
    /// Starts an issuer, anchoring its DID when the registry does not know it
    /// yet and replaying the journal when a state directory is given.
    pub fn start(config: IssuerConfig, registry: Arc<dyn RegistryHandle>) -> Result<Self, IssuerError> {
        let keys = match (config.keys, &config.state_dir) {
            (Some(k), _) => k,
            (None, Some(dir)) => {
                std::fs::create_dir_all(dir)?;
                did::load_or_create_keys(&dir.join(KEYS_FILE))?
            }
            (None, None) => generate_did(None).2,
        };
        let (did, doc, keys) = did::did_from_keys(keys, config.service_endpoint);
        let known = with_view(&*registry, |v| did::resolve(&did, v).is_ok())?;
        if !known {
            registry.anchor(&DidAnchor::new(doc, &keys))?;
        }

        let mut state = IssuerState::default();
        let (journal, journal_path) = match &config.state_dir {
            Some(dir) => {
                let path = dir.join(JOURNAL_FILE);
                for vc in read_journal(&path)? {
                    state.slots.take(vc.status_ref.clone())?;
                    state.issued.insert(vc.credential_id.clone(), IssuedSummary::from(&vc));
                }
                let file = OpenOptions::new().create(true).append(true).open(&path)?;
                (Some(Mutex::new(file)), Some(path))
            }
            None => (None, None),
        };

        Ok(IssuerService {
            did,
            keys,
            registry,
            records: Mutex::new(HashMap::new()),
            state: Mutex::new(state),
            journal,
            journal_path,
            validity: config.validity,
            clock: config.clock,
        })
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal_path.as_deref()
    }

    /// Adds (or replaces) records, keyed by NHS number.
    pub fn load_records(&self, records: impl IntoIterator<Item = SubjectRecord>) -> usize {
        let mut map = self.records.lock().expect("records poisoned");
        let mut n = 0;
        for r in records {
            map.insert(r.nhs_number.clone(), r);
            n += 1;
        }
        n
    }

    pub fn challenge(&self) -> IssueChallenge {
        let now = self.clock.now();
        let mut state = self.state.lock().expect("issuer state poisoned");
        state.challenges.retain(|_, exp| *exp > now);
        if state.challenges.len() >= MAX_OPEN_CHALLENGES {
            // Oldest first; challenges are cheap to re-request.
            if let Some(oldest) = state.challenges.iter().min_by_key(|(_, e)| **e).map(|(n, _)| *n) {
                state.challenges.remove(&oldest);
            }
        }
        let challenge = Nonce::random();
        let expires_at = now.plus_seconds(CHALLENGE_TTL_SECS);
        state.challenges.insert(challenge, expires_at);
        IssueChallenge { issuer: self.did.clone(), challenge, expires_at }
    }

    /// Redeems a signed challenge for the subject's credential pair.
    pub fn issue_for(&self, req: &IssueRequest) -> Result<IssuedPair, IssuerError> {
        let now = self.clock.now();
        {
            let mut state = self.state.lock().expect("issuer state poisoned");
            match state.challenges.remove(&req.challenge) {
                Some(exp) if exp > now => {}
                _ => return Err(IssuerError::Unauthorized("unknown or expired challenge".into())),
            }
        }
        let doc = with_view(&*self.registry, |v| did::resolve(&req.subject, v))?
            .map_err(|e| IssuerError::Unauthorized(format!("subject: {e}")))?;
        let msg = IssueRequest::signing_bytes(&self.did, &req.subject, &req.nhs_number, &req.challenge);
        if !verify_signature(&doc.verification_key, &msg, &req.signature) {
            return Err(IssuerError::Unauthorized("challenge signature invalid".into()));
        }
        let record = self
            .records
            .lock()
            .expect("records poisoned")
            .get(&req.nhs_number)
            .cloned()
            .ok_or(IssuerError::UnknownSubject)?;
        if record.subject_did != req.subject {
            // Same answer as a missing record; do not confirm which numbers exist.
            return Err(IssuerError::UnknownSubject);
        }
        self.issue_pair(&record)
    }

    /// Issues the full and the Fairness-for-All credential from one record.
    /// Either both are recorded and returned or neither is.
    pub fn issue_pair(&self, record: &SubjectRecord) -> Result<IssuedPair, IssuerError> {
        if let Err(p) = record.check() {
            return Err(CredentialError::SchemaViolation(match p {
                RecordProblem::Checksum => "NHS number fails the mod-11 check".into(),
                RecordProblem::Invalid(m) => m,
            })
            .into());
        }
        let subject_known = with_view(&*self.registry, |v| did::resolve(&record.subject_did, v).is_ok())?;
        if !subject_known {
            return Err(IssuerError::Unauthorized(format!("subject {} is not resolvable", record.subject_did)));
        }

        let now = self.clock.now();
        let mut state = self.state.lock().expect("issuer state poisoned");
        let mut slots = state.slots.clone();
        let mut opened = Vec::new();
        let mut one = |schema: SchemaDefinition, values: BTreeMap<String, ClaimValue>, slots: &mut StatusSlots| {
            let (status, new_list) = slots.next_free();
            if new_list {
                opened.push(status.list_id.clone());
            }
            issue(
                Issuance {
                    schema: &schema,
                    issuer: &self.did,
                    issuer_keys: &self.keys,
                    subject: &record.subject_did,
                    values: &values,
                    issued_at: now,
                    validity: self.validity,
                    status,
                },
                slots,
            )
        };
        let (full_vc, full_secrets) = one(SchemaDefinition::vulnerability_status(), record.full_values(), &mut slots)?;
        let (ffa_vc, ffa_secrets) = one(SchemaDefinition::fairness_for_all(), record.fairness_values(), &mut slots)?;

        for list_id in opened {
            // A list may already be public from an earlier attempt that failed later on.
            if with_view(&*self.registry, |v| v.status_list(&self.did, &list_id).is_some())? {
                continue;
            }
            let fresh = StatusList::fresh(self.did.clone(), list_id);
            self.registry.publish_status(&StatusUpdate::new(fresh, &self.keys))?;
        }
        for vc in [&full_vc, &ffa_vc] {
            with_view(&*self.registry, |v| verify_full(vc, v, now))?.map_err(IssuerError::SelfCheck)?;
        }

        if let Some(journal) = &self.journal {
            let mut buf = Vec::new();
            for vc in [&full_vc, &ffa_vc] {
                buf.extend(to_canonical_bytes(vc).expect("credentials encode"));
                buf.push(b'\n');
            }
            let mut file = journal.lock().expect("journal poisoned");
            file.write_all(&buf)?;
            file.sync_data()?;
        }
        state.slots = slots;
        for vc in [&full_vc, &ffa_vc] {
            state.issued.insert(vc.credential_id.clone(), IssuedSummary::from(vc));
        }
        log::info!("issued {} and {} to {}", full_vc.credential_id, ffa_vc.credential_id, record.subject_did);

        Ok(IssuedPair {
            full: Delivered { credential: full_vc, secrets: full_secrets },
            fairness: Delivered { credential: ffa_vc, secrets: ffa_secrets },
        })
    }

    /// Revokes a credential this issuer issued. Repeating it succeeds.
    pub fn revoke_credential(&self, credential_id: &str) -> Result<RevocationAck, IssuerError> {
        let slot = self
            .state
            .lock()
            .expect("issuer state poisoned")
            .issued
            .get(credential_id)
            .map(|s| s.status_ref.clone())
            .ok_or_else(|| IssuerError::NotFound(credential_id.into()))?;
        let list = credential::revoke(&self.keys, &self.did, &slot, &*self.registry)?;
        log::info!("revoked {credential_id} ({slot})");
        Ok(RevocationAck { credential_id: credential_id.into(), status_ref: slot, list_version: list.version })
    }

    pub fn issued(&self) -> Vec<IssuedSummary> {
        self.state.lock().expect("issuer state poisoned").issued.values().cloned().collect()
    }
}

/// Reads the issuance journal. A torn final line (crash mid-append) is
/// ignored; any other unreadable line is an error.
pub fn read_journal(path: &Path) -> Result<Vec<VerifiableCredential>, std::io::Error> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(vc) => out.push(vc),
            Err(_) if i + 1 == lines.len() => log::warn!("ignoring torn journal tail"),
            Err(e) => return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}
