//! The holder agent: an encrypted credential store with a consent inbox.
//!
//! The wallet file is a small JSON header (format, KDF parameters, cipher,
//! nonce) followed by the ciphertext of the wallet contents. The key comes
//! from the passphrase through Argon2id; the header is authenticated as
//! associated data, so parameters cannot be swapped without detection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use argon2::{Algorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key};
use data_encoding::BASE64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::credential::{verify_full, ClaimValue, FailReason, HolderSecrets, SchemaDefinition, VerifiableCredential};
use crate::did::{self, generate_did, Did, DidAnchor, KeyPair};
use crate::exchange::{
    handle_request, ConsentDecision, Decision, ExchangeError, HolderError, ItemMode, Outcome, PresentationRequest,
    PresentationResponse, RequestItem, SharedSummary, TransportError, VerifierTransport,
};
use crate::issuer::{IssueChallenge, IssueRequest, IssuedPair};
use crate::registry::{with_view, RegistryHandle};
use crate::time::Timestamp;

const FORMAT: &str = "vulncred-wallet";
const FORMAT_VERSION: u32 = 1;
const CIPHER: &str = "chacha20poly1305";
/// Pending requests kept at most; the oldest are auto-denied beyond this.
const MAX_INBOX: usize = 256;

#[derive(Debug, Error)]
pub enum WalletError {
    #[error("secrets do not reproduce the credential's claims root")]
    RootMismatch,
    #[error("wallet cannot be opened with this passphrase")]
    WrongPassphrase,
    #[error("wallet file is corrupt: {0}")]
    Corrupt(String),
    #[error("wallet already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("request {0} already in inbox")]
    DuplicateRequest(String),
    #[error("request {0} already decided")]
    AlreadyDecided(String),
    #[error("request {0} expired; a denial was sent")]
    RequestExpired(String),
    #[error("{0}")]
    InvalidConsent(String),
    #[error(transparent)]
    InvalidRequest(#[from] ExchangeError),
    #[error("could not deliver response: {0}")]
    Delivery(#[from] TransportError),
    #[error("registry unreachable: {0}")]
    RegistryUnreachable(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Argon2id parameters, persisted in the wallet header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams { m_cost_kib: 19 * 1024, t_cost: 2, p_cost: 1 }
    }
}

impl KdfParams {
    /// Cheap parameters for tests and throwaway demo wallets.
    pub fn insecure_fast() -> Self {
        KdfParams { m_cost_kib: 64, t_cost: 1, p_cost: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct KdfHeader {
    algorithm: String,
    #[serde(flatten)]
    params: KdfParams,
    #[serde(with = "hex::serde")]
    salt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kdf: KdfHeader,
    cipher: String,
}

#[derive(Serialize, Deserialize)]
struct WalletFile {
    #[serde(flatten)]
    header: Header,
    #[serde(with = "hex::serde")]
    nonce: Vec<u8>,
    ciphertext: String,
}

fn derive_key(passphrase: &str, kdf: &KdfHeader) -> Result<[u8; 32], WalletError> {
    if kdf.algorithm != "argon2id" {
        return Err(WalletError::Corrupt(format!("unsupported kdf {}", kdf.algorithm)));
    }
    let p = kdf.params;
    let params =
        Params::new(p.m_cost_kib, p.t_cost, p.p_cost, Some(32)).map_err(|e| WalletError::Corrupt(e.to_string()))?;
    let mut key = [0u8; 32];
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase.as_bytes(), &kdf.salt, &mut key)
        .map_err(|e| WalletError::Corrupt(e.to_string()))?;
    Ok(key)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Valid,
    Invalid { reason: FailReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedStatus {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub checked_at: Timestamp,
    /// Set when a later refresh could not reach the registry.
    pub stale_since: Option<Timestamp>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalletEntry {
    pub credential: VerifiableCredential,
    pub secrets: HolderSecrets,
    pub label: String,
    pub received_at: Timestamp,
    pub last_status: Option<CachedStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InboxState {
    Pending,
    Presented,
    Denied,
    AutoDenied,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InboxItem {
    pub request: PresentationRequest,
    pub received_at: Timestamp,
    pub state: InboxState,
    pub decided_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: Timestamp,
    pub request_id: String,
    pub verifier: Did,
    pub purpose: String,
    pub outcome: Outcome,
    pub shared: Option<SharedSummary>,
    pub local_reason: Option<String>,
    pub delivered: bool,
}

#[derive(Serialize, Deserialize)]
struct WalletData {
    holder_keys: KeyPair,
    entries: Vec<WalletEntry>,
    inbox: Vec<InboxItem>,
    audit: Vec<AuditEntry>,
}

/// Wallet entry as shown to the UI: claim values, never salts or seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryView {
    pub credential_id: String,
    pub label: String,
    pub schema: String,
    pub issuer: Did,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub intended_audience: Option<String>,
    pub received_at: Timestamp,
    pub claims: BTreeMap<String, ClaimValue>,
    pub last_status: Option<CachedStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub index: usize,
    #[serde(flatten)]
    pub item: RequestItem,
    /// Disclosure group the claim belongs to; the UI toggles members together.
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboxView {
    pub request_id: String,
    pub verifier: Did,
    pub purpose: String,
    pub scheme: Option<String>,
    pub items: Vec<ItemView>,
    pub received_at: Timestamp,
    pub expires_at: Timestamp,
    pub state: InboxState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecideOutcome {
    pub response: PresentationResponse,
    pub shared: Option<SharedSummary>,
    pub local_reason: Option<String>,
    #[serde(skip)]
    pub error: Option<HolderError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreReport {
    pub credential_id: String,
    pub replaced: bool,
}

struct Sealed {
    path: PathBuf,
    header: Header,
    key: [u8; 32],
}

pub struct Wallet {
    data: Mutex<WalletData>,
    sealed: Option<Sealed>,
}

impl std::fmt::Debug for Wallet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Wallet").field("holder", &self.holder_did()).finish_non_exhaustive()
    }
}

impl Wallet {
    /// An unpersisted wallet with fresh holder keys.
    pub fn in_memory() -> Self {
        Wallet { data: Mutex::new(WalletData::fresh()), sealed: None }
    }

    pub fn create(path: &Path, passphrase: &str, params: KdfParams) -> Result<Self, WalletError> {
        if path.exists() {
            return Err(WalletError::AlreadyExists(path.to_path_buf()));
        }
        let kdf = KdfHeader { algorithm: "argon2id".into(), params, salt: rand::random::<[u8; 16]>().to_vec() };
        let key = derive_key(passphrase, &kdf)?;
        let header = Header { format: FORMAT.into(), version: FORMAT_VERSION, kdf, cipher: CIPHER.into() };
        let wallet = Wallet {
            data: Mutex::new(WalletData::fresh()),
            sealed: Some(Sealed { path: path.to_path_buf(), header, key }),
        };
        wallet.save(&wallet.data.lock().expect("wallet poisoned"))?;
        Ok(wallet)
    }

    pub fn open(path: &Path, passphrase: &str) -> Result<Self, WalletError> {
        let raw = std::fs::read(path)?;
        let file: WalletFile = serde_json::from_slice(&raw).map_err(|e| WalletError::Corrupt(e.to_string()))?;
        if file.header.format != FORMAT || file.header.version != FORMAT_VERSION || file.header.cipher != CIPHER {
            return Err(WalletError::Corrupt("unsupported wallet format".into()));
        }
        let key = derive_key(passphrase, &file.header.kdf)?;
        let ciphertext = BASE64.decode(file.ciphertext.as_bytes()).map_err(|e| WalletError::Corrupt(e.to_string()))?;
        if file.nonce.len() != 12 {
            return Err(WalletError::Corrupt("bad nonce".into()));
        }
        let aad = to_canonical_bytes(&file.header).expect("header encodes");
        let plain = ChaCha20Poly1305::new(Key::from_slice(&key))
            .decrypt(chacha20poly1305::Nonce::from_slice(&file.nonce), Payload { msg: &ciphertext, aad: &aad })
            .map_err(|_| WalletError::WrongPassphrase)?;
        let data: WalletData = serde_json::from_slice(&plain).map_err(|e| WalletError::Corrupt(e.to_string()))?;
        Ok(Wallet { data: Mutex::new(data), sealed: Some(Sealed { path: path.to_path_buf(), header: file.header, key }) })
    }

    pub fn open_or_create(path: &Path, passphrase: &str, params: KdfParams) -> Result<Self, WalletError> {
        if path.exists() {
            Self::open(path, passphrase)
        } else {
            Self::create(path, passphrase, params)
        }
    }

    fn save(&self, data: &WalletData) -> Result<(), WalletError> {
        let Some(sealed) = &self.sealed else { return Ok(()) };
        let plain = serde_json::to_vec(data).expect("wallet data serializes");
        let nonce: [u8; 12] = rand::random();
        let aad = to_canonical_bytes(&sealed.header).expect("header encodes");
        let ciphertext = ChaCha20Poly1305::new(Key::from_slice(&sealed.key))
            .encrypt(chacha20poly1305::Nonce::from_slice(&nonce), Payload { msg: &plain, aad: &aad })
            .map_err(|_| WalletError::Corrupt("encryption failed".into()))?;
        let file = WalletFile { header: sealed.header.clone(), nonce: nonce.to_vec(), ciphertext: BASE64.encode(&ciphertext) };
        let tmp = sealed.path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&file).expect("file serializes"))?;
        std::fs::rename(&tmp, &sealed.path)?;
        Ok(())
    }

    fn mutate<R>(&self, f: impl FnOnce(&mut WalletData) -> Result<R, WalletError>) -> Result<R, WalletError> {
        let mut data = self.data.lock().expect("wallet poisoned");
        let out = f(&mut data)?;
        self.save(&data)?;
        Ok(out)
    }

    pub fn holder_did(&self) -> Did {
        let data = self.data.lock().expect("wallet poisoned");
        did::did_from_keys(data.holder_keys.clone(), None).0
    }

    /// Anchors the holder DID if the registry does not know it yet.
    pub fn ensure_anchored(&self, registry: &dyn RegistryHandle) -> Result<Did, WalletError> {
        let keys = self.data.lock().expect("wallet poisoned").holder_keys.clone();
        let (did, doc, keys) = did::did_from_keys(keys, None);
        let known = with_view(registry, |v| did::resolve(&did, v).is_ok())
            .map_err(|e| WalletError::RegistryUnreachable(e.to_string()))?;
        if !known {
            registry.anchor(&DidAnchor::new(doc, &keys)).map_err(|e| WalletError::RegistryUnreachable(e.to_string()))?;
        }
        Ok(did)
    }

    /// Anchors a new DID version naming `endpoint` as the holder's protocol
    /// endpoint, unless the current version already does.
    pub fn publish_endpoint(&self, registry: &dyn RegistryHandle, endpoint: &str) -> Result<Did, WalletError> {
        let did = self.ensure_anchored(registry)?;
        let keys = self.data.lock().expect("wallet poisoned").holder_keys.clone();
        let current = with_view(registry, |v| did::resolve(&did, v))
            .map_err(|e| WalletError::RegistryUnreachable(e.to_string()))?
            .map_err(|e| WalletError::RegistryUnreachable(e.to_string()))?;
        if current.service_endpoint.as_deref() != Some(endpoint) {
            let next = current.next_version(keys.public, Some(endpoint.into()));
            registry.anchor(&DidAnchor::new(next, &keys)).map_err(|e| WalletError::RegistryUnreachable(e.to_string()))?;
        }
        Ok(did)
    }

    /// Signs an issuer's challenge so the issuer can bind the pair to this DID.
    pub fn sign_issue_request(&self, challenge: &IssueChallenge, nhs_number: &str) -> IssueRequest {
        let data = self.data.lock().expect("wallet poisoned");
        let holder = did::did_from_keys(data.holder_keys.clone(), None).0;
        IssueRequest::sign(&challenge.issuer, &holder, nhs_number, challenge.challenge, &data.holder_keys)
    }

    /// Stores a credential after checking the secrets against it. A credential
    /// with the same id replaces the stored one.
    pub fn store_credential(
        &self,
        credential: VerifiableCredential,
        secrets: HolderSecrets,
        label: &str,
        now: Timestamp,
    ) -> Result<StoreReport, WalletError> {
        if !secrets.matches(&credential) {
            return Err(WalletError::RootMismatch);
        }
        self.mutate(|data| {
            let id = credential.credential_id.clone();
            let before = data.entries.len();
            data.entries.retain(|e| e.credential.credential_id != id);
            let replaced = data.entries.len() != before;
            if replaced {
                log::warn!("replacing stored credential {id}");
            }
            data.entries.push(WalletEntry { credential, secrets, label: label.into(), received_at: now, last_status: None });
            Ok(StoreReport { credential_id: id, replaced })
        })
    }

    pub fn store_pair(&self, pair: IssuedPair, now: Timestamp) -> Result<Vec<StoreReport>, WalletError> {
        Ok(vec![
            self.store_credential(pair.full.credential, pair.full.secrets, "Vulnerability status", now)?,
            self.store_credential(pair.fairness.credential, pair.fairness.secrets, "Fairness for All", now)?,
        ])
    }

    pub fn wallet_view(&self) -> Vec<EntryView> {
        let data = self.data.lock().expect("wallet poisoned");
        data.entries
            .iter()
            .map(|e| EntryView {
                credential_id: e.credential.credential_id.clone(),
                label: e.label.clone(),
                schema: e.credential.schema.clone(),
                issuer: e.credential.issuer.clone(),
                issued_at: e.credential.issued_at,
                expires_at: e.credential.expires_at,
                intended_audience: e.credential.intended_audience.clone(),
                received_at: e.received_at,
                claims: e.secrets.claims.iter().map(|c| (c.name.clone(), c.value.clone())).collect(),
                last_status: e.last_status.clone(),
            })
            .collect()
    }

    /// Protocol endpoint: queue a verifier's request for the holder's decision.
    pub fn receive_request(&self, request: PresentationRequest, now: Timestamp) -> Result<(), WalletError> {
        request.validate_shape()?;
        self.mutate(|data| {
            if data.inbox.iter().any(|i| i.request.request_id == request.request_id) {
                return Err(WalletError::DuplicateRequest(request.request_id.clone()));
            }
            let pending = data.inbox.iter().filter(|i| i.state == InboxState::Pending).count();
            if pending >= MAX_INBOX {
                return Err(WalletError::InvalidConsent("inbox full".into()));
            }
            data.inbox.push(InboxItem { request, received_at: now, state: InboxState::Pending, decided_at: None });
            Ok(())
        })
    }

    pub fn inbox_list(&self) -> Vec<InboxView> {
        let data = self.data.lock().expect("wallet poisoned");
        data.inbox.iter().map(inbox_view).collect()
    }

    /// Auto-denies every pending request whose expiry has passed.
    pub fn expire_pending(&self, now: Timestamp, transport: &dyn VerifierTransport) -> Result<usize, WalletError> {
        self.mutate(|data| {
            let expired: Vec<usize> = (0..data.inbox.len())
                .filter(|&i| data.inbox[i].state == InboxState::Pending && now >= data.inbox[i].request.expires_at)
                .collect();
            for &i in &expired {
                data.inbox[i].state = InboxState::AutoDenied;
                data.inbox[i].decided_at = Some(now);
                let req = data.inbox[i].request.clone();
                deny_and_audit(data, &req, now, "request expired", transport);
            }
            Ok(expired.len())
        })
    }

    /// Applies the holder's decision and dispatches the response.
    pub fn inbox_decide(
        &self,
        decision: ConsentDecision,
        transport: &dyn VerifierTransport,
    ) -> Result<DecideOutcome, WalletError> {
        let now = decision.decided_at;
        let mut data = self.data.lock().expect("wallet poisoned");
        let idx = data
            .inbox
            .iter()
            .position(|i| i.request.request_id == decision.request_id)
            .ok_or_else(|| WalletError::UnknownRequest(decision.request_id.clone()))?;
        if data.inbox[idx].state != InboxState::Pending {
            return Err(WalletError::AlreadyDecided(decision.request_id.clone()));
        }
        let req = data.inbox[idx].request.clone();
        if now >= req.expires_at {
            data.inbox[idx].state = InboxState::AutoDenied;
            data.inbox[idx].decided_at = Some(now);
            deny_and_audit(&mut data, &req, now, "request expired", transport);
            self.save(&data)?;
            return Err(WalletError::RequestExpired(req.request_id));
        }
        if let Decision::Partial(granted) = &decision.decision {
            if req.is_scheme() {
                return Err(WalletError::InvalidConsent("this request can only be accepted or declined".into()));
            }
            if let Some(bad) = granted.iter().find(|&&i| i >= req.items.len()) {
                return Err(WalletError::InvalidConsent(format!("request has no item {bad}")));
            }
        }

        let handled = {
            let held: Vec<_> = data.entries.iter().map(|e| (&e.credential, &e.secrets)).collect();
            handle_request(&req, &held, &decision, &data.holder_keys, now)
        };
        let delivered = dispatch(&req, &handled.response, transport);
        let (shared, error) = match handled.local {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e)),
        };
        let local_reason = error.as_ref().map(ToString::to_string);
        data.inbox[idx].state = match handled.response.outcome {
            Outcome::Presented => InboxState::Presented,
            Outcome::Denied => InboxState::Denied,
        };
        data.inbox[idx].decided_at = Some(now);
        data.audit.push(AuditEntry {
            at: now,
            request_id: req.request_id.clone(),
            verifier: req.verifier.clone(),
            purpose: req.purpose.clone(),
            outcome: handled.response.outcome,
            shared: shared.clone(),
            local_reason: local_reason.clone(),
            delivered: delivered.is_ok(),
        });
        self.save(&data)?;
        delivered?;
        Ok(DecideOutcome { response: handled.response, shared, local_reason, error })
    }

    /// Re-checks every stored credential against the registry. When the
    /// registry cannot be read, cached verdicts are kept and marked stale.
    pub fn status_refresh(&self, registry: &dyn RegistryHandle, now: Timestamp) -> Result<Vec<EntryView>, WalletError> {
        let mut data = self.data.lock().expect("wallet poisoned");
        let creds: Vec<VerifiableCredential> = data.entries.iter().map(|e| e.credential.clone()).collect();
        let verdicts = with_view(registry, |view| {
            creds.iter().map(|vc| verify_full(vc, view, now)).collect::<Vec<_>>()
        });
        match verdicts {
            Ok(verdicts) => {
                for (entry, v) in data.entries.iter_mut().zip(verdicts) {
                    let verdict = match v {
                        Ok(()) => Verdict::Valid,
                        Err(reason) => Verdict::Invalid { reason },
                    };
                    entry.last_status = Some(CachedStatus { verdict, checked_at: now, stale_since: None });
                }
                self.save(&data)?;
                drop(data);
                Ok(self.wallet_view())
            }
            Err(e) => {
                for entry in data.entries.iter_mut() {
                    if let Some(s) = entry.last_status.as_mut() {
                        s.stale_since.get_or_insert(now);
                    }
                }
                self.save(&data)?;
                Err(WalletError::RegistryUnreachable(e.to_string()))
            }
        }
    }

    pub fn audit(&self) -> Vec<AuditEntry> {
        self.data.lock().expect("wallet poisoned").audit.clone()
    }
}

impl WalletData {
    fn fresh() -> Self {
        WalletData { holder_keys: generate_did(None).2, entries: Vec::new(), inbox: Vec::new(), audit: Vec::new() }
    }
}

fn dispatch(
    req: &PresentationRequest,
    response: &PresentationResponse,
    transport: &dyn VerifierTransport,
) -> Result<(), TransportError> {
    match &req.verifier_endpoint {
        Some(endpoint) => transport.respond(endpoint, response),
        None => Err(TransportError("request names no response endpoint".into())),
    }
}

fn deny_and_audit(
    data: &mut WalletData,
    req: &PresentationRequest,
    now: Timestamp,
    reason: &str,
    transport: &dyn VerifierTransport,
) {
    let response = PresentationResponse::denied(&req.request_id);
    let delivered = dispatch(req, &response, transport);
    if let Err(e) = &delivered {
        log::warn!("denial for {} not delivered: {e}", req.request_id);
    }
    data.audit.push(AuditEntry {
        at: now,
        request_id: req.request_id.clone(),
        verifier: req.verifier.clone(),
        purpose: req.purpose.clone(),
        outcome: Outcome::Denied,
        shared: None,
        local_reason: Some(reason.into()),
        delivered: delivered.is_ok(),
    });
}

fn group_for(claim: &str) -> Option<String> {
    [SchemaDefinition::vulnerability_status(), SchemaDefinition::fairness_for_all()]
        .iter()
        .flat_map(SchemaDefinition::groups)
        .find(|g| g.members.contains(claim))
        .map(|g| g.group_id)
}

fn inbox_view(item: &InboxItem) -> InboxView {
    let r = &item.request;
    InboxView {
        request_id: r.request_id.clone(),
        verifier: r.verifier.clone(),
        purpose: r.purpose.clone(),
        scheme: r.scheme.clone(),
        items: r
            .items
            .iter()
            .enumerate()
            .map(|(index, it)| ItemView {
                index,
                item: it.clone(),
                group: (it.mode == ItemMode::Reveal).then(|| group_for(&it.claim)).flatten(),
            })
            .collect(),
        received_at: item.received_at,
        expires_at: r.expires_at,
        state: item.state,
    }
}
