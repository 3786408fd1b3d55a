//! Credential schemas, issuance, full verification and revocation.
//!
//! A credential never carries claim values. It carries a Merkle root over
//! per-claim leaves
//!
//! ```text
//! commitment = H(salt || u32be(len(name)) || name || canonical(value))
//! leaf       = H(0x00 || commitment || ladder-anchor-bytes?)
//! ```
//!
//! ordered by claim name, and the issuer's signature over everything else.
//! Values, salts and ladder seeds go to the holder only ([`HolderSecrets`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canonical::{
    canonicalize, digest, digest_parts, parse_date, to_canonical_bytes, CanonicalValue, Hash32, Salt,
    Signature64, HASH_ALGORITHM,
};
use crate::did::{self, verify_signature, Did, KeyPair, SIGNATURE_ALGORITHM};
use crate::ladder::{Direction, LadderAnchor, LadderError};
use crate::merkle::{self, MerklePath, LEAF_PREFIX};
use crate::registry::{
    with_view, RegistryError, RegistryHandle, RegistryView, StatusList, StatusUpdate, STATUS_LIST_BITS,
};
use crate::time::Timestamp;

pub const VULNERABILITY_STATUS: &str = "VulnerabilityStatusCredential";
pub const FAIRNESS_FOR_ALL: &str = "FairnessForAllCredential";
pub const FINANCIAL_AUDIENCE: &str = "financial";
pub const DRIVER_CONTEXT_GROUP: &str = "driver-context";
pub const DEFAULT_VALIDITY_MONTHS: u32 = 12;

/// Claim names of the four vulnerability drivers.
pub const DRIVER_CLAIMS: [&str; 4] =
    ["driver_health", "driver_life_events", "driver_low_resilience", "driver_low_capability"];

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("claim {claim}: {source}")]
    LadderOutOfRange { claim: String, source: LadderError },
    #[error("status slot {0} already taken")]
    StatusSlotTaken(StatusRef),
    #[error("status lists are full")]
    StatusListsExhausted,
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimKind {
    Text,
    Integer,
    Boolean,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClaimValue {
    Text(String),
    Integer(i64),
    Boolean(bool),
    Date(NaiveDate),
}

impl ClaimValue {
    pub fn kind(&self) -> ClaimKind {
        match self {
            ClaimValue::Text(_) => ClaimKind::Text,
            ClaimValue::Integer(_) => ClaimKind::Integer,
            ClaimValue::Boolean(_) => ClaimKind::Boolean,
            ClaimValue::Date(_) => ClaimKind::Date,
        }
    }

    pub fn to_canonical(&self) -> CanonicalValue {
        match self {
            ClaimValue::Text(s) => CanonicalValue::Text(s.clone()),
            ClaimValue::Integer(i) => CanonicalValue::Integer(*i),
            ClaimValue::Boolean(b) => CanonicalValue::Bool(*b),
            ClaimValue::Date(d) => CanonicalValue::Date(*d),
        }
    }

    /// The value's canonical bytes, as committed in its leaf.
    pub fn value_bytes(&self) -> Vec<u8> {
        canonicalize(&self.to_canonical())
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            ClaimValue::Integer(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ClaimValue::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    /// Reinterprets text as a date when the schema expects one.
    fn coerce(self, kind: ClaimKind) -> ClaimValue {
        match (self, kind) {
            (ClaimValue::Text(s), ClaimKind::Date) => match parse_date(&s) {
                Ok(d) => ClaimValue::Date(d),
                Err(_) => ClaimValue::Text(s),
            },
            (ClaimValue::Date(d), ClaimKind::Text) => ClaimValue::Text(d.format("%Y-%m-%d").to_string()),
            (v, _) => v,
        }
    }
}

impl fmt::Display for ClaimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimValue::Text(s) => f.write_str(s),
            ClaimValue::Integer(i) => write!(f, "{i}"),
            ClaimValue::Boolean(b) => write!(f, "{b}"),
            ClaimValue::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl Serialize for ClaimValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_canonical().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClaimValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match CanonicalValue::deserialize(d)? {
            CanonicalValue::Text(s) => Ok(match parse_date(&s) {
                Ok(date) => ClaimValue::Date(date),
                Err(_) => ClaimValue::Text(s),
            }),
            CanonicalValue::Integer(i) => Ok(ClaimValue::Integer(i)),
            CanonicalValue::Bool(b) => Ok(ClaimValue::Boolean(b)),
            other => Err(serde::de::Error::custom(format!("unsupported claim value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub direction: Direction,
    pub v_min: i64,
    pub v_max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: ClaimKind,
    pub required: bool,
    pub ladder: Option<LadderSpec>,
    pub group: Option<String>,
}

impl AttributeDef {
    fn new(name: &str, kind: ClaimKind) -> Self {
        AttributeDef { name: name.into(), kind, required: true, ladder: None, group: None }
    }

    fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    fn ladder(mut self, direction: Direction, v_min: i64, v_max: i64) -> Self {
        self.ladder = Some(LadderSpec { direction, v_min, v_max });
        self
    }

    fn group(mut self, group: &str) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn predicate_capable(&self) -> bool {
        self.ladder.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDefinition {
    pub name: String,
    pub attributes: Vec<AttributeDef>,
    pub intended_audience: Option<String>,
}

impl SchemaDefinition {
    /// The full credential an NHS-like issuer hands out.
    pub fn vulnerability_status() -> Self {
        use ClaimKind::*;
        let mut attributes = vec![
            AttributeDef::new("nhs_number", Text),
            AttributeDef::new("date_of_birth", Date),
            AttributeDef::new("birth_year", Integer).ladder(Direction::Lte, 1900, 2100),
            AttributeDef::new("assessment_date", Date).group(DRIVER_CONTEXT_GROUP),
        ];
        attributes.extend(DRIVER_CLAIMS.iter().map(|d| AttributeDef::new(d, Boolean).group(DRIVER_CONTEXT_GROUP)));
        attributes.push(AttributeDef::new("work_incapacity_months", Integer).ladder(Direction::Gte, 0, 120));
        attributes.push(AttributeDef::new("detail", Text).optional());
        SchemaDefinition { name: VULNERABILITY_STATUS.into(), attributes, intended_audience: None }
    }

    /// The restricted finance-only variant: drivers and incapacity duration.
    pub fn fairness_for_all() -> Self {
        let mut attributes: Vec<AttributeDef> = DRIVER_CLAIMS
            .iter()
            .map(|d| AttributeDef::new(d, ClaimKind::Boolean).group(DRIVER_CONTEXT_GROUP))
            .collect();
        attributes.push(AttributeDef::new("work_incapacity_months", ClaimKind::Integer).ladder(Direction::Gte, 0, 120));
        SchemaDefinition {
            name: FAIRNESS_FOR_ALL.into(),
            attributes,
            intended_audience: Some(FINANCIAL_AUDIENCE.into()),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            VULNERABILITY_STATUS => Some(Self::vulnerability_status()),
            FAIRNESS_FOR_ALL => Some(Self::fairness_for_all()),
            _ => None,
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attribute_names(&self) -> BTreeSet<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn groups(&self) -> Vec<DisclosureGroup> {
        let mut groups: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for a in &self.attributes {
            if let Some(g) = &a.group {
                groups.entry(g).or_default().insert(a.name.clone());
            }
        }
        groups.into_iter().map(|(id, members)| DisclosureGroup { group_id: id.into(), members }).collect()
    }

    fn validate(&self) -> Result<(), CredentialError> {
        let names = self.attribute_names();
        if names.len() != self.attributes.len() {
            return Err(CredentialError::SchemaViolation(format!("{}: duplicate attribute names", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureGroup {
    pub group_id: String,
    pub members: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatusRef {
    pub list_id: String,
    pub index: u32,
}

impl fmt::Display for StatusRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.list_id, self.index)
    }
}

/// One claim as the holder knows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub value: ClaimValue,
    pub salt: Salt,
    pub ladder: Option<LadderAnchor>,
}

/// `H(salt || u32be(len(name)) || name || value-bytes)`.
pub fn value_commitment(salt: &Salt, name: &str, value_bytes: &[u8]) -> Hash32 {
    let len = (name.len() as u32).to_be_bytes();
    digest_parts(&[salt.as_bytes(), &len, name.as_bytes(), value_bytes])
}

/// `H(0x00 || commitment || anchor-bytes)`, where anchor bytes are empty for
/// claims without a ladder.
pub fn leaf_hash(name: &str, commitment: &Hash32, ladder: Option<&LadderAnchor>) -> Hash32 {
    let anchor_bytes = ladder.map(|l| l.leaf_bytes(name)).unwrap_or_default();
    digest_parts(&[&[LEAF_PREFIX], commitment.as_bytes(), &anchor_bytes])
}

impl Claim {
    pub fn commitment(&self) -> Hash32 {
        value_commitment(&self.salt, &self.name, &self.value.value_bytes())
    }

    pub fn leaf(&self) -> Hash32 {
        leaf_hash(&self.name, &self.commitment(), self.ladder.as_ref())
    }
}

/// Everything the holder needs to open claims and build predicate proofs.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolderSecrets {
    pub credential_id: String,
    /// Sorted by claim name (leaf order).
    pub claims: Vec<Claim>,
    pub ladder_seeds: BTreeMap<String, Hash32>,
}

impl fmt::Debug for HolderSecrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HolderSecrets")
            .field("credential_id", &self.credential_id)
            .field("claims", &self.claims.iter().map(|c| &c.name).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl HolderSecrets {
    pub fn leaves(&self) -> Vec<Hash32> {
        self.claims.iter().map(Claim::leaf).collect()
    }

    pub fn claims_root(&self) -> Hash32 {
        merkle::root(&self.leaves())
    }

    pub fn claim(&self, name: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.claims.iter().position(|c| c.name == name)
    }

    pub fn path(&self, name: &str) -> Option<MerklePath> {
        merkle::path(&self.leaves(), self.index_of(name)?)
    }

    /// Secrets belong to `vc` iff they are ordered correctly and rebuild its root.
    pub fn matches(&self, vc: &VerifiableCredential) -> bool {
        self.credential_id == vc.credential_id
            && self.claims.windows(2).all(|w| w[0].name < w[1].name)
            && self.claims_root() == vc.claims_root
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiableCredential {
    pub credential_id: String,
    pub schema: String,
    pub issuer: Did,
    pub subject: Did,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub intended_audience: Option<String>,
    pub status_ref: StatusRef,
    pub claims_root: Hash32,
    pub groups: Vec<DisclosureGroup>,
    /// Signature and hash algorithm identifiers, for future rotation.
    pub proof_suite: String,
    pub signature: Signature64,
}

#[derive(Serialize)]
struct SignedEnvelope<'a> {
    credential_id: &'a str,
    schema: &'a str,
    issuer: &'a Did,
    subject: &'a Did,
    issued_at: &'a Timestamp,
    expires_at: &'a Timestamp,
    intended_audience: &'a Option<String>,
    status_ref: &'a StatusRef,
    claims_root: &'a Hash32,
    groups: &'a [DisclosureGroup],
    proof_suite: &'a str,
}

pub fn proof_suite() -> String {
    format!("{SIGNATURE_ALGORITHM}+{HASH_ALGORITHM}")
}

impl VerifiableCredential {
    fn envelope(&self) -> SignedEnvelope<'_> {
        SignedEnvelope {
            credential_id: &self.credential_id,
            schema: &self.schema,
            issuer: &self.issuer,
            subject: &self.subject,
            issued_at: &self.issued_at,
            expires_at: &self.expires_at,
            intended_audience: &self.intended_audience,
            status_ref: &self.status_ref,
            claims_root: &self.claims_root,
            groups: &self.groups,
            proof_suite: &self.proof_suite,
        }
    }

    /// The bytes the issuer signs: the envelope without its signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(&self.envelope()).expect("envelopes are always encodable")
    }

    pub fn group_of(&self, claim: &str) -> Option<&DisclosureGroup> {
        self.groups.iter().find(|g| g.members.contains(claim))
    }
}

/// Reasons a credential or presentation fails verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailReason {
    SignatureInvalid,
    IssuerUnresolvable,
    Expired,
    Revoked,
    StatusUnavailable,
    PathMismatch,
    PredicateInvalid,
    HolderBindingInvalid,
    NonceMismatch,
    NonceReplayed,
    ReplayCacheFull,
    GroupViolation,
    NotRequested,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variants serialize");
        f.write_str(s.as_str().unwrap_or("UNKNOWN"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Months(u32),
    Seconds(i64),
}

impl Default for Validity {
    fn default() -> Self {
        Validity::Months(DEFAULT_VALIDITY_MONTHS)
    }
}

impl Validity {
    fn expiry(self, from: Timestamp) -> Timestamp {
        match self {
            Validity::Months(m) => from.plus_months(m),
            Validity::Seconds(s) => from.plus_seconds(s),
        }
    }
}

/// Tracks which status slots an issuer has handed out.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StatusSlots {
    used: BTreeSet<StatusRef>,
    lists: Vec<String>,
}

impl StatusSlots {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lists(&self) -> &[String] {
        &self.lists
    }

    pub fn is_used(&self, slot: &StatusRef) -> bool {
        self.used.contains(slot)
    }

    pub fn used(&self) -> impl Iterator<Item = &StatusRef> {
        self.used.iter()
    }

    /// Next free slot, opening list `L<n>` when the current lists are full.
    /// The second field is true when a new list was opened and must be
    /// published before the slot is used.
    pub fn next_free(&mut self) -> (StatusRef, bool) {
        for list_id in &self.lists {
            if let Some(index) = (0..STATUS_LIST_BITS as u32)
                .find(|&i| !self.used.contains(&StatusRef { list_id: list_id.clone(), index: i }))
            {
                return (StatusRef { list_id: list_id.clone(), index }, false);
            }
        }
        let list_id = format!("L{}", self.lists.len());
        self.lists.push(list_id.clone());
        (StatusRef { list_id, index: 0 }, true)
    }

    pub fn take(&mut self, slot: StatusRef) -> Result<(), CredentialError> {
        if slot.index as usize >= STATUS_LIST_BITS {
            return Err(CredentialError::SchemaViolation(format!("status index {} out of range", slot.index)));
        }
        if !self.lists.contains(&slot.list_id) {
            self.lists.push(slot.list_id.clone());
        }
        if !self.used.insert(slot.clone()) {
            return Err(CredentialError::StatusSlotTaken(slot));
        }
        Ok(())
    }

    pub fn release(&mut self, slot: &StatusRef) {
        self.used.remove(slot);
    }
}

/// Inputs to a single issuance.
pub struct Issuance<'a> {
    pub schema: &'a SchemaDefinition,
    pub issuer: &'a Did,
    pub issuer_keys: &'a KeyPair,
    pub subject: &'a Did,
    pub values: &'a BTreeMap<String, ClaimValue>,
    pub issued_at: Timestamp,
    pub validity: Validity,
    pub status: StatusRef,
}

/// Issues a credential. Fresh salts and ladder seeds are generated per claim;
/// they are returned in [`HolderSecrets`] and not kept anywhere else.
pub fn issue(req: Issuance<'_>, slots: &mut StatusSlots) -> Result<(VerifiableCredential, HolderSecrets), CredentialError> {
    let schema = req.schema;
    schema.validate()?;
    for name in req.values.keys() {
        if schema.attribute(name).is_none() {
            return Err(CredentialError::SchemaViolation(format!("{} has no attribute {name}", schema.name)));
        }
    }

    let mut claims = Vec::new();
    let mut ladder_seeds = BTreeMap::new();
    for attr in &schema.attributes {
        let Some(value) = req.values.get(&attr.name) else {
            if attr.required {
                return Err(CredentialError::SchemaViolation(format!("missing required {}", attr.name)));
            }
            continue;
        };
        let value = value.clone().coerce(attr.kind);
        if value.kind() != attr.kind {
            return Err(CredentialError::SchemaViolation(format!(
                "{} must be {:?}, got {:?}",
                attr.name,
                attr.kind,
                value.kind()
            )));
        }
        let ladder = match attr.ladder {
            None => None,
            Some(spec) => {
                let v = value.as_integer().expect("ladder attributes are integers");
                let seed = Hash32(rand::random());
                let anchor = LadderAnchor::commit(spec.direction, spec.v_min, spec.v_max, v, &seed)
                    .map_err(|source| CredentialError::LadderOutOfRange { claim: attr.name.clone(), source })?;
                ladder_seeds.insert(attr.name.clone(), seed);
                Some(anchor)
            }
        };
        claims.push(Claim { name: attr.name.clone(), value, salt: Salt::random(), ladder });
    }
    claims.sort_by(|a, b| a.name.as_bytes().cmp(b.name.as_bytes()));
    let present: BTreeSet<&str> = claims.iter().map(|c| c.name.as_str()).collect();
    let groups: Vec<DisclosureGroup> = schema
        .groups()
        .into_iter()
        .map(|mut g| {
            g.members.retain(|m| present.contains(m.as_str()));
            g
        })
        .filter(|g| !g.members.is_empty())
        .collect();

    let expires_at = req.validity.expiry(req.issued_at);
    if expires_at <= req.issued_at {
        return Err(CredentialError::SchemaViolation("validity must be positive".into()));
    }

    slots.take(req.status.clone())?;

    let mut vc = VerifiableCredential {
        credential_id: String::new(),
        schema: schema.name.clone(),
        issuer: req.issuer.clone(),
        subject: req.subject.clone(),
        issued_at: req.issued_at,
        expires_at,
        intended_audience: schema.intended_audience.clone(),
        status_ref: req.status,
        claims_root: merkle::root(&claims.iter().map(Claim::leaf).collect::<Vec<_>>()),
        groups,
        proof_suite: proof_suite(),
        signature: Signature64([0; 64]),
    };
    vc.credential_id = format!("urn:vc:{}", digest(&vc.signing_bytes()).to_hex());
    vc.signature = req.issuer_keys.sign(&vc.signing_bytes());

    let secrets = HolderSecrets { credential_id: vc.credential_id.clone(), claims, ladder_seeds };
    Ok((vc, secrets))
}

/// Signature, expiry and status check against registry state only; the issuer
/// is never contacted.
pub fn verify_full(vc: &VerifiableCredential, registry: &dyn RegistryView, now: Timestamp) -> Result<(), FailReason> {
    let issuer_doc = did::resolve(&vc.issuer, registry).map_err(|_| FailReason::IssuerUnresolvable)?;
    if vc.proof_suite != proof_suite()
        || !verify_signature(&issuer_doc.verification_key, &vc.signing_bytes(), &vc.signature)
    {
        return Err(FailReason::SignatureInvalid);
    }
    if vc.expires_at <= vc.issued_at || now >= vc.expires_at {
        return Err(FailReason::Expired);
    }
    let list = registry
        .status_list(&vc.issuer, &vc.status_ref.list_id)
        .ok_or(FailReason::StatusUnavailable)?;
    if list.is_revoked(vc.status_ref.index) {
        return Err(FailReason::Revoked);
    }
    Ok(())
}

/// The status update that revokes `slot`, or `None` if it is already revoked.
pub fn revocation_update(
    issuer_keys: &KeyPair,
    current: &StatusList,
    slot: &StatusRef,
) -> Result<Option<StatusUpdate>, CredentialError> {
    if slot.index as usize >= STATUS_LIST_BITS || current.list_id != slot.list_id {
        return Err(CredentialError::NotFound(format!("status slot {slot}")));
    }
    if current.is_revoked(slot.index) {
        return Ok(None);
    }
    let mut next = current.clone();
    next.version += 1;
    next.bits.set(slot.index as usize);
    Ok(Some(StatusUpdate::new(next, issuer_keys)))
}

/// Sets the status bit for `slot` on the registry. Revoking an already
/// revoked slot succeeds without publishing a new version.
pub fn revoke(
    issuer_keys: &KeyPair,
    issuer: &Did,
    slot: &StatusRef,
    registry: &dyn RegistryHandle,
) -> Result<StatusList, CredentialError> {
    let (doc, current) = with_view(registry, |view| {
        (did::resolve(issuer, view), view.status_list(issuer, &slot.list_id))
    })?;
    let doc = doc.map_err(|e| CredentialError::NotFound(format!("issuer: {e}")))?;
    if doc.verification_key != issuer_keys.public {
        return Err(CredentialError::Unauthorized(format!("key does not control {issuer}")));
    }
    let current = current.ok_or_else(|| CredentialError::NotFound(format!("status list {}", slot.list_id)))?;
    match revocation_update(issuer_keys, &current, slot)? {
        None => Ok(current),
        Some(update) => {
            registry.publish_status(&update)?;
            Ok(update.list)
        }
    }
}
