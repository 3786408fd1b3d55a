//! Selective-disclosure presentations.
//!
//! A presentation carries the salt-free credential envelope plus, for each
//! revealed claim, its value, salt and Merkle path; for each predicate, a
//! ladder witness together with the claim's value commitment (so its leaf can
//! be rebuilt without the value). The holder signs the whole body bound to
//! the verifier's nonce and DID.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{to_canonical_bytes, Hash32, Nonce, Salt, Signature64};
use crate::credential::{leaf_hash, value_commitment, ClaimValue, FailReason, HolderSecrets, VerifiableCredential};
use crate::did::{self, verify_signature, Did, KeyPair};
pub use crate::ladder::chain;
use crate::ladder::{Direction, LadderAnchor, LadderError};
use crate::merkle::{self, MerklePath};
use crate::registry::RegistryView;
use crate::time::Timestamp;

/// How long a verifier accepts a nonce after it was issued.
pub const NONCE_VALIDITY_SECS: i64 = 5 * 60;
pub const REPLAY_CACHE_CAPACITY: usize = 100_000;

/// Holder-side derivation failures. Only the holder ever sees these; the wire
/// carries a bare denial.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeriveError {
    #[error("predicate on {0} does not hold")]
    PredicateUnsatisfiable(String),
    #[error("disclosure would split group {0}")]
    GroupViolation(String),
    #[error("credential is restricted to audience {0:?}")]
    AudienceViolation(String),
    #[error("unknown claim {0}")]
    UnknownClaim(String),
    #[error("claim {0} does not support predicates of that direction")]
    NoLadder(String),
    #[error("secrets do not match the credential")]
    SecretsMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosedClaim {
    pub name: String,
    pub value: ClaimValue,
    pub salt: Salt,
    pub ladder: Option<LadderAnchor>,
    pub merkle_path: MerklePath,
}

impl DisclosedClaim {
    fn leaf(&self) -> Hash32 {
        let commitment = value_commitment(&self.salt, &self.name, &self.value.value_bytes());
        leaf_hash(&self.name, &commitment, self.ladder.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateProof {
    pub claim_name: String,
    pub op: Direction,
    pub threshold: i64,
    pub witness: Hash32,
    pub value_commitment: Hash32,
    pub ladder: LadderAnchor,
    pub merkle_path: MerklePath,
}

impl PredicateProof {
    fn leaf(&self) -> Hash32 {
        leaf_hash(&self.claim_name, &self.value_commitment, Some(&self.ladder))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub credential: VerifiableCredential,
    pub disclosed: Vec<DisclosedClaim>,
    pub predicates: Vec<PredicateProof>,
    pub holder: Did,
    pub verifier: Did,
    pub nonce: Nonce,
    pub created_at: Timestamp,
    pub holder_signature: Signature64,
}

#[derive(Serialize)]
struct PresentationBody<'a> {
    credential: &'a VerifiableCredential,
    disclosed: &'a [DisclosedClaim],
    predicates: &'a [PredicateProof],
    holder: &'a Did,
    verifier: &'a Did,
    nonce: &'a Nonce,
    created_at: &'a Timestamp,
}

impl Presentation {
    /// `canonical(body) || nonce || verifier DID`.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let body = PresentationBody {
            credential: &self.credential,
            disclosed: &self.disclosed,
            predicates: &self.predicates,
            holder: &self.holder,
            verifier: &self.verifier,
            nonce: &self.nonce,
            created_at: &self.created_at,
        };
        let mut bytes = to_canonical_bytes(&body).expect("presentations are always encodable");
        bytes.extend_from_slice(self.nonce.as_bytes());
        bytes.extend_from_slice(self.verifier.to_string().as_bytes());
        bytes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("presentations are always encodable")
    }

    /// Claim names whose values a verifier can learn from this presentation.
    pub fn revealed_names(&self) -> BTreeSet<String> {
        self.disclosed.iter().map(|d| d.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRequest {
    pub claim: String,
    pub op: Direction,
    pub threshold: i64,
}

/// What the holder has agreed to disclose.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub reveal: BTreeSet<String>,
    pub predicates: Vec<PredicateRequest>,
    /// Audience the verifier claims to belong to (e.g. `financial`).
    pub audience: Option<String>,
}

/// Builds a presentation containing exactly `selection` and nothing else.
pub fn derive(
    vc: &VerifiableCredential,
    secrets: &HolderSecrets,
    selection: &Selection,
    verifier: &Did,
    nonce: Nonce,
    holder_keys: &KeyPair,
    now: Timestamp,
) -> Result<Presentation, DeriveError> {
    if !secrets.matches(vc) {
        return Err(DeriveError::SecretsMismatch);
    }
    if let Some(aud) = &vc.intended_audience {
        if selection.audience.as_ref() != Some(aud) {
            return Err(DeriveError::AudienceViolation(aud.clone()));
        }
    }
    for name in &selection.reveal {
        if secrets.claim(name).is_none() {
            return Err(DeriveError::UnknownClaim(name.clone()));
        }
    }
    check_groups(vc, &selection.reveal).map_err(DeriveError::GroupViolation)?;

    let leaves = secrets.leaves();
    let path_for = |name: &str| {
        let idx = secrets.index_of(name).expect("claim checked above");
        merkle::path(&leaves, idx).expect("index in range")
    };

    let disclosed = selection
        .reveal
        .iter()
        .map(|name| {
            let c = secrets.claim(name).expect("checked");
            DisclosedClaim {
                name: c.name.clone(),
                value: c.value.clone(),
                salt: c.salt,
                ladder: c.ladder.clone(),
                merkle_path: path_for(name),
            }
        })
        .collect();

    let mut predicates = Vec::with_capacity(selection.predicates.len());
    for p in &selection.predicates {
        let claim = secrets.claim(&p.claim).ok_or_else(|| DeriveError::UnknownClaim(p.claim.clone()))?;
        let (Some(ladder), Some(seed), Some(value)) =
            (claim.ladder.as_ref(), secrets.ladder_seeds.get(&p.claim), claim.value.as_integer())
        else {
            return Err(DeriveError::NoLadder(p.claim.clone()));
        };
        if ladder.direction != p.op {
            return Err(DeriveError::NoLadder(p.claim.clone()));
        }
        let witness = ladder.witness(seed, value, p.threshold).map_err(|e| match e {
            LadderError::Unsatisfiable | LadderError::OutOfRange { .. } | LadderError::SpanTooWide(_) => {
                DeriveError::PredicateUnsatisfiable(p.claim.clone())
            }
        })?;
        predicates.push(PredicateProof {
            claim_name: p.claim.clone(),
            op: p.op,
            threshold: p.threshold,
            witness,
            value_commitment: claim.commitment(),
            ladder: ladder.clone(),
            merkle_path: path_for(&p.claim),
        });
    }

    let mut presentation = Presentation {
        credential: vc.clone(),
        disclosed,
        predicates,
        holder: vc.subject.clone(),
        verifier: verifier.clone(),
        nonce,
        created_at: now,
        holder_signature: Signature64([0; 64]),
    };
    presentation.holder_signature = holder_keys.sign(&presentation.signing_bytes());
    Ok(presentation)
}

/// Every group is either fully inside `revealed` or fully outside it.
fn check_groups(vc: &VerifiableCredential, revealed: &BTreeSet<String>) -> Result<(), String> {
    for g in &vc.groups {
        let shown = g.members.iter().filter(|m| revealed.contains(*m)).count();
        if shown != 0 && shown != g.members.len() {
            return Err(g.group_id.clone());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenPredicate {
    pub claim: String,
    pub op: Direction,
    pub threshold: i64,
}

/// What a verifier learns from a valid presentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosedFacts {
    pub credential_id: String,
    pub schema: String,
    pub issuer: Did,
    pub subject: Did,
    pub revealed: BTreeMap<String, ClaimValue>,
    pub proven: Vec<ProvenPredicate>,
}

/// Single-use nonce tracking with bounded memory.
///
/// Consumed nonces are remembered for [`NONCE_VALIDITY_SECS`]; once the cache
/// is full, only entries past that window are evicted, oldest first.
#[derive(Debug)]
pub struct ReplayCache {
    inner: Mutex<ReplayInner>,
    capacity: usize,
}

#[derive(Debug, Default)]
struct ReplayInner {
    seen: HashMap<Nonce, Timestamp>,
    order: VecDeque<(Timestamp, Nonce)>,
}

impl Default for ReplayCache {
    fn default() -> Self {
        Self::with_capacity(REPLAY_CACHE_CAPACITY)
    }
}

impl ReplayCache {
    pub fn with_capacity(capacity: usize) -> Self {
        ReplayCache { inner: Mutex::new(ReplayInner::default()), capacity }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("replay cache poisoned").seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Atomically records `nonce` as used. Fails if it was already used or if
    /// the cache is full of unexpired entries.
    pub fn consume(&self, nonce: Nonce, now: Timestamp) -> Result<(), FailReason> {
        let mut inner = self.inner.lock().expect("replay cache poisoned");
        if inner.seen.contains_key(&nonce) {
            return Err(FailReason::NonceReplayed);
        }
        while inner.seen.len() >= self.capacity {
            match inner.order.front() {
                Some((at, _)) if at.plus_seconds(NONCE_VALIDITY_SECS) <= now => {
                    let (_, old) = inner.order.pop_front().expect("front exists");
                    inner.seen.remove(&old);
                }
                _ => return Err(FailReason::ReplayCacheFull),
            }
        }
        inner.seen.insert(nonce, now);
        inner.order.push_back((now, nonce));
        Ok(())
    }
}

/// The verifier-side expectations a presentation is checked against.
pub struct Expectation<'a> {
    pub verifier: &'a Did,
    pub nonce: Nonce,
    pub replay: &'a ReplayCache,
}

/// Full verification. Pure apart from the replay cache's test-and-set, which
/// is only reached when every other check has passed.
pub fn verify_presentation(
    p: &Presentation,
    registry: &dyn RegistryView,
    expect: &Expectation<'_>,
    now: Timestamp,
) -> Result<DisclosedFacts, FailReason> {
    if p.nonce != expect.nonce {
        return Err(FailReason::NonceMismatch);
    }
    crate::credential::verify_full(&p.credential, registry, now)?;
    let root = p.credential.claims_root;

    let mut revealed = BTreeMap::new();
    for d in &p.disclosed {
        if !merkle::verify_path(&d.leaf(), &d.merkle_path, &root) {
            return Err(FailReason::PathMismatch);
        }
        if revealed.insert(d.name.clone(), d.value.clone()).is_some() {
            return Err(FailReason::PathMismatch);
        }
    }

    let mut proven = Vec::new();
    for pr in &p.predicates {
        if !merkle::verify_path(&pr.leaf(), &pr.merkle_path, &root) {
            return Err(FailReason::PathMismatch);
        }
        if pr.op != pr.ladder.direction || !pr.ladder.verify(pr.threshold, &pr.witness) {
            return Err(FailReason::PredicateInvalid);
        }
        proven.push(ProvenPredicate { claim: pr.claim_name.clone(), op: pr.op, threshold: pr.threshold });
    }

    if p.holder != p.credential.subject || p.verifier != *expect.verifier {
        return Err(FailReason::HolderBindingInvalid);
    }
    let holder_doc = did::resolve(&p.holder, registry).map_err(|_| FailReason::HolderBindingInvalid)?;
    if !verify_signature(&holder_doc.verification_key, &p.signing_bytes(), &p.holder_signature) {
        return Err(FailReason::HolderBindingInvalid);
    }

    let names: BTreeSet<String> = revealed.keys().cloned().collect();
    check_groups(&p.credential, &names).map_err(|_| FailReason::GroupViolation)?;

    expect.replay.consume(p.nonce, now)?;

    Ok(DisclosedFacts {
        credential_id: p.credential.credential_id.clone(),
        schema: p.credential.schema.clone(),
        issuer: p.credential.issuer.clone(),
        subject: p.credential.subject.clone(),
        revealed,
        proven,
    })
}
