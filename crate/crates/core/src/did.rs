//! `did:local` identifiers, their documents and Ed25519 keys.
//!
//! A DID's id is the lowercase, unpadded base-32 encoding of the SHA-256 of the
//! canonical bytes of its version-0 document body (the document without the
//! `did` field, which would otherwise be self-referential). Later versions
//! rotate the key or endpoint and link back with `previous_hash`.

use std::fmt;
use std::str::FromStr;

use data_encoding::BASE32_NOPAD;
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::canonical::{digest, to_canonical_bytes, EncodingError, Hash32, PublicKey, Signature64};
use crate::registry::RegistryView;

pub const DID_METHOD: &str = "local";
pub const SIGNATURE_ALGORITHM: &str = "ed25519";

/// Length of a base-32 encoded 32-byte digest without padding.
pub const DID_ID_LEN: usize = 52;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DidError {
    #[error("malformed DID {0:?}")]
    Malformed(String),
    #[error("DID not found: {0}")]
    NotFound(Did),
    #[error("document chain broken for {did}: {reason}")]
    ChainBroken { did: Did, reason: String },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did {
    id: String,
}

impl Did {
    pub fn from_digest(h: &Hash32) -> Self {
        Did { id: BASE32_NOPAD.encode(h.as_bytes()).to_ascii_lowercase() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{DID_METHOD}:{}", self.id)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = DidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = s
            .strip_prefix("did:local:")
            .ok_or_else(|| DidError::Malformed(s.to_string()))?;
        let valid = id.len() == DID_ID_LEN
            && id.bytes().all(|b| b.is_ascii_lowercase() || (b'2'..=b'7').contains(&b))
            && BASE32_NOPAD.decode(id.to_ascii_uppercase().as_bytes()).is_ok();
        if !valid {
            return Err(DidError::Malformed(s.to_string()));
        }
        Ok(Did { id: id.to_string() })
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub did: Did,
    pub verification_key: PublicKey,
    pub service_endpoint: Option<String>,
    pub version: u64,
    pub previous_hash: Option<Hash32>,
}

/// The part of a version-0 document the DID is derived from.
#[derive(Serialize)]
struct InitialBody<'a> {
    verification_key: &'a PublicKey,
    service_endpoint: &'a Option<String>,
    version: u64,
}

fn derive_did(verification_key: &PublicKey, service_endpoint: &Option<String>) -> Did {
    let body = InitialBody { verification_key, service_endpoint, version: 0 };
    let bytes = to_canonical_bytes(&body).expect("initial body is always encodable");
    Did::from_digest(&digest(&bytes))
}

impl DidDocument {
    pub fn hash(&self) -> Hash32 {
        digest(&to_canonical_bytes(self).expect("documents are always encodable"))
    }

    /// Version-0 id binding and the absence of a back-link; for later versions
    /// only the presence of the back-link can be checked without history.
    pub fn self_consistent(&self) -> bool {
        if self.version == 0 {
            self.previous_hash.is_none()
                && derive_did(&self.verification_key, &self.service_endpoint) == self.did
        } else {
            self.previous_hash.is_some()
        }
    }

    /// Successor document with a (possibly) new key and endpoint.
    pub fn next_version(&self, verification_key: PublicKey, service_endpoint: Option<String>) -> DidDocument {
        DidDocument {
            did: self.did.clone(),
            verification_key,
            service_endpoint,
            version: self.version + 1,
            previous_hash: Some(self.hash()),
        }
    }
}

/// Ed25519 key material. The secret is the 32-byte seed.
#[derive(Clone, Serialize, Deserialize)]
pub struct KeyPair {
    pub public: PublicKey,
    secret: SecretSeed,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecretSeed(#[serde(with = "hex::serde")] [u8; 32]);

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate() -> Self {
        Self::from_seed(rand::random())
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&seed);
        KeyPair { public: PublicKey(signing.verifying_key().to_bytes()), secret: SecretSeed(seed) }
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.secret.0
    }

    pub fn sign(&self, message: &[u8]) -> Signature64 {
        sign(&self.secret.0, message)
    }
}

/// Reads a key pair saved by an earlier run, or generates and saves one.
pub fn load_or_create_keys(path: &std::path::Path) -> std::io::Result<KeyPair> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let keys = KeyPair::generate();
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(&keys).expect("keys serialize"))?;
            std::fs::rename(&tmp, path)?;
            Ok(keys)
        }
        Err(e) => Err(e),
    }
}

pub fn sign(seed: &[u8; 32], message: &[u8]) -> Signature64 {
    Signature64(SigningKey::from_bytes(seed).sign(message).to_bytes())
}

pub fn verify_signature(public: &PublicKey, message: &[u8], sig: &Signature64) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(public.as_bytes()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(sig.as_bytes());
    key.verify_strict(message, &sig).is_ok()
}

pub fn generate_did(service_endpoint: Option<String>) -> (Did, DidDocument, KeyPair) {
    did_from_keys(KeyPair::generate(), service_endpoint)
}

/// Deterministic variant of [`generate_did`] for fixtures.
pub fn did_from_keys(keys: KeyPair, service_endpoint: Option<String>) -> (Did, DidDocument, KeyPair) {
    let did = derive_did(&keys.public, &service_endpoint);
    let doc = DidDocument {
        did: did.clone(),
        verification_key: keys.public,
        service_endpoint,
        version: 0,
        previous_hash: None,
    };
    (did, doc, keys)
}

/// A document as submitted to the registry, signed by the key that controls
/// the DID at the time of the update (the document's own key for version 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidAnchor {
    pub document: DidDocument,
    pub signature: Signature64,
}

impl DidAnchor {
    pub fn new(document: DidDocument, controller: &KeyPair) -> Self {
        let bytes = to_canonical_bytes(&document).expect("documents are always encodable");
        let signature = controller.sign(&bytes);
        DidAnchor { document, signature }
    }

    pub fn signed_by(&self, key: &PublicKey) -> bool {
        match to_canonical_bytes(&self.document) {
            Ok(bytes) => verify_signature(key, &bytes, &self.signature),
            Err(_) => false,
        }
    }
}

/// Resolves `did` to its latest anchored document, validating the whole
/// version chain back to version 0.
pub fn resolve(did: &Did, registry: &dyn RegistryView) -> Result<DidDocument, DidError> {
    let history = registry.did_history(did);
    validate_history(did, &history)
}

pub(crate) fn validate_history(did: &Did, history: &[DidDocument]) -> Result<DidDocument, DidError> {
    let broken = |reason: String| DidError::ChainBroken { did: did.clone(), reason };
    let first = history.first().ok_or_else(|| DidError::NotFound(did.clone()))?;
    if first.version != 0 || !first.self_consistent() || first.did != *did {
        return Err(broken("version 0 does not derive the DID".into()));
    }
    for pair in history.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.did != *did || next.version != prev.version + 1 {
            return Err(broken(format!("version {} does not follow {}", next.version, prev.version)));
        }
        if next.previous_hash != Some(prev.hash()) {
            return Err(broken(format!("version {} has a wrong previous_hash", next.version)));
        }
    }
    Ok(history.last().expect("non-empty").clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> Vec<u8> {
        hex::decode(s).unwrap()
    }

    // RFC 8032 section 7.1, tests 1-3.
    const RFC8032: [(&str, &str, &str, &str); 3] = [
        (
            "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
            "",
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        ),
        (
            "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
            "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
            "72",
            "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
        ),
        (
            "c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
            "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025",
            "af82",
            "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a",
        ),
    ];

    #[test]
    fn rfc8032_vectors() {
        for (secret, public, msg, sig) in RFC8032 {
            let seed: [u8; 32] = h(secret).try_into().unwrap();
            let kp = KeyPair::from_seed(seed);
            assert_eq!(kp.public.to_hex(), public);
            let s = kp.sign(&h(msg));
            assert_eq!(s.to_hex(), sig);
            assert!(verify_signature(&kp.public, &h(msg), &s));
        }
    }

    #[test]
    fn bit_flip_rejected() {
        let kp = KeyPair::generate();
        let msg = b"care and support".to_vec();
        let sig = kp.sign(&msg);
        assert!(verify_signature(&kp.public, &msg, &sig));
        for bit in 0..msg.len() * 8 {
            let mut m = msg.clone();
            m[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify_signature(&kp.public, &m, &sig));
        }
    }

    #[test]
    fn garbage_key_rejected() {
        let sig = KeyPair::generate().sign(b"x");
        assert!(!verify_signature(&PublicKey([0xff; 32]), b"x", &sig));
    }

    #[test]
    fn fresh_dids_are_distinct_and_consistent() {
        let (a, doc_a, _) = generate_did(None);
        let (b, _, _) = generate_did(None);
        assert_ne!(a, b);
        assert!(doc_a.self_consistent());
        assert_eq!(a.to_string().len(), "did:local:".len() + DID_ID_LEN);
        assert_eq!(a.to_string().parse::<Did>().unwrap(), a);
    }

    #[test]
    fn did_parse_rejects_bad_forms() {
        assert!("did:web:abc".parse::<Did>().is_err());
        assert!("did:local:ABC".parse::<Did>().is_err());
        assert!(format!("did:local:{}", "a".repeat(51)).parse::<Did>().is_err());
        assert!(format!("did:local:{}", "1".repeat(52)).parse::<Did>().is_err());
    }

    #[test]
    fn tampered_v0_is_inconsistent() {
        let (_, mut doc, _) = generate_did(Some("http://127.0.0.1:9000".into()));
        doc.service_endpoint = Some("http://evil".into());
        assert!(!doc.self_consistent());
    }

    #[test]
    fn history_validation() {
        let (did, v0, keys) = generate_did(None);
        assert_eq!(validate_history(&did, std::slice::from_ref(&v0)).unwrap(), v0);
        let v1 = v0.next_version(KeyPair::generate().public, None);
        assert_eq!(validate_history(&did, &[v0.clone(), v1.clone()]).unwrap(), v1);
        let mut bad = v1.clone();
        bad.previous_hash = Some(Hash32::ZERO);
        assert!(matches!(validate_history(&did, &[v0.clone(), bad]), Err(DidError::ChainBroken { .. })));
        assert!(matches!(validate_history(&did, &[]), Err(DidError::NotFound(_))));
        let anchor = DidAnchor::new(v0.clone(), &keys);
        assert!(anchor.signed_by(&keys.public));
        assert!(!anchor.signed_by(&KeyPair::generate().public));
    }
}
