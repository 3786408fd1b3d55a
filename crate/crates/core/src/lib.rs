//! Self-sovereign credentials for disclosing financial-vulnerability status.
//!
//! An issuer signs salted claim commitments, a holder reveals chosen claims or
//! threshold proofs built from hash ladders, and a bank verifies presentations
//! against a tamper-evident registry and keeps care flags on a review schedule.

pub mod bank;
pub mod canonical;
pub mod credential;
pub mod did;
pub mod disclosure;
pub mod exchange;
pub mod issuer;
pub mod ladder;
pub mod merkle;
pub mod registry;
pub mod sample;
pub mod time;
pub mod wallet;

pub use canonical::{canonicalize, digest, CanonicalValue, Hash32};
pub use did::{Did, DidDocument, KeyPair};
pub use registry::{Registry, RegistryBlock, RegistryView, StatusList};
pub use time::Timestamp;
