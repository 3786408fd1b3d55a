//! The verifiable data registry: a single-node, append-only, hash-linked log
//! of DID anchors and revocation status lists.
//!
//! Each block commits to its payload through `payload_hash` and to its
//! predecessor through `previous_hash`; `block_hash` covers the header. Any
//! mutation of a stored block is therefore visible to [`verify_chain`].

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{
    canonicalize, digest, from_canonical_bytes, to_canonical_bytes, to_canonical_value, CanonicalValue,
    EncodingError, Hash32, Signature64,
};
use crate::did::{validate_history, verify_signature, Did, DidAnchor, DidDocument, DidError, KeyPair};
use crate::time::{Clock, SystemClock, Timestamp};

/// Bits per status list.
pub const STATUS_LIST_BITS: usize = 1024;
const STATUS_LIST_BYTES: usize = STATUS_LIST_BITS / 8;
const LOG_FILE: &str = "chain.log";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("status update would clear a revoked bit")]
    NonMonotoneStatus,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("chain verification failed: {0}")]
    Corrupt(String),
    #[error("registry storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry unreachable: {0}")]
    Unreachable(String),
}

impl From<EncodingError> for RegistryError {
    fn from(e: EncodingError) -> Self {
        RegistryError::MalformedPayload(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PayloadKind {
    DidAnchor,
    StatusUpdate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryBlock {
    pub index: u64,
    pub created_at: Timestamp,
    pub previous_hash: Hash32,
    pub payload_kind: PayloadKind,
    pub payload: CanonicalValue,
    pub payload_hash: Hash32,
    pub block_hash: Hash32,
}

#[derive(Serialize)]
struct BlockHeader<'a> {
    index: u64,
    created_at: &'a Timestamp,
    previous_hash: &'a Hash32,
    payload_kind: PayloadKind,
    payload_hash: &'a Hash32,
}

impl RegistryBlock {
    fn compute_payload_hash(payload: &CanonicalValue) -> Hash32 {
        digest(&canonicalize(payload))
    }

    fn compute_block_hash(&self) -> Hash32 {
        let header = BlockHeader {
            index: self.index,
            created_at: &self.created_at,
            previous_hash: &self.previous_hash,
            payload_kind: self.payload_kind,
            payload_hash: &self.payload_hash,
        };
        digest(&to_canonical_bytes(&header).expect("headers are always encodable"))
    }
}

/// True iff every block's hashes and links recompute exactly and indices are
/// contiguous from zero.
pub fn verify_chain(blocks: &[RegistryBlock]) -> bool {
    verify_segment(blocks, 0, &Hash32::ZERO)
}

fn verify_segment(blocks: &[RegistryBlock], first_index: u64, first_previous: &Hash32) -> bool {
    let mut expected_prev = *first_previous;
    for (offset, block) in blocks.iter().enumerate() {
        if block.index != first_index + offset as u64
            || block.previous_hash != expected_prev
            || block.payload_hash != RegistryBlock::compute_payload_hash(&block.payload)
            || block.block_hash != block.compute_block_hash()
        {
            return false;
        }
        expected_prev = block.block_hash;
    }
    true
}

/// Packed revocation bits, most significant bit first within each byte.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatusBits(#[serde(with = "hex::serde")] Vec<u8>);

impl std::fmt::Debug for StatusBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StatusBits(set={:?})", self.set_indices())
    }
}

impl Default for StatusBits {
    fn default() -> Self {
        StatusBits(vec![0; STATUS_LIST_BYTES])
    }
}

impl StatusBits {
    pub fn get(&self, index: usize) -> bool {
        index < STATUS_LIST_BITS && self.0[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn set(&mut self, index: usize) {
        assert!(index < STATUS_LIST_BITS, "status index {index} out of range");
        self.0[index / 8] |= 0x80 >> (index % 8);
    }

    pub fn popcount(&self) -> u32 {
        self.0.iter().map(|b| b.count_ones()).sum()
    }

    pub fn set_indices(&self) -> Vec<usize> {
        (0..STATUS_LIST_BITS).filter(|&i| self.get(i)).collect()
    }

    /// Every bit set in `older` is still set here.
    pub fn covers(&self, older: &StatusBits) -> bool {
        self.0.iter().zip(&older.0).all(|(new, old)| new & old == *old)
    }

    fn well_formed(&self) -> bool {
        self.0.len() == STATUS_LIST_BYTES
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusList {
    pub issuer: Did,
    pub list_id: String,
    pub bits: StatusBits,
    pub version: u64,
}

impl StatusList {
    pub fn fresh(issuer: Did, list_id: impl Into<String>) -> Self {
        StatusList { issuer, list_id: list_id.into(), bits: StatusBits::default(), version: 0 }
    }

    pub fn is_revoked(&self, index: u32) -> bool {
        self.bits.get(index as usize)
    }
}

/// A status list version signed by its issuer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusUpdate {
    pub list: StatusList,
    pub signature: Signature64,
}

impl StatusUpdate {
    pub fn new(list: StatusList, issuer_keys: &KeyPair) -> Self {
        let signature = issuer_keys.sign(&to_canonical_bytes(&list).expect("status lists are encodable"));
        StatusUpdate { list, signature }
    }
}

/// Read access used by resolution and credential verification.
pub trait RegistryView {
    /// All anchored versions of a DID in anchoring order.
    fn did_history(&self, did: &Did) -> Vec<DidDocument>;
    fn status_list(&self, issuer: &Did, list_id: &str) -> Option<StatusList>;
}

/// Access to a registry that may live in this process or behind HTTP.
///
/// `read` must present state at least as fresh as every block accepted
/// before the call started.
pub trait RegistryHandle: Send + Sync {
    fn read(&self, f: &mut dyn FnMut(&dyn RegistryView)) -> Result<(), RegistryError>;
    fn submit(&self, kind: PayloadKind, payload: CanonicalValue) -> Result<RegistryBlock, RegistryError>;
}

impl dyn RegistryHandle + '_ {
    pub fn anchor(&self, anchor: &DidAnchor) -> Result<RegistryBlock, RegistryError> {
        self.submit(PayloadKind::DidAnchor, to_canonical_value(anchor)?)
    }

    pub fn publish_status(&self, update: &StatusUpdate) -> Result<RegistryBlock, RegistryError> {
        self.submit(PayloadKind::StatusUpdate, to_canonical_value(update)?)
    }
}

/// Runs `f` against a fresh view of `handle`.
pub fn with_view<R>(handle: &dyn RegistryHandle, f: impl FnOnce(&dyn RegistryView) -> R) -> Result<R, RegistryError> {
    let mut f = Some(f);
    let mut out = None;
    handle.read(&mut |view| {
        if let Some(f) = f.take() {
            out = Some(f(view));
        }
    })?;
    Ok(out.expect("read invokes the callback exactly once"))
}

/// An in-process registry shared between services. Appends take the write
/// lock, so readers never observe a partially applied block.
#[derive(Clone, Default)]
pub struct SharedRegistry(Arc<RwLock<Registry>>);

impl SharedRegistry {
    pub fn new(registry: Registry) -> Self {
        SharedRegistry(Arc::new(RwLock::new(registry)))
    }

    pub fn inner(&self) -> &Arc<RwLock<Registry>> {
        &self.0
    }
}

impl RegistryHandle for SharedRegistry {
    fn read(&self, f: &mut dyn FnMut(&dyn RegistryView)) -> Result<(), RegistryError> {
        let guard = self.0.read().expect("registry lock poisoned");
        f(&*guard);
        Ok(())
    }

    fn submit(&self, kind: PayloadKind, payload: CanonicalValue) -> Result<RegistryBlock, RegistryError> {
        self.0.write().expect("registry lock poisoned").append(kind, payload)
    }
}

/// The registry state plus its optional append-only backing file.
pub struct Registry {
    blocks: Vec<RegistryBlock>,
    dids: HashMap<Did, Vec<DidDocument>>,
    statuses: HashMap<(Did, String), StatusList>,
    log: Option<BufWriter<File>>,
    clock: Arc<dyn Clock>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("blocks", &self.blocks.len()).finish_non_exhaustive()
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Registry {
            blocks: Vec::new(),
            dids: HashMap::new(),
            statuses: HashMap::new(),
            log: None,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Opens (or creates) the log in `dir`, replaying and verifying every
    /// block. A corrupt or truncated log is an error, never silently repaired.
    pub fn open(dir: &Path) -> Result<Self, RegistryError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let blocks = if path.exists() { read_log(&path)? } else { Vec::new() };
        let mut registry = Self::from_blocks(blocks)?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        registry.log = Some(BufWriter::new(file));
        Ok(registry)
    }

    /// Rebuilds state from a block list, rejecting it unless the chain verifies
    /// and every payload would have been accepted in order.
    pub fn from_blocks(blocks: Vec<RegistryBlock>) -> Result<Self, RegistryError> {
        let mut registry = Self::in_memory();
        registry.extend_verified(blocks)?;
        Ok(registry)
    }

    /// Appends blocks produced elsewhere (a replica catching up), checking
    /// that they continue this chain.
    pub fn extend_verified(&mut self, blocks: Vec<RegistryBlock>) -> Result<(), RegistryError> {
        let next_index = self.blocks.len() as u64;
        let prev = self.blocks.last().map(|b| b.block_hash).unwrap_or(Hash32::ZERO);
        if !verify_segment(&blocks, next_index, &prev) {
            return Err(RegistryError::Corrupt(format!("segment starting at {next_index} does not link")));
        }
        for block in blocks {
            self.apply(block.payload_kind, &block.payload)
                .map_err(|e| RegistryError::Corrupt(format!("block {}: {e}", block.index)))?;
            self.blocks.push(block);
        }
        Ok(())
    }

    pub fn blocks(&self) -> &[RegistryBlock] {
        &self.blocks
    }

    pub fn blocks_from(&self, index: u64) -> &[RegistryBlock] {
        let start = (index as usize).min(self.blocks.len());
        &self.blocks[start..]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn head_hash(&self) -> Hash32 {
        self.blocks.last().map(|b| b.block_hash).unwrap_or(Hash32::ZERO)
    }

    /// Validates `payload` against current state and appends it.
    pub fn append(&mut self, kind: PayloadKind, payload: CanonicalValue) -> Result<RegistryBlock, RegistryError> {
        let (dids, statuses) = self.validate(kind, &payload)?;
        let mut block = RegistryBlock {
            index: self.blocks.len() as u64,
            created_at: self.clock.now(),
            previous_hash: self.head_hash(),
            payload_kind: kind,
            payload_hash: RegistryBlock::compute_payload_hash(&payload),
            payload,
            block_hash: Hash32::ZERO,
        };
        block.block_hash = block.compute_block_hash();
        if let Some(log) = self.log.as_mut() {
            write_record(log, &block)?;
        }
        self.commit(dids, statuses);
        self.blocks.push(block.clone());
        Ok(block)
    }

    pub fn anchor(&mut self, anchor: &DidAnchor) -> Result<RegistryBlock, RegistryError> {
        self.append(PayloadKind::DidAnchor, to_canonical_value(anchor)?)
    }

    pub fn publish_status(&mut self, update: &StatusUpdate) -> Result<RegistryBlock, RegistryError> {
        self.append(PayloadKind::StatusUpdate, to_canonical_value(update)?)
    }

    pub fn latest_status(&self, issuer: &Did, list_id: &str) -> Result<StatusList, RegistryError> {
        self.statuses
            .get(&(issuer.clone(), list_id.to_string()))
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(format!("status list {issuer}/{list_id}")))
    }

    pub fn resolve(&self, did: &Did) -> Result<DidDocument, DidError> {
        crate::did::resolve(did, self)
    }

    fn apply(&mut self, kind: PayloadKind, payload: &CanonicalValue) -> Result<(), RegistryError> {
        let (dids, statuses) = self.validate(kind, payload)?;
        self.commit(dids, statuses);
        Ok(())
    }

    fn commit(&mut self, did: Option<DidDocument>, status: Option<StatusList>) {
        if let Some(doc) = did {
            self.dids.entry(doc.did.clone()).or_default().push(doc);
        }
        if let Some(list) = status {
            self.statuses.insert((list.issuer.clone(), list.list_id.clone()), list);
        }
    }

    fn validate(
        &self,
        kind: PayloadKind,
        payload: &CanonicalValue,
    ) -> Result<(Option<DidDocument>, Option<StatusList>), RegistryError> {
        let bytes = canonicalize(payload);
        match kind {
            PayloadKind::DidAnchor => {
                let anchor: DidAnchor = from_canonical_bytes(&bytes)?;
                self.validate_anchor(&anchor)?;
                Ok((Some(anchor.document), None))
            }
            PayloadKind::StatusUpdate => {
                let update: StatusUpdate = from_canonical_bytes(&bytes)?;
                self.validate_status(&update)?;
                Ok((None, Some(update.list)))
            }
        }
    }

    fn validate_anchor(&self, anchor: &DidAnchor) -> Result<(), RegistryError> {
        let doc = &anchor.document;
        match self.dids.get(&doc.did) {
            None => {
                if doc.version != 0 || !doc.self_consistent() {
                    return Err(RegistryError::MalformedPayload(format!(
                        "first anchor of {} must be a self-consistent version 0",
                        doc.did
                    )));
                }
                if !anchor.signed_by(&doc.verification_key) {
                    return Err(RegistryError::Unauthorized("version 0 not signed by its own key".into()));
                }
            }
            Some(history) => {
                let current = history.last().expect("histories are never empty");
                // Key continuity: updates must be signed by the key in force.
                if !anchor.signed_by(&current.verification_key) {
                    return Err(RegistryError::Unauthorized(format!(
                        "update of {} not signed by the current verification key",
                        doc.did
                    )));
                }
                if doc.version != current.version + 1 {
                    return Err(RegistryError::MalformedPayload(format!(
                        "expected version {}, got {}",
                        current.version + 1,
                        doc.version
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_status(&self, update: &StatusUpdate) -> Result<(), RegistryError> {
        let list = &update.list;
        if !list.bits.well_formed() {
            return Err(RegistryError::MalformedPayload(format!("status list must hold {STATUS_LIST_BITS} bits")));
        }
        let issuer_doc = self
            .dids
            .get(&list.issuer)
            .ok_or_else(|| RegistryError::Unauthorized(format!("issuer {} not anchored", list.issuer)))
            .and_then(|h| {
                validate_history(&list.issuer, h).map_err(|e| RegistryError::Unauthorized(e.to_string()))
            })?;
        let bytes = to_canonical_bytes(list)?;
        if !verify_signature(&issuer_doc.verification_key, &bytes, &update.signature) {
            return Err(RegistryError::Unauthorized(format!("status update not signed by {}", list.issuer)));
        }
        match self.statuses.get(&(list.issuer.clone(), list.list_id.clone())) {
            None if list.version != 0 => Err(RegistryError::MalformedPayload("new status lists start at version 0".into())),
            None => Ok(()),
            Some(prev) if list.version != prev.version + 1 => Err(RegistryError::MalformedPayload(format!(
                "expected status version {}, got {}",
                prev.version + 1,
                list.version
            ))),
            Some(prev) if !list.bits.covers(&prev.bits) => Err(RegistryError::NonMonotoneStatus),
            Some(_) => Ok(()),
        }
    }
}

impl RegistryView for Registry {
    fn did_history(&self, did: &Did) -> Vec<DidDocument> {
        self.dids.get(did).cloned().unwrap_or_default()
    }

    fn status_list(&self, issuer: &Did, list_id: &str) -> Option<StatusList> {
        self.latest_status(issuer, list_id).ok()
    }
}

fn write_record(log: &mut BufWriter<File>, block: &RegistryBlock) -> Result<(), RegistryError> {
    let bytes = to_canonical_bytes(block)?;
    let len = u32::try_from(bytes.len()).map_err(|_| RegistryError::MalformedPayload("block too large".into()))?;
    log.write_all(&len.to_be_bytes())?;
    log.write_all(&bytes)?;
    log.flush()?;
    log.get_ref().sync_data()?;
    Ok(())
}

/// Reads every length-prefixed block record from a log file.
pub fn read_log(path: &Path) -> Result<Vec<RegistryBlock>, RegistryError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut blocks = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match reader.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let mut record = vec![0u8; u32::from_be_bytes(len) as usize];
        reader
            .read_exact(&mut record)
            .map_err(|_| RegistryError::Corrupt(format!("truncated record after block {}", blocks.len())))?;
        let block: RegistryBlock = from_canonical_bytes(&record)
            .map_err(|e| RegistryError::Corrupt(format!("record {}: {e}", blocks.len())))?;
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn log_path(dir: &Path) -> PathBuf {
    dir.join(LOG_FILE)
}
