//! Browser demo over the core library. Each export returns a JSON string;
//! the page only needs `JSON.parse`.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use vulncred::canonical::{from_canonical_bytes, to_canonical_bytes, Nonce};
use vulncred::credential::{ClaimValue, HolderSecrets, SchemaDefinition, VerifiableCredential};
use vulncred::disclosure::{PredicateRequest, Selection};
use vulncred::ladder::{chain, Direction, LadderAnchor, MAX_LADDER_SPAN};
use vulncred::registry::{verify_chain, RegistryBlock, StatusList, StatusUpdate};
use vulncred::sample::{random_full_values, Sandbox};
use vulncred::{Hash32, Timestamp};

/// Links drawn per ladder; longer ladders are elided in the middle.
const MAX_DRAWN_LINKS: i64 = 24;

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo values serialize")
}

fn error(msg: impl ToString) -> String {
    to_json(&json!({ "error": msg.to_string() }))
}

fn short(h: &Hash32) -> String {
    h.to_hex()[..12].to_string()
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s.trim().to_ascii_uppercase().as_str() {
        "GTE" | ">=" => Some(Direction::Gte),
        "LTE" | "<=" => Some(Direction::Lte),
        _ => None,
    }
}

/// Commits `value` to a fresh ladder and tries to prove
/// `value <direction> threshold`, showing the chain from seed to anchor.
#[wasm_bindgen]
pub fn ladder(direction: &str, v_min: i32, v_max: i32, value: i32, threshold: i32) -> String {
    let (v_min, v_max, value, threshold) = (v_min as i64, v_max as i64, value as i64, threshold as i64);
    let Some(direction) = parse_direction(direction) else {
        return error("direction must be GTE or LTE");
    };
    if v_max < v_min || v_max - v_min > MAX_LADDER_SPAN {
        return error(format!("range must be non-empty and at most {MAX_LADDER_SPAN} wide"));
    }
    let seed = Hash32(rand::random());
    let anchor = match LadderAnchor::commit(direction, v_min, v_max, value, &seed) {
        Ok(a) => a,
        Err(e) => return error(e),
    };
    let length = match direction {
        Direction::Gte => value - v_min,
        Direction::Lte => v_max - value,
    };
    let witness = anchor.witness(&seed, value, threshold).ok();
    let hops = witness.map(|_| (value - threshold).abs());

    let drawn: Vec<i64> = if length < MAX_DRAWN_LINKS {
        (0..=length).collect()
    } else {
        let half = MAX_DRAWN_LINKS / 2;
        (0..half).chain(length - half + 1..=length).collect()
    };
    let links: Vec<Value> = drawn
        .iter()
        .map(|&k| {
            json!({
                "step": k,
                "hash": short(&chain(&seed, k as u32)),
                "seed": k == 0,
                "anchor": k == length,
                "witness": hops == Some(k),
            })
        })
        .collect();

    to_json(&json!({
        "statement": format!("{value} {} {threshold}", direction.symbol()),
        "holds": direction.holds(value, threshold),
        "anchor": anchor.anchor.to_hex(),
        "length": length,
        "witness": witness.map(|w| w.to_hex()),
        "verified": witness.is_some_and(|w| anchor.verify(threshold, &w)),
        "seed_as_witness_verifies": anchor.verify(threshold, &seed),
        "links": links,
        "elided": length >= MAX_DRAWN_LINKS,
    }))
}

fn display(v: &ClaimValue) -> Value {
    serde_json::to_value(v).expect("claim values serialize")
}

/// A holder with one freshly issued full credential, choosing what to show.
#[wasm_bindgen]
pub struct DisclosureExplorer {
    sandbox: Sandbox,
    credential: VerifiableCredential,
    secrets: HolderSecrets,
}

impl Default for DisclosureExplorer {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl DisclosureExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new() -> DisclosureExplorer {
        let mut sandbox = Sandbox::new();
        let values = random_full_values(&mut rand::thread_rng());
        let (credential, secrets) = sandbox
            .issue(&SchemaDefinition::vulnerability_status(), &values, Timestamp::now())
            .expect("sample values fit the schema");
        DisclosureExplorer { sandbox, credential, secrets }
    }

    /// Claims with their values, group and available predicate direction.
    pub fn claims(&self) -> String {
        let rows: Vec<Value> = self
            .secrets
            .claims
            .iter()
            .map(|c| {
                json!({
                    "name": c.name,
                    "value": display(&c.value),
                    "group": self.credential.group_of(&c.name).map(|g| g.group_id.clone()),
                    "ladder": c.ladder.as_ref().map(|l| json!({ "op": l.direction, "min": l.v_min, "max": l.v_max })),
                })
            })
            .collect();
        to_json(&rows)
    }

    /// Derives and verifies a presentation. `reveal` is a JSON array of claim
    /// names; `predicates` a JSON array of `{claim, op, threshold}`.
    pub fn present(&self, reveal: &str, predicates: &str) -> String {
        let reveal: BTreeSet<String> = match serde_json::from_str(reveal) {
            Ok(r) => r,
            Err(e) => return error(format!("reveal: {e}")),
        };
        let predicates: Vec<PredicateRequest> = match serde_json::from_str(predicates) {
            Ok(p) => p,
            Err(e) => return error(format!("predicates: {e}")),
        };
        let selection = Selection { reveal, predicates, audience: self.credential.intended_audience.clone() };
        let nonce = Nonce::random();
        let now = Timestamp::now();
        let presentation = match self.sandbox.present(&self.credential, &self.secrets, &selection, nonce, now) {
            Ok(p) => p,
            Err(e) => return to_json(&json!({ "derived": false, "holder_error": e.to_string(), "wire": "DENIED" })),
        };
        let bytes = presentation.to_bytes();
        let verdict = self.sandbox.verify(&presentation, nonce, now);

        let contains = |needle: &[u8]| bytes.windows(needle.len()).any(|w| w == needle);
        let hidden: Vec<Value> = self
            .secrets
            .claims
            .iter()
            .filter(|c| !selection.reveal.contains(&c.name))
            .map(|c| {
                let scannable = matches!(c.value, ClaimValue::Text(_) | ClaimValue::Date(_));
                json!({
                    "name": c.name,
                    "salt_in_bytes": contains(c.salt.to_hex().as_bytes()),
                    "value_in_bytes": scannable.then(|| contains(&c.value.value_bytes())),
                })
            })
            .collect();

        to_json(&json!({
            "derived": true,
            "bytes": bytes.len(),
            "verified": verdict.is_ok(),
            "facts": verdict.as_ref().ok(),
            "reason": verdict.as_ref().err(),
            "hidden": hidden,
            "presentation": serde_json::from_slice::<Value>(&bytes).expect("canonical bytes are JSON"),
        }))
    }
}

/// A small registry whose blocks can be corrupted bit by bit.
#[wasm_bindgen]
pub struct RegistryTamper {
    blocks: Vec<RegistryBlock>,
}

impl Default for RegistryTamper {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl RegistryTamper {
    #[wasm_bindgen(constructor)]
    pub fn new() -> RegistryTamper {
        let mut sb = Sandbox::new();
        let mut list = StatusList::fresh(sb.issuer.clone(), "L0");
        sb.registry.publish_status(&StatusUpdate::new(list.clone(), &sb.issuer_keys)).expect("fresh list");
        for bit in [5, 17] {
            list.version += 1;
            list.bits.set(bit);
            sb.registry.publish_status(&StatusUpdate::new(list.clone(), &sb.issuer_keys)).expect("growing list");
        }
        RegistryTamper { blocks: sb.registry.blocks().to_vec() }
    }

    pub fn blocks(&self) -> String {
        let rows: Vec<Value> = self
            .blocks
            .iter()
            .map(|b| {
                json!({
                    "index": b.index,
                    "kind": b.payload_kind,
                    "hash": short(&b.block_hash),
                    "previous": short(&b.previous_hash),
                    "bits": to_canonical_bytes(b).expect("blocks encode").len() * 8,
                })
            })
            .collect();
        to_json(&json!({ "blocks": rows, "chain_valid": verify_chain(&self.blocks) }))
    }

    /// Flips one bit of one block's encoding and re-checks the chain.
    pub fn flip(&self, block: usize, bit: usize) -> String {
        let Some(original) = self.blocks.get(block) else {
            return error(format!("no block {block}"));
        };
        let mut bytes = to_canonical_bytes(original).expect("blocks encode");
        if bit >= bytes.len() * 8 {
            return error(format!("block {block} has {} bits", bytes.len() * 8));
        }
        let at = bit / 8;
        let before = bytes[at];
        bytes[at] ^= 1 << (bit % 8);
        let context = |b: &[u8]| String::from_utf8_lossy(&b[at.saturating_sub(16)..(at + 16).min(b.len())]).into_owned();
        let (decoded, chain_valid, problem) = match from_canonical_bytes::<RegistryBlock>(&bytes) {
            Err(e) => (false, false, Some(e.to_string())),
            Ok(b) => {
                let mut tampered = self.blocks.clone();
                tampered[block] = b;
                (true, verify_chain(&tampered), None)
            }
        };
        to_json(&json!({
            "byte": at,
            "before": format!("{before:08b}"),
            "after": format!("{:08b}", bytes[at]),
            "context": context(&bytes),
            "decoded": decoded,
            "decode_error": problem,
            "chain_valid": chain_valid,
        }))
    }
}
