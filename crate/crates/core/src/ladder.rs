//! Hash ladders: threshold proofs over bounded integers using only a hash.
//!
//! The issuer commits to `anchor = chain(seed, distance)` where the distance is
//! measured from the end of the range the predicate points away from. A holder
//! who knows the seed can reveal an intermediate link that reaches the anchor
//! in exactly the number of hops implied by a threshold, which is only
//! possible when the predicate holds.
//!
//! | direction | anchor                     | witness for T            | check                          |
//! |-----------|----------------------------|--------------------------|--------------------------------|
//! | `GTE`     | `chain(seed, v - v_min)`   | `chain(seed, v - T)`     | `chain(w, T - v_min) == anchor` |
//! | `LTE`     | `chain(seed, v_max - v)`   | `chain(seed, T - v)`     | `chain(w, v_max - T) == anchor` |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{digest_parts, to_canonical_bytes, Hash32};

/// Domain tag prepended at every hop.
pub const LADDER_TAG: &[u8] = b"ladder:";
/// Widest allowed `v_max - v_min`.
pub const MAX_LADDER_SPAN: i64 = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LadderError {
    #[error("value {value} outside ladder range [{v_min}, {v_max}]")]
    OutOfRange { value: i64, v_min: i64, v_max: i64 },
    #[error("ladder span {0} exceeds {MAX_LADDER_SPAN}")]
    SpanTooWide(i64),
    #[error("predicate does not hold")]
    Unsatisfiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Gte,
    Lte,
}

impl Direction {
    pub fn holds(self, value: i64, threshold: i64) -> bool {
        match self {
            Direction::Gte => value >= threshold,
            Direction::Lte => value <= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Direction::Gte => ">=",
            Direction::Lte => "<=",
        }
    }
}

/// `n`-fold application of `H("ladder:" || x)`; `chain(s, 0) == s`.
pub fn chain(seed: &Hash32, n: u32) -> Hash32 {
    assert!(i64::from(n) <= MAX_LADDER_SPAN, "ladder length {n} exceeds {MAX_LADDER_SPAN}");
    (0..n).fold(*seed, |acc, _| digest_parts(&[LADDER_TAG, acc.as_bytes()]))
}

/// The public end of a ladder, committed inside a claim's Merkle leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LadderAnchor {
    pub direction: Direction,
    pub v_min: i64,
    pub v_max: i64,
    pub anchor: Hash32,
}

#[derive(Serialize)]
struct AnchorEncoding<'a> {
    claim: &'a str,
    direction: Direction,
    v_min: i64,
    v_max: i64,
    anchor: &'a Hash32,
}

fn check_range(value: i64, v_min: i64, v_max: i64) -> Result<(), LadderError> {
    if v_max < v_min || v_max - v_min > MAX_LADDER_SPAN {
        return Err(LadderError::SpanTooWide(v_max.saturating_sub(v_min)));
    }
    if value < v_min || value > v_max {
        return Err(LadderError::OutOfRange { value, v_min, v_max });
    }
    Ok(())
}

impl LadderAnchor {
    pub fn commit(direction: Direction, v_min: i64, v_max: i64, value: i64, seed: &Hash32) -> Result<Self, LadderError> {
        check_range(value, v_min, v_max)?;
        let distance = match direction {
            Direction::Gte => value - v_min,
            Direction::Lte => v_max - value,
        };
        Ok(LadderAnchor { direction, v_min, v_max, anchor: chain(seed, distance as u32) })
    }

    /// Bytes folded into the claim's leaf hash. The claim name is included so
    /// an anchor cannot be replayed under another claim.
    pub fn leaf_bytes(&self, claim: &str) -> Vec<u8> {
        to_canonical_bytes(&AnchorEncoding {
            claim,
            direction: self.direction,
            v_min: self.v_min,
            v_max: self.v_max,
            anchor: &self.anchor,
        })
        .expect("anchors are always encodable")
    }

    /// Witness proving `value <direction> threshold`. Only the seed holder can
    /// compute it, and only when the predicate holds.
    pub fn witness(&self, seed: &Hash32, value: i64, threshold: i64) -> Result<Hash32, LadderError> {
        check_range(value, self.v_min, self.v_max)?;
        if threshold < self.v_min || threshold > self.v_max || !self.direction.holds(value, threshold) {
            return Err(LadderError::Unsatisfiable);
        }
        let hops = match self.direction {
            Direction::Gte => value - threshold,
            Direction::Lte => threshold - value,
        };
        Ok(chain(seed, hops as u32))
    }

    /// Checks a witness against this anchor with exactly the hop count the
    /// threshold determines.
    pub fn verify(&self, threshold: i64, witness: &Hash32) -> bool {
        if self.v_max < self.v_min
            || self.v_max - self.v_min > MAX_LADDER_SPAN
            || threshold < self.v_min
            || threshold > self.v_max
        {
            return false;
        }
        let hops = match self.direction {
            Direction::Gte => threshold - self.v_min,
            Direction::Lte => self.v_max - threshold,
        };
        chain(witness, hops as u32) == self.anchor
    }
}
