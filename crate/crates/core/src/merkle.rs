//! Binary Merkle tree over claim leaves.
//!
//! Interior nodes are `H(0x01 || left || right)`; leaf hashing (with its `0x00`
//! prefix) is done by the caller. A node without a sibling on its level is
//! promoted unchanged, so paths may be shorter than the tree height.

use serde::{Deserialize, Serialize};

use crate::canonical::{digest_parts, Hash32};

pub const LEAF_PREFIX: u8 = 0x00;
pub const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One level of an inclusion proof: the sibling hash and which side it sits on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub sibling: Hash32,
    pub side: Side,
}

pub type MerklePath = Vec<PathStep>;

pub fn node_hash(left: &Hash32, right: &Hash32) -> Hash32 {
    digest_parts(&[&[NODE_PREFIX], left.as_bytes(), right.as_bytes()])
}

fn next_level(level: &[Hash32]) -> Vec<Hash32> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_hash(l, r),
            [single] => *single,
            _ => unreachable!(),
        })
        .collect()
}

/// Root over `leaves` in the given order. The empty tree has root zero.
pub fn root(leaves: &[Hash32]) -> Hash32 {
    if leaves.is_empty() {
        return Hash32::ZERO;
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

/// Inclusion path for the leaf at `index`, or `None` if out of range.
pub fn path(leaves: &[Hash32], mut index: usize) -> Option<MerklePath> {
    if index >= leaves.len() {
        return None;
    }
    let mut steps = Vec::new();
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        let sibling = index ^ 1;
        if sibling < level.len() {
            let side = if sibling < index { Side::Left } else { Side::Right };
            steps.push(PathStep { sibling: level[sibling], side });
        }
        level = next_level(&level);
        index /= 2;
    }
    Some(steps)
}

pub fn root_from_path(leaf: &Hash32, path: &[PathStep]) -> Hash32 {
    path.iter().fold(*leaf, |acc, step| match step.side {
        Side::Left => node_hash(&step.sibling, &acc),
        Side::Right => node_hash(&acc, &step.sibling),
    })
}

pub fn verify_path(leaf: &Hash32, path: &[PathStep], expected_root: &Hash32) -> bool {
    root_from_path(leaf, path) == *expected_root
}
