//! Deterministic byte encoding and hashing.
//!
//! Every signature and commitment in this crate is computed over the output of
//! [`canonicalize`]. The format is a strict subset of JSON:
//!
//! * maps are serialized with keys sorted by UTF-8 byte order,
//! * no insignificant whitespace,
//! * integers in minimal base-10 with an optional leading `-`,
//! * `true` / `false` / `null`,
//! * strings escape only `"`, `\` and control characters (as `\u00xx`),
//! * dates as `"YYYY-MM-DD"`.
//!
//! Floating-point numbers are not representable and are rejected on input.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Identifier of the hash used for commitments, ladders and chaining.
pub const HASH_ALGORITHM: &str = "sha-256";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("malformed value: {0}")]
    MalformedValue(String),
}

/// A value that has exactly one byte representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalValue {
    Null,
    Bool(bool),
    Integer(i64),
    Text(String),
    Date(NaiveDate),
    List(Vec<CanonicalValue>),
    Map(BTreeMap<String, CanonicalValue>),
}

impl CanonicalValue {
    /// Builds a date from its `YYYY-MM-DD` form, rejecting impossible calendar dates.
    pub fn date(s: &str) -> Result<Self, EncodingError> {
        parse_date(s).map(CanonicalValue::Date)
    }

    pub fn text(s: impl Into<String>) -> Self {
        CanonicalValue::Text(s.into())
    }

    /// Map built from `(key, value)` pairs; a repeated key is a malformed value.
    pub fn map<K, I>(entries: I) -> Result<Self, EncodingError>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, CanonicalValue)>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in entries {
            let k = k.into();
            if map.contains_key(&k) {
                return Err(EncodingError::MalformedValue(format!("duplicate key {k:?}")));
            }
            map.insert(k, v);
        }
        Ok(CanonicalValue::Map(map))
    }

    /// Equality up to the one ambiguity of the byte format: a date and the text
    /// of that date encode identically.
    pub fn semantic_eq(&self, other: &CanonicalValue) -> bool {
        use CanonicalValue::*;
        match (self, other) {
            (Date(d), Text(t)) | (Text(t), Date(d)) => d.format("%Y-%m-%d").to_string() == *t,
            (List(a), List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.semantic_eq(y)),
            (Map(a), Map(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|((ka, va), (kb, vb))| ka == kb && va.semantic_eq(vb))
            }
            _ => self == other,
        }
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate, EncodingError> {
    let b = s.as_bytes();
    let shaped = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shaped {
        return Err(EncodingError::MalformedValue(format!("invalid date {s:?}")));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| EncodingError::MalformedValue(format!("invalid date {s:?}")))
}

/// Serializes `value` into its unique byte form.
pub fn canonicalize(value: &CanonicalValue) -> Vec<u8> {
    let mut out = Vec::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &CanonicalValue, out: &mut Vec<u8>) {
    match value {
        CanonicalValue::Null => out.extend_from_slice(b"null"),
        CanonicalValue::Bool(true) => out.extend_from_slice(b"true"),
        CanonicalValue::Bool(false) => out.extend_from_slice(b"false"),
        CanonicalValue::Integer(i) => out.extend_from_slice(i.to_string().as_bytes()),
        CanonicalValue::Text(s) => write_str(s, out),
        CanonicalValue::Date(d) => {
            out.push(b'"');
            out.extend_from_slice(d.format("%Y-%m-%d").to_string().as_bytes());
            out.push(b'"');
        }
        CanonicalValue::List(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        CanonicalValue::Map(map) => {
            // BTreeMap<String, _> iterates in byte order of the UTF-8 keys.
            out.push(b'{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_str(k, out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
    }
}

fn write_str(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for &byte in s.as_bytes() {
        match byte {
            b'"' => out.extend_from_slice(b"\\\""),
            b'\\' => out.extend_from_slice(b"\\\\"),
            0x00..=0x1f => out.extend_from_slice(format!("\\u{byte:04x}").as_bytes()),
            _ => out.push(byte),
        }
    }
    out.push(b'"');
}

/// Parses JSON bytes into a value. Strings come back as text, including
/// strings that happen to look like dates (see [`CanonicalValue::semantic_eq`]).
pub fn parse(bytes: &[u8]) -> Result<CanonicalValue, EncodingError> {
    std::str::from_utf8(bytes).map_err(|e| EncodingError::MalformedValue(e.to_string()))?;
    let json: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| EncodingError::MalformedValue(e.to_string()))?;
    CanonicalValue::try_from(json)
}

impl TryFrom<serde_json::Value> for CanonicalValue {
    type Error = EncodingError;

    fn try_from(json: serde_json::Value) -> Result<Self, Self::Error> {
        use serde_json::Value;
        Ok(match json {
            Value::Null => CanonicalValue::Null,
            Value::Bool(b) => CanonicalValue::Bool(b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => CanonicalValue::Integer(i),
                None => {
                    return Err(EncodingError::MalformedValue(format!(
                        "number {n} is not a signed 64-bit integer"
                    )))
                }
            },
            Value::String(s) => CanonicalValue::Text(s),
            Value::Array(items) => CanonicalValue::List(
                items.into_iter().map(CanonicalValue::try_from).collect::<Result<_, _>>()?,
            ),
            Value::Object(obj) => CanonicalValue::Map(
                obj.into_iter()
                    .map(|(k, v)| Ok((k, CanonicalValue::try_from(v)?)))
                    .collect::<Result<_, EncodingError>>()?,
            ),
        })
    }
}

impl From<&CanonicalValue> for serde_json::Value {
    fn from(v: &CanonicalValue) -> Self {
        use serde_json::Value;
        match v {
            CanonicalValue::Null => Value::Null,
            CanonicalValue::Bool(b) => Value::Bool(*b),
            CanonicalValue::Integer(i) => Value::from(*i),
            CanonicalValue::Text(s) => Value::String(s.clone()),
            CanonicalValue::Date(d) => Value::String(d.format("%Y-%m-%d").to_string()),
            CanonicalValue::List(items) => Value::Array(items.iter().map(Value::from).collect()),
            CanonicalValue::Map(m) => {
                Value::Object(m.iter().map(|(k, v)| (k.clone(), Value::from(v))).collect())
            }
        }
    }
}

impl Serialize for CanonicalValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde_json::Value::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CanonicalValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(d)?;
        CanonicalValue::try_from(json).map_err(serde::de::Error::custom)
    }
}

/// Converts any serializable structure into its canonical value.
pub fn to_canonical_value<T: Serialize + ?Sized>(value: &T) -> Result<CanonicalValue, EncodingError> {
    let json = serde_json::to_value(value).map_err(|e| EncodingError::MalformedValue(e.to_string()))?;
    CanonicalValue::try_from(json)
}

/// Canonical bytes of any serializable structure. This is the wire and signing form.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, EncodingError> {
    to_canonical_value(value).map(|v| canonicalize(&v))
}

/// Decodes `bytes`, accepting them only if they are exactly the canonical
/// encoding of the decoded value. Unknown fields, other spellings of the same
/// value and stray whitespace are all rejected.
pub fn from_canonical_bytes<T: DeserializeOwned + Serialize>(bytes: &[u8]) -> Result<T, EncodingError> {
    let value: T = serde_json::from_slice(bytes).map_err(|e| EncodingError::MalformedValue(e.to_string()))?;
    if to_canonical_bytes(&value)? != bytes {
        return Err(EncodingError::MalformedValue("input is not in canonical form".into()));
    }
    Ok(value)
}

/// SHA-256.
pub fn digest(bytes: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(bytes).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn digest_parts(parts: &[&[u8]]) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash32(h.finalize().into())
}

macro_rules! hex_bytes_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, EncodingError> {
                let mut out = [0u8; $len];
                hex::decode_to_slice(s, &mut out)
                    .map_err(|e| EncodingError::MalformedValue(format!("{}: {e}", stringify!($name))))?;
                Ok($name(out))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes_newtype!(
    /// A 32-byte SHA-256 output, hex-encoded on the wire.
    Hash32,
    32
);
hex_bytes_newtype!(
    /// A 64-byte Ed25519 signature.
    Signature64,
    64
);
hex_bytes_newtype!(
    /// 16-byte verifier challenge.
    Nonce,
    16
);
hex_bytes_newtype!(Salt, 32);
hex_bytes_newtype!(
    /// Ed25519 public key bytes.
    PublicKey,
    32
);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0u8; 32]);
}

impl Nonce {
    pub fn random() -> Self {
        Nonce(rand::random())
    }
}

impl Salt {
    pub fn random() -> Self {
        Salt(rand::random())
    }
}
