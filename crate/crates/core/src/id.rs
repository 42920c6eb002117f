//! Element identities and opaque payloads.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Length in bytes of an [`ElementId`] digest.
pub const DIGEST_LEN: usize = 32;

/// Identity of a poset element: a 32-byte SHA-256 digest.
///
/// Ordering is lexicographic over the digest bytes, which is the order used
/// for canonical encodings and for hash-based tie breaking.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementId(pub [u8; DIGEST_LEN]);

impl ElementId {
    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }

    /// First eight hex characters, for logs.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ElementId({})", self.short())
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for ElementId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ElementId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ElementId::from_hex(&s).ok_or_else(|| serde::de::Error::custom("invalid element id"))
    }
}

/// Application content of a poset element.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Payload(pub Vec<u8>);

impl Payload {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for Payload {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl From<String> for Payload {
    fn from(s: String) -> Self {
        Self(s.into_bytes())
    }
}

impl From<&[u8]> for Payload {
    fn from(b: &[u8]) -> Self {
        Self(b.to_vec())
    }
}

impl From<Vec<u8>> for Payload {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| !c.is_control()) => write!(f, "Payload({s:?})"),
            _ => write!(f, "Payload(0x{})", hex::encode(&self.0)),
        }
    }
}

/// The universe of valid payloads an object is built over.
///
/// Holds the pre-shared genesis payload and the validity predicate that
/// decides membership of a payload in the universe.
#[derive(Clone)]
pub struct Universe {
    genesis: Payload,
    validator: fn(&Payload) -> bool,
}

fn accept_all(_: &Payload) -> bool {
    true
}

impl Universe {
    /// Universe accepting every payload.
    pub fn new(genesis: impl Into<Payload>) -> Self {
        Self {
            genesis: genesis.into(),
            validator: accept_all,
        }
    }

    pub fn with_validator(genesis: impl Into<Payload>, validator: fn(&Payload) -> bool) -> Self {
        Self {
            genesis: genesis.into(),
            validator,
        }
    }

    pub fn genesis(&self) -> &Payload {
        &self.genesis
    }

    pub fn is_valid(&self, payload: &Payload) -> bool {
        (self.validator)(payload)
    }
}

impl fmt::Debug for Universe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Universe")
            .field("genesis", &self.genesis)
            .finish_non_exhaustive()
    }
}
