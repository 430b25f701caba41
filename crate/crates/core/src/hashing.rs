//! SHA-256 digests and the canonical JSON form used for all hashing.
//!
//! Canonical form: object keys sorted lexicographically, no insignificant
//! whitespace, byte strings as lowercase hex, integers unquoted. Every
//! digest in the system is SHA-256 over the UTF-8 bytes of a canonical
//! serialization, so two implementations that agree on the canonical form
//! agree on every hash.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use std::fmt;

/// A 32-byte SHA-256 digest, serialized as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let bytes = hex::decode(s)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| hex::FromHexError::InvalidStringLength)?;
        Ok(Digest(arr))
    }

    /// Big-endian integer view of the first 8 bytes, used for modular
    /// index selection.
    pub fn prefix_u64(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().expect("digest has 32 bytes"))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", &self.to_hex()[..8])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(|e| D::Error::custom(format!("bad digest hex: {e}")))
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(bytes);
    Digest(h.finalize().into())
}

pub fn sha256_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Canonical JSON text of any serializable value.
///
/// Routing through `serde_json::Value` sorts object keys at every level
/// (the map is BTree-backed) and `to_string` emits no whitespace. Floats
/// use the shortest round-trip representation, so parse-then-serialize is
/// byte-identical.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value must serialize to JSON");
    v.to_string()
}

/// SHA-256 of the canonical JSON form of `value`.
pub fn hash_canonical<T: Serialize>(value: &T) -> Digest {
    sha256(canonical_json(value).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Unordered {
        zeta: u64,
        alpha: &'static str,
        mid: Vec<u64>,
    }

    #[test]
    fn canonical_json_sorts_keys_and_strips_whitespace() {
        let v = Unordered {
            zeta: 7,
            alpha: "x",
            mid: vec![1, 2],
        };
        assert_eq!(canonical_json(&v), r#"{"alpha":"x","mid":[1,2],"zeta":7}"#);
    }

    #[test]
    fn canonical_json_round_trips_floats() {
        let v = serde_json::json!({"a": 0.1, "b": 1.0e-9, "c": 12345.6789});
        let s1 = canonical_json(&v);
        let reparsed: serde_json::Value = serde_json::from_str(&s1).unwrap();
        assert_eq!(s1, canonical_json(&reparsed));
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = sha256(b"abc");
        // FIPS 180-2 test vector for SHA-256("abc").
        assert_eq!(
            d.to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
    }

    #[test]
    fn prefix_u64_is_big_endian() {
        let mut bytes = [0u8; 32];
        bytes[7] = 1;
        assert_eq!(Digest(bytes).prefix_u64(), 1);
        bytes[0] = 1;
        assert_eq!(Digest(bytes).prefix_u64(), (1 << 56) + 1);
    }
}
