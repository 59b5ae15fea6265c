// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec;
use crate::crypto::{Keypair, PublicKey};
use crate::error::{Error, Result};

const DID_PREFIX: &str = "did:deon:";

/// `did:deon:<base58 of the first 16 bytes of SHA-256(public key)>`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Did(String);

impl Did {
    pub fn from_public_key(pk: &PublicKey) -> Did {
        let digest = codec::sha256(pk.as_bytes());
        Did(format!("{DID_PREFIX}{}", bs58::encode(&digest.0[..16]).into_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True if this did is the one derived from `pk`.
    pub fn is_bound_to(&self, pk: &PublicKey) -> bool {
        *self == Did::from_public_key(pk)
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({})", self.0)
    }
}

impl FromStr for Did {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix(DID_PREFIX)
            .ok_or_else(|| Error::InvalidRequest(format!("malformed did: {s}")))?;
        let decoded = bs58::decode(body)
            .into_vec()
            .map_err(|_| Error::InvalidRequest(format!("malformed did: {s}")))?;
        // Reject non-canonical encodings so parse/format round-trips exactly.
        if decoded.len() != 16 || bs58::encode(&decoded).into_string() != body {
            return Err(Error::InvalidRequest(format!("malformed did: {s}")));
        }
        Ok(Did(s.to_string()))
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DidDocument {
    pub id: Did,
    pub verkey: PublicKey,
    pub service_endpoint: String,
}

/// Fresh Ed25519 keypair and the did derived from it.
pub fn create_did<R: RngCore + CryptoRng>(rng: &mut R) -> (Did, Keypair, DidDocument) {
    let kp = Keypair::generate(rng);
    let did = Did::from_public_key(&kp.public());
    let doc = DidDocument { id: did.clone(), verkey: kp.public(), service_endpoint: String::new() };
    (did, kp, doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn distinct_and_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (a, ka, doc) = create_did(&mut rng);
        let (b, _, _) = create_did(&mut rng);
        assert_ne!(a, b);
        assert_eq!(a.to_string().parse::<Did>().unwrap(), a);
        assert!(a.as_str().starts_with("did:deon:"));
        let sig = ka.sign(b"hello");
        assert!(doc.verkey.verify(b"hello", &sig));
        assert!(a.is_bound_to(&doc.verkey));
    }

    #[test]
    fn rejects_malformed() {
        assert!("did:web:abc".parse::<Did>().is_err());
        assert!("did:deon:0OIl".parse::<Did>().is_err());
        assert!("did:deon:2".parse::<Did>().is_err());
    }
}
