// SPDX-License-Identifier: Apache-2.0

//! Ed25519 keys and signatures with hex wire encoding.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Deterministic RNG for one purpose of one run: ChaCha20 keyed by
/// SHA-256 of `(seed, label, index)`.
pub fn derive_rng(seed: u64, label: &str, index: u64) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    let key = crate::codec::sha256_concat(&[&seed.to_be_bytes(), label.as_bytes(), &index.to_be_bytes()]);
    rand_chacha::ChaCha20Rng::from_seed(*key.as_bytes())
}

/// Ed25519 signing keypair. Deliberately not `Serialize`: secret material only
/// leaves memory through [`Keypair::secret_bytes`], which the wallet file uses.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl Keypair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_secret(&seed)
    }

    pub fn from_secret(seed: &[u8; 32]) -> Self {
        Keypair { signing: SigningKey::from_bytes(seed) }
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Keypair({})", self.public())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Codec("public key must be 32 bytes".into()))?;
        VerifyingKey::from_bytes(&arr)
            .map(PublicKey)
            .map_err(|e| Error::Codec(format!("invalid public key: {e}")))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Codec(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        self.0.verify(msg, &sig).is_ok()
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.as_bytes()))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_string()[..16])
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PublicKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Codec(e.to_string()))?;
        let arr: [u8; 64] = bytes
            .try_into()
            .map_err(|_| Error::Codec("signature must be 64 bytes".into()))?;
        Ok(Signature(arr))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &self.to_hex()[..12])
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Signature::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_and_bit_flip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = Keypair::generate(&mut rng);
        let sig = kp.sign(b"payload");
        assert!(kp.public().verify(b"payload", &sig));
        assert!(!kp.public().verify(b"payloaD", &sig));
        let mut bad = sig;
        bad.0[10] ^= 0x01;
        assert!(!kp.public().verify(b"payload", &bad));
    }

    #[test]
    fn serde_round_trip() {
        let kp = Keypair::from_secret(&[7u8; 32]);
        let pk = kp.public();
        let s = serde_json::to_string(&pk).unwrap();
        let back: PublicKey = serde_json::from_str(&s).unwrap();
        assert_eq!(back, pk);
        let sig = kp.sign(b"x");
        let s = serde_json::to_string(&sig).unwrap();
        assert_eq!(serde_json::from_str::<Signature>(&s).unwrap(), sig);
    }
}
