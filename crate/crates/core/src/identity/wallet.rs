// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use super::credential::VerifiableCredential;
use super::did::{create_did, Did, DidDocument};
use crate::crypto::{Keypair, Signature};
use crate::error::{Error, Result};

/// Per-holder store of keys, dids and credentials. Not `Serialize`; the CLI
/// persists it through its own encrypted file format.
#[derive(Debug, Clone, Default)]
pub struct Wallet {
    keys: BTreeMap<Did, Keypair>,
    primary: Option<Did>,
    /// peer did -> our pairwise did for that relationship
    pairwise: BTreeMap<Did, Did>,
    credentials: Vec<VerifiableCredential>,
}

impl Wallet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a did; the first one created becomes the primary did.
    pub fn create_did<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> (Did, DidDocument) {
        let (did, kp, doc) = create_did(rng);
        self.keys.insert(did.clone(), kp);
        if self.primary.is_none() {
            self.primary = Some(did.clone());
        }
        (did, doc)
    }

    pub fn import(&mut self, kp: Keypair) -> Did {
        let did = Did::from_public_key(&kp.public());
        self.keys.insert(did.clone(), kp);
        if self.primary.is_none() {
            self.primary = Some(did.clone());
        }
        did
    }

    /// The did reserved for the relationship with `peer`; created on first use.
    pub fn pairwise_did<R: RngCore + CryptoRng>(&mut self, peer: &Did, rng: &mut R) -> Did {
        if let Some(d) = self.pairwise.get(peer) {
            return d.clone();
        }
        let (did, kp, _) = create_did(rng);
        self.keys.insert(did.clone(), kp);
        self.pairwise.insert(peer.clone(), did.clone());
        did
    }

    pub fn pairwise(&self) -> &BTreeMap<Did, Did> {
        &self.pairwise
    }

    /// Restores a pairwise relationship whose key was already imported.
    pub fn link_pairwise(&mut self, peer: Did, ours: Did) -> Result<()> {
        if !self.keys.contains_key(&ours) {
            return Err(Error::NotFound(format!("no key for {ours} in wallet")));
        }
        self.pairwise.insert(peer, ours);
        Ok(())
    }

    pub fn primary(&self) -> Option<&Did> {
        self.primary.as_ref()
    }

    pub fn key(&self, did: &Did) -> Option<&Keypair> {
        self.keys.get(did)
    }

    pub fn keys(&self) -> impl Iterator<Item = (&Did, &Keypair)> {
        self.keys.iter()
    }

    pub fn sign(&self, did: &Did, msg: &[u8]) -> Result<Signature> {
        self.keys
            .get(did)
            .map(|k| k.sign(msg))
            .ok_or_else(|| Error::NotFound(format!("no key for {did} in wallet")))
    }

    pub fn store_credential(&mut self, vc: VerifiableCredential) {
        self.credentials.push(vc);
    }

    pub fn credentials(&self) -> &[VerifiableCredential] {
        &self.credentials
    }

    pub fn credential(&self, subject: &Did, schema: &str) -> Option<&VerifiableCredential> {
        self.credentials.iter().rev().find(|c| c.subject == *subject && c.schema == schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pairwise_dids_distinct_and_stable() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut w = Wallet::new();
        let (me, _) = w.create_did(&mut rng);
        let (a, _, _) = create_did(&mut rng);
        let (b, _, _) = create_did(&mut rng);
        let pa = w.pairwise_did(&a, &mut rng);
        let pb = w.pairwise_did(&b, &mut rng);
        assert_ne!(pa, pb);
        assert_ne!(pa, me);
        assert_eq!(w.pairwise_did(&a, &mut rng), pa);
        assert_eq!(w.primary(), Some(&me));
        assert!(w.sign(&pa, b"x").is_ok());
    }
}
