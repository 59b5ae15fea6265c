// SPDX-License-Identifier: Apache-2.0

//! Client-side agent: owns a wallet and turns user intents into signed
//! Core Service requests. Keys never leave it.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use crate::codec::HexBytes;
use crate::crypto::Keypair;
use crate::error::{Error, Result};
use crate::identity::{present, Did, Presentation, Wallet, MEMBER_SCHEMA};
use crate::ledger::ProposalHeader;
use crate::service::{push_call, Ballot, MemberKind, OnboardRequest, Onboarded, PushRequest, QueryRequest, Request, VoteId};

/// Attributes revealed in membership presentations.
pub const DISCLOSED: [&str; 1] = ["kind"];

#[derive(Debug, Clone)]
pub struct ClientAgent {
    wallet: Wallet,
    did: Did,
    last_ts: u64,
}

impl ClientAgent {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut wallet = Wallet::new();
        let (did, _) = wallet.create_did(rng);
        ClientAgent { wallet, did, last_ts: 0 }
    }

    pub fn from_wallet(wallet: Wallet) -> Result<Self> {
        let did = wallet.primary().cloned().ok_or_else(|| Error::InvalidRequest("wallet has no did".into()))?;
        Ok(ClientAgent { wallet, did, last_ts: 0 })
    }

    pub fn did(&self) -> &Did {
        &self.did
    }

    pub fn wallet(&self) -> &Wallet {
        &self.wallet
    }

    fn key(&self) -> &Keypair {
        self.wallet.key(&self.did).expect("primary key present")
    }

    pub fn is_member(&self) -> bool {
        self.wallet.credential(&self.did, MEMBER_SCHEMA).is_some()
    }

    /// Strictly increasing timestamps keep tx ids distinct.
    fn stamp(&mut self, ts: u64) -> u64 {
        self.last_ts = ts.max(self.last_ts + 1);
        self.last_ts
    }

    pub fn onboard_request(&self, kind: MemberKind, name: &str) -> Request {
        Request::Onboard(OnboardRequest {
            kind,
            name: name.to_string(),
            did: self.did.clone(),
            verkey: self.key().public(),
        })
    }

    pub fn accept_onboarding(&mut self, resp: Onboarded) -> Result<()> {
        if resp.did != self.did || resp.credential.subject != self.did {
            return Err(Error::InvalidRequest("credential issued to another did".into()));
        }
        self.wallet.store_credential(resp.credential);
        Ok(())
    }

    /// Opens a pairwise relationship with a node agent.
    pub fn connect_request<R: RngCore + CryptoRng>(&mut self, agent: &Did, rng: &mut R) -> Request {
        let did = self.wallet.pairwise_did(agent, rng);
        let verkey = self.wallet.key(&did).expect("just created").public();
        Request::Connect { did, verkey }
    }

    fn presentation(&self, nonce: &str) -> Option<Presentation> {
        let vc = self.wallet.credential(&self.did, MEMBER_SCHEMA)?;
        present(vc, self.key(), &DISCLOSED, nonce).ok()
    }

    pub fn push_request(
        &mut self,
        key: &str,
        payload: Vec<u8>,
        metadata: BTreeMap<String, String>,
        private: bool,
        cas: bool,
        timestamp: u64,
    ) -> PushRequest {
        let (chaincode, function, args) = push_call(key, &payload, &metadata, private, cas);
        let header = ProposalHeader { chaincode, function, args, client: self.did.clone(), timestamp: self.stamp(timestamp) };
        let client_signature = self.key().sign(&header.signing_bytes());
        let presentation = self.presentation(&header.tx_id().to_string());
        PushRequest {
            key: key.to_string(),
            payload: HexBytes(payload),
            metadata,
            private,
            cas,
            header,
            client_signature,
            presentation,
        }
    }

    pub fn cast_vote(&mut self, vote: &VoteId, choice: &str, timestamp: u64) -> PushRequest {
        let payload = Ballot { choice: choice.to_string() }.to_payload();
        self.push_request(&vote.to_string(), payload, BTreeMap::new(), true, true, timestamp)
    }

    pub fn query_request(&mut self, key: &str, private: bool, timestamp: u64) -> QueryRequest {
        let timestamp = self.stamp(timestamp);
        let signature = self.key().sign(&QueryRequest::signing_bytes(key, private, &self.did, timestamp));
        let presentation = self.presentation(&QueryRequest::nonce(key, private, &self.did, timestamp));
        QueryRequest { key: key.to_string(), private, client: self.did.clone(), timestamp, signature, presentation }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn push_request_is_self_consistent() {
        let mut a = ClientAgent::new(&mut ChaCha20Rng::seed_from_u64(1));
        let r = a.push_request("k", b"x".to_vec(), BTreeMap::new(), false, true, 5);
        r.check().unwrap();
        let vote = a.cast_vote(&VoteId::new("p", "v").unwrap(), "A", 5);
        vote.check().unwrap();
        assert!(vote.header.timestamp > r.header.timestamp);
        assert!(vote.presentation.is_none());
    }

    #[test]
    fn tampered_request_fails_check() {
        let mut a = ClientAgent::new(&mut ChaCha20Rng::seed_from_u64(1));
        let mut r = a.push_request("k", b"x".to_vec(), BTreeMap::new(), false, true, 5);
        r.payload = HexBytes(b"y".to_vec());
        assert!(r.check().is_err());
    }
}
