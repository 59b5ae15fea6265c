// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::chaincode::{Registry, Stub};
use super::journal::Journal;
use super::policy::{evaluate_policy, EndorsementPolicy};
use super::state::{PrivateStore, TransientStore, WorldState};
use super::tx::{
    endorsement_message, Block, Endorsement, OrderedBlock, Proposal, ProposalResponse, TransactionEnvelope, TxId,
    ValidationFlag, Version,
};
use crate::codec::{Hash32, HexBytes};
use crate::crypto::{Keypair, PublicKey};
use crate::error::{Error, Result};
use crate::identity::{IdentityLedger, Verifier, MEMBER_SCHEMA};
use crate::par;

/// Collection name -> member orgs.
pub type Collections = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone)]
pub struct PeerConfig {
    pub org: String,
    pub policy: EndorsementPolicy,
    pub collections: Collections,
    pub org_keys: BTreeMap<String, PublicKey>,
}

/// Work done while endorsing, for cost accounting.
#[derive(Debug, Clone, Copy, Default)]
pub struct EndorseStats {
    pub presentation_checked: bool,
    pub private_writes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CommitReport {
    pub number: u64,
    pub results: Vec<(TxId, ValidationFlag)>,
    pub writes: usize,
    pub signature_checks: usize,
    pub private_installed: usize,
    /// Private writes this member node could not install (no endorsement-time
    /// record, or record not matching the commitment).
    pub private_missing: Vec<(TxId, String)>,
}

/// The ledger half of a node: endorsement, validation, world state and
/// private data for one organization.
#[derive(Debug)]
pub struct Peer {
    cfg: PeerConfig,
    key: Keypair,
    chaincodes: Registry,
    pub state: WorldState,
    pub private: PrivateStore,
    transient: TransientStore,
    journal: Journal,
    last_header: Option<Hash32>,
    committed: HashMap<TxId, (u64, ValidationFlag)>,
}

impl Peer {
    pub fn new(cfg: PeerConfig, key: Keypair, chaincodes: Registry, journal: Journal) -> Self {
        Peer {
            cfg,
            key,
            chaincodes,
            state: WorldState::default(),
            private: PrivateStore::default(),
            transient: TransientStore::default(),
            journal,
            last_header: None,
            committed: HashMap::new(),
        }
    }

    pub fn org(&self) -> &str {
        &self.cfg.org
    }

    pub fn config(&self) -> &PeerConfig {
        &self.cfg
    }

    pub fn height(&self) -> u64 {
        self.journal.len() as u64
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn journal_mut(&mut self) -> &mut Journal {
        &mut self.journal
    }

    pub fn is_member(&self, collection: &str) -> bool {
        self.cfg.collections.get(collection).is_some_and(|m| m.contains(&self.cfg.org))
    }

    pub fn tx_status(&self, tx: &TxId) -> Option<(u64, ValidationFlag)> {
        self.committed.get(tx).copied()
    }

    /// Simulates a proposal against the current state and signs the result.
    /// Never mutates world state; private records go to the transient store
    /// when this org is a collection member.
    pub fn endorse(
        &mut self,
        proposal: &Proposal,
        identities: &IdentityLedger,
        verifier: &mut Verifier,
    ) -> Result<(ProposalResponse, EndorseStats)> {
        let tx_id = proposal.header.tx_id();
        let mut stats = EndorseStats::default();
        let client = &proposal.header.client;
        stats.presentation_checked = !verifier.is_cached_member(client, MEMBER_SCHEMA);
        verifier
            .verify_transactor(
                identities,
                client,
                &proposal.client_signature,
                &proposal.header.signing_bytes(),
                MEMBER_SCHEMA,
                proposal.presentation.as_ref(),
                &tx_id.to_string(),
            )
            .map_err(|r| Error::IdentityRejected(r.to_string()))?;

        let cc = self.chaincodes.get(&proposal.header.chaincode)?.clone();
        let mut stub = Stub::new(&self.state, &self.private, &proposal.transient);
        let response = cc.invoke(&mut stub, &proposal.header.function, &proposal.header.args)?;
        let (rwset, pending) = stub.into_results();
        stats.private_writes = pending.len();

        let mine: Vec<_> = pending.into_iter().filter(|p| self.is_member(&p.collection)).collect();
        if !mine.is_empty() {
            self.transient.insert(tx_id, mine);
        }
        let signature = self.key.sign(&endorsement_message(&tx_id, &rwset, &response));
        Ok((
            ProposalResponse {
                tx_id,
                rwset,
                response: HexBytes(response),
                endorsement: Endorsement { org: self.cfg.org.clone(), signature },
            },
            stats,
        ))
    }

    /// Read-only chaincode call against committed state and the local
    /// private store.
    pub fn query(&self, chaincode: &str, function: &str, args: &[String]) -> Result<Vec<u8>> {
        let cc = self.chaincodes.get(chaincode)?;
        if !cc.is_query(function) {
            return Err(Error::InvalidRequest(format!("{chaincode}.{function} is not a query")));
        }
        let empty = BTreeMap::new();
        let mut stub = Stub::new(&self.state, &self.private, &empty);
        cc.invoke(&mut stub, function, args)
    }

    /// Validates an ordered block transaction by transaction and commits it.
    pub fn validate_and_commit(&mut self, block: OrderedBlock, identities: &IdentityLedger) -> Result<CommitReport> {
        let header = block.header;
        if header.number != self.height() {
            return Err(Error::ChainIntegrity(format!(
                "block {} offered at height {}",
                header.number,
                self.height()
            )));
        }
        if header.prev_hash != self.last_header.unwrap_or(Hash32::ZERO) {
            return Err(Error::ChainIntegrity(format!("block {} prev_hash mismatch", header.number)));
        }
        if header.data_hash != super::tx::data_hash(&block.txs) {
            return Err(Error::ChainIntegrity(format!("block {} data_hash mismatch", header.number)));
        }

        // Signature and policy checks are independent per tx.
        let cfg = &self.cfg;
        let sig_policy: Vec<Option<ValidationFlag>> = par::map(&block.txs, |env| {
            if !client_signature_ok(env, identities) {
                Some(ValidationFlag::SigFail)
            } else if !evaluate_policy(env, &cfg.policy, &cfg.org_keys) {
                Some(ValidationFlag::PolicyFail)
            } else {
                None
            }
        });

        let mut report = CommitReport { number: header.number, ..CommitReport::default() };
        let mut flags = Vec::with_capacity(block.txs.len());
        let mut seen_in_block = BTreeSet::new();
        for (i, env) in block.txs.iter().enumerate() {
            report.signature_checks += 1 + env.endorsements.len();
            let flag = if self.committed.contains_key(&env.tx_id) || !seen_in_block.insert(env.tx_id) {
                ValidationFlag::DuplicateTxid
            } else if let Some(f) = sig_policy[i] {
                f
            } else if !reads_current(env, &self.state) {
                ValidationFlag::MvccConflict
            } else {
                ValidationFlag::Valid
            };
            if flag == ValidationFlag::Valid {
                let version = Version { block: header.number, tx: i as u32 };
                for w in &env.rwset.writes {
                    self.state.put(w.key.clone(), w.value.0.clone(), version);
                    report.writes += 1;
                }
                self.install_private(env, &mut report);
            } else {
                // Endorsement-time records of invalid txs are discarded.
                self.transient.take(&env.tx_id);
            }
            if flag != ValidationFlag::DuplicateTxid {
                self.committed.insert(env.tx_id, (header.number, flag));
            }
            report.results.push((env.tx_id, flag));
            flags.push(flag);
        }

        let committed = Block { header, txs: block.txs, validation_flags: flags };
        self.journal.append(&committed)?;
        self.last_header = Some(header.hash());
        Ok(report)
    }

    fn install_private(&mut self, env: &TransactionEnvelope, report: &mut CommitReport) {
        let wanted: Vec<_> =
            env.rwset.private_writes.iter().filter(|w| self.is_member(&w.collection)).cloned().collect();
        if wanted.is_empty() {
            return;
        }
        let pending = self.transient.take(&env.tx_id).unwrap_or_default();
        for w in wanted {
            let rec = pending
                .iter()
                .find(|p| p.collection == w.collection && p.key == w.key && p.record.commitment() == w.commitment);
            match rec {
                Some(p) => {
                    self.private.put(&w.collection, &w.key, p.record.clone());
                    report.private_installed += 1;
                }
                None => report.private_missing.push((env.tx_id, w.key.clone())),
            }
        }
    }

    pub fn state_digest(&self) -> Hash32 {
        self.state.digest()
    }

    pub fn stream_digest(&self) -> Hash32 {
        self.journal.stream_digest()
    }

    pub fn last_header_hash(&self) -> Option<Hash32> {
        self.last_header
    }
}

fn client_signature_ok(env: &TransactionEnvelope, identities: &IdentityLedger) -> bool {
    if env.header.tx_id() != env.tx_id {
        return false;
    }
    identities
        .resolve(&env.header.client)
        .is_some_and(|doc| doc.verkey.verify(&env.header.signing_bytes(), &env.client_signature))
}

/// MVCC check: every read version must equal the key's current version.
fn reads_current(env: &TransactionEnvelope, state: &WorldState) -> bool {
    env.rwset.reads.iter().all(|r| state.version(&r.key) == r.version)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::compute_cid;
    use crate::identity::{create_did, issue_credential, present, IdentityRecord, IdentityTx, Role, MEMBER_ATTRIBUTES};
    use crate::ledger::chaincode::{PRIVATE_COLLECTION, VOTE_CC};
    use crate::ledger::tx::ProposalHeader;
    use crate::identity::{Did, VerifiableCredential};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) struct Net {
        pub peers: Vec<Peer>,
        pub verifiers: Vec<Verifier>,
        pub ids: IdentityLedger,
        pub client: Did,
        pub client_key: Keypair,
        pub vc: VerifiableCredential,
    }

    pub(crate) fn net(n: usize) -> Net {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let org_keys: Vec<Keypair> = (0..n).map(|_| Keypair::generate(&mut rng)).collect();
        let orgs: Vec<String> = (1..=n).map(|i| format!("org{i}")).collect();
        let keys: BTreeMap<String, PublicKey> =
            orgs.iter().cloned().zip(org_keys.iter().map(|k| k.public())).collect();
        let steward = Did::from_public_key(&org_keys[0].public());
        let (client, ck, _) = create_did(&mut rng);
        let genesis = vec![
            IdentityTx::signed(
                IdentityRecord::Nym { did: steward.clone(), verkey: org_keys[0].public(), role: Role::Steward, endpoint: String::new() },
                steward.clone(),
                &org_keys[0],
            ),
            IdentityTx::signed(
                IdentityRecord::CredDef {
                    schema: MEMBER_SCHEMA.into(),
                    attributes: MEMBER_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
                    issuer: steward.clone(),
                },
                steward.clone(),
                &org_keys[0],
            ),
            IdentityTx::signed(
                IdentityRecord::Nym { did: client.clone(), verkey: ck.public(), role: Role::User, endpoint: String::new() },
                steward.clone(),
                &org_keys[0],
            ),
        ];
        let ids = IdentityLedger::with_genesis(genesis).unwrap();
        let attrs = [("kind", "user"), ("name", "c"), ("node", "n1")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let vc = issue_credential(&ids, &steward, &org_keys[0], &client, MEMBER_SCHEMA, &attrs, &mut rng).unwrap();
        let policy = EndorsementPolicy::all_of(orgs.clone());
        let collections = Collections::from([(PRIVATE_COLLECTION.to_string(), orgs.iter().cloned().collect())]);
        let peers = (0..n)
            .map(|i| {
                Peer::new(
                    PeerConfig {
                        org: orgs[i].clone(),
                        policy: policy.clone(),
                        collections: collections.clone(),
                        org_keys: keys.clone(),
                    },
                    org_keys[i].clone(),
                    Registry::builtin(),
                    Journal::in_memory(),
                )
            })
            .collect();
        Net { peers, verifiers: vec![Verifier::new(); n], ids, client, client_key: ck, vc }
    }

    impl Net {
        pub fn proposal(&self, key: &str, payload: &[u8], ts: u64) -> Proposal {
            let header = ProposalHeader {
                chaincode: VOTE_CC.into(),
                function: "push_vote".into(),
                args: vec![key.into()],
                client: self.client.clone(),
                timestamp: ts,
            };
            let sig = self.client_key.sign(&header.signing_bytes());
            let pres = present(&self.vc, &self.client_key, &["kind"], &header.tx_id().to_string()).unwrap();
            let mut salt = [0u8; 32];
            salt[..8].copy_from_slice(&ts.to_be_bytes());
            Proposal {
                header,
                client_signature: sig,
                transient: BTreeMap::from([
                    ("salt".to_string(), HexBytes(salt.to_vec())),
                    ("cid".to_string(), HexBytes(compute_cid(payload).to_string().into_bytes())),
                ]),
                presentation: Some(pres),
            }
        }

        pub fn endorse_all(&mut self, p: &Proposal) -> TransactionEnvelope {
            let responses: Vec<ProposalResponse> = self
                .peers
                .iter_mut()
                .zip(self.verifiers.iter_mut())
                .map(|(peer, v)| peer.endorse(p, &self.ids, v).unwrap().0)
                .collect();
            TransactionEnvelope::assemble(p, &responses).unwrap()
        }

        pub fn block(&self, txs: Vec<TransactionEnvelope>) -> OrderedBlock {
            let p = &self.peers[0];
            OrderedBlock::new(p.height(), p.last_header_hash().unwrap_or(Hash32::ZERO), 1, txs)
        }
    }

    #[test]
    fn endorsement_deterministic_across_nodes() {
        let mut n = net(2);
        let p = n.proposal("p1::v1", b"A", 1);
        let (r0, _) = n.peers[0].endorse(&p, &n.ids, &mut n.verifiers[0]).unwrap();
        let (r1, _) = n.peers[1].endorse(&p, &n.ids, &mut n.verifiers[1]).unwrap();
        assert_eq!(r0.rwset, r1.rwset);
        assert_eq!(r0.response, r1.response);
        assert_ne!(r0.endorsement.signature, r1.endorsement.signature);
        assert_eq!(n.peers[0].state.len(), 0);
    }

    #[test]
    fn unregistered_client_rejected() {
        let mut n = net(1);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let (stranger, sk, _) = create_did(&mut rng);
        let mut p = n.proposal("k", b"x", 1);
        p.header.client = stranger;
        p.client_signature = sk.sign(&p.header.signing_bytes());
        let err = n.peers[0].endorse(&p, &n.ids, &mut n.verifiers[0]).unwrap_err();
        assert!(matches!(err, Error::IdentityRejected(_)));
    }

    #[test]
    fn same_key_twice_in_block_conflicts() {
        let mut n = net(3);
        let e1 = n.endorse_all(&n.proposal("p::v", b"A", 1));
        let e2 = n.endorse_all(&n.proposal("p::v", b"B", 2));
        let b = n.block(vec![e1, e2]);
        let r = n.peers[0].validate_and_commit(b, &n.ids).unwrap();
        let flags: Vec<_> = r.results.iter().map(|(_, f)| *f).collect();
        assert_eq!(flags, vec![ValidationFlag::Valid, ValidationFlag::MvccConflict]);
        assert_eq!(r.private_installed, 1);
    }

    #[test]
    fn stale_read_conflicts_and_duplicate_detected() {
        let mut n = net(1);
        let e1 = n.endorse_all(&n.proposal("a", b"A", 1));
        let b0 = n.block(vec![e1.clone()]);
        n.peers[0].validate_and_commit(b0, &n.ids).unwrap();
        // resubmission of the same envelope
        let b1 = n.block(vec![e1]);
        let r = n.peers[0].validate_and_commit(b1, &n.ids).unwrap();
        assert_eq!(r.results[0].1, ValidationFlag::DuplicateTxid);
    }

    #[test]
    fn chain_integrity_checked() {
        let mut n = net(1);
        let e = n.endorse_all(&n.proposal("a", b"A", 1));
        let mut b = n.block(vec![e]);
        b.header.number = 5;
        assert!(matches!(n.peers[0].validate_and_commit(b.clone(), &n.ids), Err(Error::ChainIntegrity(_))));
        b.header.number = 0;
        b.header.prev_hash = Hash32([1; 32]);
        assert!(matches!(n.peers[0].validate_and_commit(b, &n.ids), Err(Error::ChainIntegrity(_))));
    }

    #[test]
    fn policy_fail_and_sig_fail() {
        let mut n = net(3);
        let mut e = n.endorse_all(&n.proposal("a", b"A", 1));
        e.endorsements.pop();
        let mut e2 = n.endorse_all(&n.proposal("b", b"B", 2));
        e2.client_signature.0[0] ^= 1;
        let b = n.block(vec![e, e2]);
        let r = n.peers[0].validate_and_commit(b, &n.ids).unwrap();
        assert_eq!(r.results[0].1, ValidationFlag::PolicyFail);
        assert_eq!(r.results[1].1, ValidationFlag::SigFail);
        assert!(n.peers[0].state.is_empty());
    }

    #[test]
    fn non_member_has_no_private_record() {
        let mut n = net(2);
        n.peers[1].cfg.collections.get_mut(PRIVATE_COLLECTION).unwrap().remove("org2");
        let e = n.endorse_all(&n.proposal("p::v", b"A", 1));
        let b = n.block(vec![e]);
        for i in 0..2 {
            n.peers[i].validate_and_commit(b.clone(), &n.ids).unwrap();
        }
        assert!(n.peers[0].query(VOTE_CC, "get_private", &["p::v".into()]).is_ok());
        assert!(matches!(
            n.peers[1].query(VOTE_CC, "get_private", &["p::v".into()]),
            Err(Error::NotFound(_))
        ));
        assert_eq!(
            n.peers[1].query(VOTE_CC, "get_commitment", &["p::v".into()]).unwrap(),
            n.peers[0].query(VOTE_CC, "get_commitment", &["p::v".into()]).unwrap()
        );
    }

    #[test]
    fn query_rejects_invoke_functions() {
        let n = net(1);
        assert!(matches!(
            n.peers[0].query(VOTE_CC, "push_vote", &["x".into()]),
            Err(Error::InvalidRequest(_))
        ));
    }
}
