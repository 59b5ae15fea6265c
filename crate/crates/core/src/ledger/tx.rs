// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Hash32, HexBytes};
use crate::crypto::Signature;
use crate::identity::{Did, Presentation};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub Hash32);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", &self.0.to_hex()[..12])
    }
}

/// The client-signed part of a proposal. Its canonical digest is the tx id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalHeader {
    pub chaincode: String,
    pub function: String,
    pub args: Vec<String>,
    pub client: Did,
    pub timestamp: u64,
}

impl ProposalHeader {
    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::to_canonical_vec(self)
    }

    pub fn tx_id(&self) -> TxId {
        TxId(codec::sha256(&self.signing_bytes()))
    }
}

/// What an endorser receives. `transient` carries private inputs that are
/// never copied into the envelope or any block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub header: ProposalHeader,
    pub client_signature: Signature,
    #[serde(default)]
    pub transient: BTreeMap<String, HexBytes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation: Option<Presentation>,
}

/// Position of the write that produced a key's current value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub block: u64,
    pub tx: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvRead {
    pub key: String,
    pub version: Option<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvWrite {
    pub key: String,
    pub value: HexBytes,
}

/// On-chain trace of a private write: only the commitment is public.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateWrite {
    pub collection: String,
    pub key: String,
    pub commitment: Hash32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RwSet {
    pub reads: Vec<KvRead>,
    pub writes: Vec<KvWrite>,
    pub private_writes: Vec<PrivateWrite>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub org: String,
    pub signature: Signature,
}

/// Bytes an endorser signs: the simulation result bound to the tx id.
pub fn endorsement_message(tx_id: &TxId, rwset: &RwSet, response: &[u8]) -> Vec<u8> {
    #[derive(Serialize)]
    struct Signed<'a> {
        tx_id: &'a TxId,
        rwset: &'a RwSet,
        response: HexBytes,
    }
    codec::to_canonical_vec(&Signed { tx_id, rwset, response: HexBytes(response.to_vec()) })
}

/// One endorser's signed simulation result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalResponse {
    pub tx_id: TxId,
    pub rwset: RwSet,
    pub response: HexBytes,
    pub endorsement: Endorsement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionEnvelope {
    pub tx_id: TxId,
    pub header: ProposalHeader,
    pub client_signature: Signature,
    pub rwset: RwSet,
    pub response: HexBytes,
    pub endorsements: Vec<Endorsement>,
}

impl TransactionEnvelope {
    /// Assembles an envelope from matching proposal responses.
    pub fn assemble(proposal: &Proposal, responses: &[ProposalResponse]) -> Option<Self> {
        let first = responses.first()?;
        if responses.iter().any(|r| r.rwset != first.rwset || r.response != first.response || r.tx_id != first.tx_id) {
            return None;
        }
        let mut endorsements: Vec<Endorsement> = responses.iter().map(|r| r.endorsement.clone()).collect();
        endorsements.sort_by(|a, b| a.org.cmp(&b.org));
        Some(TransactionEnvelope {
            tx_id: first.tx_id,
            header: proposal.header.clone(),
            client_signature: proposal.client_signature,
            rwset: first.rwset.clone(),
            response: first.response.clone(),
            endorsements,
        })
    }

    pub fn endorsement_message(&self) -> Vec<u8> {
        endorsement_message(&self.tx_id, &self.rwset, &self.response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationFlag {
    Valid,
    MvccConflict,
    PolicyFail,
    SigFail,
    DuplicateTxid,
}

impl fmt::Display for ValidationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationFlag::Valid => "valid",
            ValidationFlag::MvccConflict => "mvcc_conflict",
            ValidationFlag::PolicyFail => "policy_fail",
            ValidationFlag::SigFail => "sig_fail",
            ValidationFlag::DuplicateTxid => "duplicate_txid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub number: u64,
    pub prev_hash: Hash32,
    pub data_hash: Hash32,
    pub term: u64,
}

impl BlockHeader {
    pub fn hash(&self) -> Hash32 {
        codec::digest_of(self)
    }
}

pub fn data_hash(txs: &[TransactionEnvelope]) -> Hash32 {
    codec::digest_of(txs)
}

/// A block as cut by the orderer, before peer validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedBlock {
    pub header: BlockHeader,
    pub txs: Vec<TransactionEnvelope>,
}

impl OrderedBlock {
    pub fn new(number: u64, prev_hash: Hash32, term: u64, txs: Vec<TransactionEnvelope>) -> Self {
        let header = BlockHeader { number, prev_hash, data_hash: data_hash(&txs), term };
        OrderedBlock { header, txs }
    }
}

/// A validated block: the ordered block plus one flag per transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<TransactionEnvelope>,
    pub validation_flags: Vec<ValidationFlag>,
}

impl Block {
    pub fn number(&self) -> u64 {
        self.header.number
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        codec::to_canonical_vec(self)
    }
}
