// SPDX-License-Identifier: Apache-2.0

//! Execute-order-validate ledger: transactions, chaincode, world state,
//! private data, endorsement policy and the block journal.

pub mod chaincode;
pub mod journal;
pub mod peer;
pub mod policy;
pub mod state;
pub mod tx;

pub use chaincode::{Chaincode, DataCc, DataRecord, Registry, Stub, VoteCc, DATA_CC, PRIVATE_COLLECTION, VOTE_CC};
pub use journal::{read_journal, Journal};
pub use peer::{Collections, CommitReport, EndorseStats, Peer, PeerConfig};
pub use policy::{evaluate_policy, EndorsementPolicy};
pub use state::{public_commitment, PendingPrivate, PrivateRecord, PrivateStore, TransientStore, WorldState};
pub use tx::{
    Block, BlockHeader, Endorsement, KvRead, KvWrite, OrderedBlock, PrivateWrite, Proposal, ProposalHeader,
    ProposalResponse, RwSet, TransactionEnvelope, TxId, ValidationFlag, Version,
};
