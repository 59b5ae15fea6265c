// SPDX-License-Identifier: Apache-2.0

//! Raft-replicated ordering service. Blocks are cut on the leader and
//! replicated as single log entries.

pub mod cutter;
pub mod raft;

pub use cutter::BlockCutter;
pub use raft::{
    DurableRaft, LogEntry, OrderOutput, Orderer, OrderingConfig, Payload, RaftMsg, Role, Submission, SubmitOutcome,
};
