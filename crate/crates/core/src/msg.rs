// SPDX-License-Identifier: Apache-2.0

//! Everything that travels on the bus between nodes and clients.

use serde::{Deserialize, Serialize};

use crate::cas::CasMsg;
use crate::error::ErrorBody;
use crate::ledger::{Proposal, ProposalResponse};
use crate::ordering::RaftMsg;
use crate::service::{Request, Response};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "channel", content = "msg", rename_all = "snake_case")]
pub enum Msg {
    Raft(RaftMsg),
    Cas(CasMsg),
    Endorse { req: u64, proposal: Proposal },
    EndorseReply { req: u64, result: Result<ProposalResponse, ErrorBody> },
    Request { req: u64, body: Request },
    Response { req: u64, result: Result<Response, ErrorBody> },
}

impl Msg {
    pub fn channel(&self) -> &'static str {
        match self {
            Msg::Raft(_) => "raft",
            Msg::Cas(_) => "cas",
            Msg::Endorse { .. } => "endorse",
            Msg::EndorseReply { .. } => "endorse_reply",
            Msg::Request { .. } => "request",
            Msg::Response { .. } => "response",
        }
    }
}
