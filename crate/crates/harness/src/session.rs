// SPDX-License-Identifier: Apache-2.0

//! A client agent bound to one home node, issuing blocking calls over a bus.

use std::collections::BTreeMap;

use deon_core::client::ClientAgent;
use deon_core::error::{Error, Result};
use deon_core::net::{ClientId, NodeId};
use deon_core::service::{MemberKind, QueryResult, Request, Response, TxReceipt, VoteId};
use deon_core::time::Span;
use rand::{CryptoRng, RngCore};

use crate::bus::{call, Bus};

pub struct Session {
    pub agent: ClientAgent,
    pub id: ClientId,
    pub node: NodeId,
    pub timeout: Span,
    next_req: u64,
}

impl Session {
    pub fn new<R: RngCore + CryptoRng>(id: ClientId, node: NodeId, rng: &mut R) -> Self {
        Session { agent: ClientAgent::new(rng), id, node, timeout: Span::from_millis(15_000), next_req: 1 }
    }

    pub fn next_req(&mut self) -> u64 {
        let r = self.next_req;
        self.next_req += 1;
        r
    }

    pub fn request<B: Bus + ?Sized>(&mut self, bus: &mut B, body: Request) -> Result<Response> {
        let req = self.next_req();
        match call(bus, self.id, self.node, req, body, self.timeout) {
            Some(r) => r.map_err(|e| e.into_error()),
            None => Err(Error::Timeout(format!("no answer from {} within {} ms", self.node, self.timeout.as_millis_f64()))),
        }
    }

    /// Microsecond timestamp for signed requests.
    fn stamp<B: Bus + ?Sized>(bus: &B) -> u64 {
        bus.now().0
    }

    pub fn onboard<B: Bus + ?Sized>(&mut self, bus: &mut B, kind: MemberKind, name: &str) -> Result<()> {
        let body = self.agent.onboard_request(kind, name);
        match self.request(bus, body)? {
            Response::Onboarded(o) => self.agent.accept_onboarding(o),
            other => Err(unexpected(&other)),
        }
    }

    pub fn push<B: Bus + ?Sized>(
        &mut self,
        bus: &mut B,
        key: &str,
        payload: Vec<u8>,
        metadata: BTreeMap<String, String>,
        private: bool,
        cas: bool,
    ) -> Result<TxReceipt> {
        let r = self.agent.push_request(key, payload, metadata, private, cas, Self::stamp(bus));
        receipt(self.request(bus, Request::Push(r))?)
    }

    pub fn vote<B: Bus + ?Sized>(&mut self, bus: &mut B, vote: &VoteId, choice: &str) -> Result<TxReceipt> {
        let r = self.agent.cast_vote(vote, choice, Self::stamp(bus));
        receipt(self.request(bus, Request::Push(r))?)
    }

    pub fn query<B: Bus + ?Sized>(&mut self, bus: &mut B, key: &str, private: bool) -> Result<QueryResult> {
        let q = self.agent.query_request(key, private, Self::stamp(bus));
        match self.request(bus, Request::Query(q))? {
            Response::Data(d) => Ok(d),
            other => Err(unexpected(&other)),
        }
    }
}

fn receipt(r: Response) -> Result<TxReceipt> {
    match r {
        Response::Receipt(r) => Ok(r),
        other => Err(unexpected(&other)),
    }
}

pub(crate) fn unexpected(r: &Response) -> Error {
    Error::InvalidRequest(format!("unexpected response {:?}", std::mem::discriminant(r)))
}
