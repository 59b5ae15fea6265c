// SPDX-License-Identifier: Apache-2.0

//! The client side of a running network, common to the simulated and the
//! threaded executor.

use deon_core::error::ErrorBody;
use deon_core::net::{ClientId, NodeId};
use deon_core::service::{Request, Response};
use deon_core::time::{Span, Time};

#[derive(Debug, Clone)]
pub struct ClientResponse {
    pub at: Time,
    pub client: ClientId,
    pub node: NodeId,
    pub req: u64,
    pub result: Result<Response, ErrorBody>,
}

pub trait Bus {
    fn now(&self) -> Time;

    fn node_count(&self) -> u32;

    /// Sends `body` from `client` to `node` as request number `req`.
    fn send(&mut self, client: ClientId, node: NodeId, req: u64, body: Request);

    /// Advances until at least one response is available or `until` is
    /// reached, and returns what arrived.
    fn poll(&mut self, until: Time) -> Vec<ClientResponse>;
}

/// Sends one request and waits for its answer. Responses to other requests
/// that arrive meanwhile are discarded.
pub fn call<B: Bus + ?Sized>(
    bus: &mut B,
    client: ClientId,
    node: NodeId,
    req: u64,
    body: Request,
    timeout: Span,
) -> Option<Result<Response, ErrorBody>> {
    let until = bus.now() + timeout;
    bus.send(client, node, req, body);
    while bus.now() < until {
        for r in bus.poll(until) {
            if r.client == client && r.req == req {
                return Some(r.result);
            }
        }
    }
    None
}
