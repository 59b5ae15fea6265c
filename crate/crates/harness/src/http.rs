// SPDX-License-Identifier: Apache-2.0

//! Per-node HTTP JSON API on loopback, in front of a [`WallNet`].
//!
//! | route | body / headers | answer |
//! |---|---|---|
//! | `POST /onboard` | onboarding request | DID and credential |
//! | `POST /push` | signed push request | receipt |
//! | `POST /vote` | signed push request for a vote key | receipt |
//! | `GET /data/{key}?private=bool` | query headers | payload and report |
//! | `GET /vote/{poll}/{voter}` | query headers | choice and report |
//! | `GET /health`, `GET /chain/height` | | node status |
//! | `POST /cas`, `GET /cas/{cid}` | raw bytes | cid / raw bytes |
//! | `POST /connect`, `GET /id/resolve/{did}`, `POST /id/verify` | | identity helpers |
//!
//! Signed reads carry `x-deon-did`, `x-deon-ts`, `x-deon-sig` and optionally
//! `x-deon-presentation` (JSON). Errors are `{code, message}`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use deon_core::codec::{self, HexBytes};
use deon_core::crypto::{PublicKey, Signature};
use deon_core::error::{Error, ErrorBody};
use deon_core::identity::{Did, Presentation};
use deon_core::net::{ClientId, NodeId};
use deon_core::service::{Ballot, OnboardRequest, PushRequest, QueryRequest, QueryResult, Request, Response, VoteId};
use deon_core::time::Span;
use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use tiny_http::{Header, Method, Server, StatusCode};

use crate::bus::call;
use crate::wall::{WallClient, WallNet};

pub const HDR_DID: &str = "x-deon-did";
pub const HDR_TS: &str = "x-deon-ts";
pub const HDR_SIG: &str = "x-deon-sig";
pub const HDR_PRESENTATION: &str = "x-deon-presentation";

/// Answer of `GET /vote/{poll}/{voter}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteView {
    pub vote_id: String,
    pub choice: String,
    pub result: QueryResult,
}

pub struct Gateway {
    pub endpoints: Vec<(NodeId, String)>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Gateway {
    /// Starts one server per node on `127.0.0.1:<base_port + i>`, or on
    /// ephemeral ports when `base_port` is 0.
    pub fn start(net: &mut WallNet, base_port: u16, workers: usize, timeout: Span) -> deon_core::Result<Gateway> {
        let stop = Arc::new(AtomicBool::new(false));
        let mut endpoints = Vec::new();
        let mut threads = Vec::new();
        for id in net.config().network.node_ids() {
            let port = if base_port == 0 { 0 } else { base_port + id.0 as u16 };
            let server =
                Arc::new(Server::http(("127.0.0.1", port)).map_err(|e| Error::Io(format!("bind port {port}: {e}")))?);
            let addr = server.server_addr().to_ip().map(|a| a.to_string()).unwrap_or_default();
            endpoints.push((id, format!("http://{addr}")));
            for w in 0..workers.max(1) {
                let client = net.client();
                let (server, stop) = (server.clone(), stop.clone());
                threads.push(
                    std::thread::Builder::new()
                        .name(format!("http-{id}-{w}"))
                        .spawn(move || worker(server, client, id, stop, timeout))
                        .map_err(|e| Error::Io(e.to_string()))?,
                );
            }
        }
        Ok(Gateway { endpoints, stop, threads })
    }

    pub fn endpoint(&self, id: NodeId) -> Option<&str> {
        self.endpoints.iter().find(|(n, _)| *n == id).map(|(_, e)| e.as_str())
    }

    pub fn stop(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn worker(server: Arc<Server>, mut client: WallClient, node: NodeId, stop: Arc<AtomicBool>, timeout: Span) {
    let mut next_req = 1u64;
    while !stop.load(Ordering::SeqCst) {
        let mut rq = match server.recv_timeout(Duration::from_millis(100)) {
            Ok(Some(rq)) => rq,
            Ok(None) => continue,
            Err(_) => return,
        };
        let mut body = Vec::new();
        let (status, bytes, raw) = match rq.as_reader().read_to_end(&mut body) {
            Err(e) => error_reply(&Error::Io(e.to_string())),
            Ok(_) => {
                let mut ctx = Ctx { client: &mut client, node, next_req: &mut next_req, timeout };
                match route(&mut ctx, rq.method(), rq.url(), rq.headers(), body) {
                    Ok(Reply::Json(v)) => (200, v, false),
                    Ok(Reply::Raw(b)) => (200, b, true),
                    Err(e) => error_reply(&e),
                }
            }
        };
        let ctype = if raw { "application/octet-stream" } else { "application/json" };
        let resp = tiny_http::Response::from_data(bytes)
            .with_status_code(StatusCode(status))
            .with_header(Header::from_bytes("content-type", ctype).expect("static header"));
        let _ = rq.respond(resp);
    }
}

fn error_reply(e: &Error) -> (u16, Vec<u8>, bool) {
    (e.http_status(), codec::to_canonical_vec(&ErrorBody::from(e)), false)
}

enum Reply {
    Json(Vec<u8>),
    Raw(Vec<u8>),
}

fn json<T: Serialize>(v: &T) -> Reply {
    Reply::Json(codec::to_canonical_vec(v))
}

/// A node response without its variant tag.
fn untagged(r: Response) -> Reply {
    let mut v = serde_json::to_value(&r).expect("responses serialize");
    json(&v["body"].take())
}

struct Ctx<'a> {
    client: &'a mut WallClient,
    node: NodeId,
    next_req: &'a mut u64,
    timeout: Span,
}

impl Ctx<'_> {
    fn ask(&mut self, body: Request) -> Result<Response, Error> {
        let req = *self.next_req;
        *self.next_req += 1;
        let id: ClientId = self.client.id();
        match call(self.client, id, self.node, req, body, self.timeout) {
            Some(r) => r.map_err(ErrorBody::into_error),
            None => Err(Error::Timeout(format!("{} did not answer", self.node))),
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(body).map_err(|e| Error::InvalidRequest(format!("body: {e}")))
}

fn header<'h>(headers: &'h [Header], name: &str) -> Option<&'h str> {
    headers.iter().find(|h| h.field.as_str().as_str().eq_ignore_ascii_case(name)).map(|h| h.value.as_str())
}

fn signed_query(headers: &[Header], key: String, private: bool) -> Result<QueryRequest, Error> {
    let need = |n: &str| header(headers, n).ok_or_else(|| Error::InvalidRequest(format!("missing header {n}")));
    let client: Did = need(HDR_DID)?.parse()?;
    let timestamp = need(HDR_TS)?.parse::<u64>().map_err(|_| Error::InvalidRequest(format!("bad {HDR_TS}")))?;
    let signature = Signature::from_hex(need(HDR_SIG)?)?;
    let presentation = match header(headers, HDR_PRESENTATION) {
        Some(p) => Some(serde_json::from_str::<Presentation>(p).map_err(|e| Error::InvalidRequest(format!("presentation: {e}")))?),
        None => None,
    };
    Ok(QueryRequest { key, private, client, timestamp, signature, presentation })
}

fn decode(segment: &str) -> Result<String, Error> {
    percent_decode_str(segment)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|_| Error::InvalidRequest("path is not utf-8".into()))
}

fn route(ctx: &mut Ctx<'_>, method: &Method, url: &str, headers: &[Header], payload: Vec<u8>) -> Result<Reply, Error> {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
    match (method, parts.as_slice()) {
        (Method::Post, ["onboard"]) => {
            let r: OnboardRequest = parse(&payload)?;
            Ok(untagged(ctx.ask(Request::Onboard(r))?))
        }
        (Method::Post, ["connect"]) => {
            #[derive(Deserialize)]
            struct Connect {
                did: Did,
                verkey: PublicKey,
            }
            let c: Connect = parse(&payload)?;
            Ok(untagged(ctx.ask(Request::Connect { did: c.did, verkey: c.verkey })?))
        }
        (Method::Post, ["push"]) => {
            let r: PushRequest = parse(&payload)?;
            Ok(untagged(ctx.ask(Request::Push(r))?))
        }
        (Method::Post, ["vote"]) => {
            let r: PushRequest = parse(&payload)?;
            r.key.parse::<VoteId>()?;
            if !r.private {
                return Err(Error::InvalidRequest("votes use the private-data variant".into()));
            }
            Ok(untagged(ctx.ask(Request::Push(r))?))
        }
        (Method::Get, ["data", key]) => {
            let private = query.split('&').any(|kv| kv == "private=true" || kv == "private=1" || kv == "private");
            let q = signed_query(headers, decode(key)?, private)?;
            Ok(untagged(ctx.ask(Request::Query(q))?))
        }
        (Method::Get, ["vote", poll, voter]) => {
            let id = VoteId::new(&decode(poll)?, &decode(voter)?)?;
            let q = signed_query(headers, id.to_string(), true)?;
            match ctx.ask(Request::Query(q))? {
                Response::Data(result) => {
                    let ballot: Ballot = codec::from_slice(&result.payload)
                        .map_err(|_| Error::Integrity("stored vote is not a ballot".into()))?;
                    Ok(json(&VoteView { vote_id: id.to_string(), choice: ballot.choice, result }))
                }
                other => Ok(untagged(other)),
            }
        }
        (Method::Get, ["health"]) => Ok(untagged(ctx.ask(Request::Health)?)),
        (Method::Get, ["chain", "height"]) => Ok(untagged(ctx.ask(Request::Height)?)),
        (Method::Post, ["cas"]) => Ok(untagged(ctx.ask(Request::CasPut { data: HexBytes(payload) })?)),
        (Method::Get, ["cas", cid]) => match ctx.ask(Request::CasGet { cid: cid.parse()? })? {
            Response::Bytes { data } => Ok(Reply::Raw(data.0)),
            other => Ok(untagged(other)),
        },
        (Method::Get, ["id", "resolve", did]) => Ok(untagged(ctx.ask(Request::Resolve { did: decode(did)?.parse()? })?)),
        (Method::Post, ["id", "verify"]) => {
            #[derive(Deserialize)]
            struct Verify {
                presentation: Presentation,
                nonce: String,
            }
            let v: Verify = parse(&payload)?;
            Ok(untagged(ctx.ask(Request::Verify { presentation: v.presentation, nonce: v.nonce })?))
        }
        _ => Err(Error::NotFound(format!("no route {method} {path}"))),
    }
}
