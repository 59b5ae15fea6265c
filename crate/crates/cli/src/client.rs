// SPDX-License-Identifier: Apache-2.0

//! HTTP client for one node's JSON API, signing with the wallet's keys.

use std::collections::BTreeMap;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use deon_core::client::ClientAgent;
use deon_core::error::{Error, ErrorBody, Result};
use deon_core::service::{MemberKind, Onboarded, PushRequest, QueryRequest, QueryResult, Request, TxReceipt, VoteId};
use deon_harness::http::{VoteView, HDR_DID, HDR_PRESENTATION, HDR_SIG, HDR_TS};
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct NodeClient {
    base: String,
    agent: ureq::Agent,
}

/// Microseconds since the epoch; signed requests carry it as their timestamp.
pub fn now_us() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

fn seg(s: &str) -> String {
    utf8_percent_encode(s, NON_ALPHANUMERIC).to_string()
}

impl NodeClient {
    pub fn new(base: &str) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build();
        NodeClient { base: base.trim_end_matches('/').to_string(), agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn answer<T: DeserializeOwned>(&self, r: std::result::Result<ureq::Response, ureq::Error>) -> Result<T> {
        match r {
            Ok(resp) => resp.into_json().map_err(|e| Error::Codec(format!("response from {}: {e}", self.base))),
            Err(ureq::Error::Status(status, resp)) => match resp.into_json::<ErrorBody>() {
                Ok(body) => Err(body.into_error()),
                Err(_) => Err(Error::Io(format!("{} answered HTTP {status}", self.base))),
            },
            Err(e) => Err(Error::Unavailable(format!("cannot reach {}: {e}", self.base))),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.answer(self.agent.post(&self.url(path)).send_json(body))
    }

    fn signed_get<T: DeserializeOwned>(&self, path: &str, q: &QueryRequest) -> Result<T> {
        let mut rq = self
            .agent
            .get(&self.url(path))
            .set(HDR_DID, &q.client.to_string())
            .set(HDR_TS, &q.timestamp.to_string())
            .set(HDR_SIG, &q.signature.to_hex());
        if let Some(p) = &q.presentation {
            rq = rq.set(HDR_PRESENTATION, &serde_json::to_string(p).expect("presentations serialize"));
        }
        self.answer(rq.call())
    }

    pub fn onboard(&self, agent: &mut ClientAgent, kind: MemberKind, name: &str) -> Result<Onboarded> {
        let Request::Onboard(body) = agent.onboard_request(kind, name) else {
            unreachable!("onboard_request builds an onboarding request")
        };
        let o: Onboarded = self.post("/onboard", &body)?;
        agent.accept_onboarding(o.clone())?;
        Ok(o)
    }

    pub fn push(&self, req: &PushRequest) -> Result<TxReceipt> {
        self.post("/push", req)
    }

    pub fn vote(&self, req: &PushRequest) -> Result<TxReceipt> {
        self.post("/vote", req)
    }

    pub fn get(&self, agent: &mut ClientAgent, key: &str, private: bool) -> Result<QueryResult> {
        let q = agent.query_request(key, private, now_us());
        self.signed_get(&format!("/data/{}?private={private}", seg(key)), &q)
    }

    pub fn get_vote(&self, agent: &mut ClientAgent, vote: &VoteId, poll: &str, voter: &str) -> Result<VoteView> {
        let q = agent.query_request(&vote.to_string(), true, now_us());
        self.signed_get(&format!("/vote/{}/{}", seg(poll), seg(voter)), &q)
    }
}

/// `k=v` pairs from `--meta`.
pub fn parse_meta(items: &[String]) -> Result<BTreeMap<String, String>> {
    items
        .iter()
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
            _ => Err(Error::InvalidRequest(format!("metadata {kv:?} is not key=value"))),
        })
        .collect()
}
