// SPDX-License-Identifier: Apache-2.0

//! Open-loop transaction load: a paced producer round-robins signed pushes
//! over the nodes and records one sample per transaction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use deon_core::crypto::derive_rng;
use deon_core::error::{Error, ErrorBody};
use deon_core::ledger::{TxId, ValidationFlag};
use deon_core::net::{ClientId, NodeId};
use deon_core::service::{Ballot, MemberKind, PushRequest, Request, Response, VoteId};
use deon_core::time::{Span, Time};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bus::{Bus, ClientResponse};
use crate::session::Session;

/// Which storage path a transaction takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Arm {
    pub private: bool,
    pub cas: bool,
}

impl Arm {
    pub const BASELINE: Arm = Arm { private: false, cas: false };
    pub const CAS: Arm = Arm { private: false, cas: true };
    pub const PRIVATE: Arm = Arm { private: true, cas: false };
    pub const PRIVATE_CAS: Arm = Arm { private: true, cas: true };
    pub const ALL: [Arm; 4] = [Arm::BASELINE, Arm::CAS, Arm::PRIVATE, Arm::PRIVATE_CAS];
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.private, self.cas) {
            (false, false) => "baseline",
            (false, true) => "cas",
            (true, false) => "private",
            (true, true) => "private+cas",
        })
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Arm::BASELINE),
            "cas" => Ok(Arm::CAS),
            "private" => Ok(Arm::PRIVATE),
            "private+cas" | "cas+private" => Ok(Arm::PRIVATE_CAS),
            _ => Err(format!("unknown arm {s:?} (baseline|cas|private|private+cas)")),
        }
    }
}

impl From<Arm> for String {
    fn from(a: Arm) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Arm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrivals {
    #[default]
    Uniform,
    Poisson,
}

impl FromStr for Arrivals {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Arrivals::Uniform),
            "poisson" => Ok(Arrivals::Poisson),
            _ => Err(format!("unknown arrival process {s:?} (uniform|poisson)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub count: usize,
    /// Offered transactions per second.
    pub rate: f64,
    pub arm: Arm,
    #[serde(default)]
    pub arrivals: Arrivals,
    #[serde(default)]
    pub seed: u64,
    /// Poll id used in the generated vote keys.
    #[serde(default = "default_poll")]
    pub poll: String,
    /// Per-attempt wait for a receipt before trying again.
    #[serde(default = "default_attempt_ms")]
    pub attempt_timeout_ms: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_poll() -> String {
    "poll".into()
}

fn default_attempt_ms() -> u64 {
    11_000
}

fn default_attempts() -> u32 {
    3
}

impl LoadSpec {
    pub fn new(count: usize, rate: f64, arm: Arm) -> Self {
        LoadSpec {
            count,
            rate,
            arm,
            arrivals: Arrivals::Uniform,
            seed: 0,
            poll: default_poll(),
            attempt_timeout_ms: default_attempt_ms(),
            max_attempts: default_attempts(),
        }
    }

    pub fn validate(&self) -> deon_core::Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidRequest("rate must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidRequest("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Send offsets from the start of the run.
    pub fn schedule(&self) -> Vec<Span> {
        let mut rng = derive_rng(self.seed, "arrivals", 0);
        let mut t = 0.0f64;
        (0..self.count)
            .map(|i| {
                let at = match self.arrivals {
                    Arrivals::Uniform => i as f64 / self.rate,
                    Arrivals::Poisson => {
                        if i > 0 {
                            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                            t += -u.ln() / self.rate;
                        }
                        t
                    }
                };
                Span::from_secs_f64(at)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub key: String,
    pub client: u32,
    pub node: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<TxId>,
    pub submit_us: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commit_us: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<ValidationFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<u64>,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Sample {
    pub fn latency(&self) -> Option<Span> {
        self.commit_us.map(|c| Span(c.saturating_sub(self.submit_us)))
    }

    pub fn committed(&self) -> bool {
        self.flag.is_some()
    }

    pub fn valid(&self) -> bool {
        self.flag == Some(ValidationFlag::Valid)
    }
}

/// Request numbers used by the generator start here so they never collide
/// with a session's own.
const REQ_BASE: u64 = 1 << 40;

struct InFlight {
    index: usize,
    request: PushRequest,
    node_slot: usize,
    deadline: Time,
}

pub struct LoadGen {
    spec: LoadSpec,
    sessions: Vec<Session>,
    nodes: u32,
    start: Time,
    schedule: Vec<Span>,
    next: usize,
    next_req: u64,
    rng: ChaCha20Rng,
    inflight: HashMap<(ClientId, u64), InFlight>,
    pub samples: Vec<Sample>,
}

impl LoadGen {
    /// `sessions` must already be onboarded.
    pub fn new(spec: LoadSpec, sessions: Vec<Session>, nodes: u32, start: Time) -> deon_core::Result<Self> {
        spec.validate()?;
        if sessions.is_empty() {
            return Err(Error::InvalidRequest("load needs at least one client".into()));
        }
        let schedule = spec.schedule();
        let rng = derive_rng(spec.seed, "ballots", 0);
        Ok(LoadGen {
            spec,
            sessions,
            nodes,
            start,
            schedule,
            next: 0,
            next_req: REQ_BASE,
            rng,
            inflight: HashMap::new(),
            samples: Vec::new(),
        })
    }

    pub fn spec(&self) -> &LoadSpec {
        &self.spec
    }

    pub fn into_sessions(self) -> Vec<Session> {
        self.sessions
    }

    pub fn in_flight(&self) -> usize {
        self.inflight.len()
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.schedule.len() && self.inflight.is_empty()
    }

    /// When the generator next needs to act.
    pub fn next_wakeup(&self) -> Option<Time> {
        let send = self.schedule.get(self.next).map(|s| self.start + *s);
        let retry = self.inflight.values().map(|f| f.deadline).min();
        match (send, retry) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn node_for(&self, slot: usize) -> NodeId {
        NodeId((slot % self.nodes as usize) as u32)
    }

    fn dispatch<B: Bus + ?Sized>(&mut self, bus: &mut B, f: InFlight) {
        let s = &self.samples[f.index];
        let client = ClientId(s.client);
        let node = self.node_for(f.node_slot);
        let req = self.next_req;
        self.next_req += 1;
        bus.send(client, node, req, Request::Push(f.request.clone()));
        self.samples[f.index].node = node.to_string();
        self.inflight.insert((client, req), f);
    }

    /// Sends whatever is due and retries what timed out.
    pub fn act<B: Bus + ?Sized>(&mut self, bus: &mut B) {
        let now = bus.now();
        while self.next < self.schedule.len() && self.start + self.schedule[self.next] <= now {
            let index = self.next;
            self.next += 1;
            let si = index % self.sessions.len();
            let session = &mut self.sessions[si];
            let key = VoteId::new(&self.spec.poll, &format!("v{index}")).expect("generated ids are valid").to_string();
            let choice = ["A", "B", "C"][self.rng.gen_range(0..3)];
            let payload = Ballot { choice: choice.into() }.to_payload();
            let request =
                session.agent.push_request(&key, payload, BTreeMap::new(), self.spec.arm.private, self.spec.arm.cas, now.0);
            self.samples.push(Sample {
                index,
                key,
                client: session.id.0,
                node: String::new(),
                tx_id: Some(request.header.tx_id()),
                submit_us: now.0,
                commit_us: None,
                flag: None,
                block: None,
                attempts: 1,
                error: None,
            });
            let deadline = now + Span::from_millis(self.spec.attempt_timeout_ms);
            self.dispatch(bus, InFlight { index, request, node_slot: index, deadline });
        }
        let mut expired: Vec<(ClientId, u64)> =
            self.inflight.iter().filter(|(_, f)| f.deadline <= now).map(|(k, _)| *k).collect();
        expired.sort_unstable();
        for k in expired {
            let f = self.inflight.remove(&k).expect("listed above");
            self.retry_or_fail(bus, f, "no answer before the attempt timeout".into());
        }
    }

    fn retry_or_fail<B: Bus + ?Sized>(&mut self, bus: &mut B, f: InFlight, why: String) {
        let s = &mut self.samples[f.index];
        if s.attempts >= self.spec.max_attempts {
            s.error = Some(why);
            return;
        }
        s.attempts += 1;
        let deadline = bus.now() + Span::from_millis(self.spec.attempt_timeout_ms);
        self.dispatch(bus, InFlight { node_slot: f.node_slot + 1, deadline, ..f });
    }

    /// Feeds responses; ones not belonging to the generator are returned.
    pub fn on_responses<B: Bus + ?Sized>(&mut self, bus: &mut B, responses: Vec<ClientResponse>) -> Vec<ClientResponse> {
        let mut other = Vec::new();
        for r in responses {
            let Some(f) = self.inflight.remove(&(r.client, r.req)) else {
                other.push(r);
                continue;
            };
            match r.result {
                Ok(Response::Receipt(receipt)) => {
                    let s = &mut self.samples[f.index];
                    s.commit_us = Some(r.at.0);
                    s.flag = Some(receipt.flag);
                    s.block = Some(receipt.block);
                    s.error = None;
                }
                Ok(_) => self.samples[f.index].error = Some("unexpected response".into()),
                Err(e) if retryable(&e) => self.retry_or_fail(bus, f, e.message),
                Err(e) => self.samples[f.index].error = Some(format!("{}: {}", e.code, e.message)),
            }
        }
        other
    }

    /// Drives the load to completion (or `until`) on a bus with no other
    /// activity.
    pub fn run<B: Bus + ?Sized>(&mut self, bus: &mut B, until: Time) {
        loop {
            self.act(bus);
            if self.is_done() || bus.now() >= until {
                break;
            }
            let wake = self.next_wakeup().unwrap_or(until).min(until);
            let rs = bus.poll(wake);
            self.on_responses(bus, rs);
        }
    }

    pub fn finish(mut self) -> (Vec<Sample>, Vec<Session>) {
        for f in self.inflight.values() {
            let s = &mut self.samples[f.index];
            if s.error.is_none() {
                s.error = Some("in flight at cutoff".into());
            }
        }
        self.samples.sort_by_key(|s| s.index);
        (self.samples, self.sessions)
    }
}

fn retryable(e: &ErrorBody) -> bool {
    matches!(e.code.as_str(), "unavailable" | "timeout")
}

/// Creates and onboards `count` clients, spreading them over the nodes.
pub fn onboard_clients<B: Bus + ?Sized>(bus: &mut B, count: usize, seed: u64) -> deon_core::Result<Vec<Session>> {
    let nodes = bus.node_count();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = derive_rng(seed, "client", i as u64);
        let mut s = Session::new(ClientId(i as u32), NodeId((i % nodes as usize) as u32), &mut rng);
        let mut last = None;
        for _ in 0..3 {
            match s.onboard(bus, MemberKind::Application, &format!("loadgen-{i:04}")) {
                Ok(()) => {
                    last = None;
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        if let Some(e) = last {
            return Err(e);
        }
        out.push(s);
    }
    Ok(out)
}
