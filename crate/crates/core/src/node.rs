// SPDX-License-Identifier: Apache-2.0

//! A full node: content store, ledger peer, orderer, identity agent and Core
//! Service behind one event-driven `handle` entry point. The node never reads
//! a clock; every input carries the current time.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cas::{compute_cid, BlockStore, Cas, CasMsg, CasStep, ContentId, FetchToken, GetStart};
use crate::codec::{self, Hash32, HexBytes};
use crate::config::NetworkConfig;
use crate::crypto::{derive_rng, Keypair, PublicKey};
use crate::error::{Error, ErrorBody, Result};
use crate::genesis::Genesis;
use crate::identity::{
    issue_credential, Applied, Did, IdentityLedger, IdentityRecord, IdentityTx, RejectReason, Role as IdRole,
    Verifier, MEMBER_SCHEMA,
};
use crate::ledger::{
    public_commitment, DataRecord, Journal, OrderedBlock, Peer, PeerConfig, PrivateRecord, Proposal,
    ProposalResponse, Registry, TransactionEnvelope, TxId, ValidationFlag, DATA_CC, PRIVATE_COLLECTION, VOTE_CC,
};
use crate::msg::Msg;
use crate::net::{Addr, NodeId};
use crate::ordering::{OrderOutput, Orderer, Payload, Role, Submission, SubmitOutcome};
use crate::service::{
    Health, MemberKind, OnboardRequest, Onboarded, PushRequest, QueryRequest, QueryResult, Request, Response,
    TxReceipt, VerificationReport,
};
use crate::time::{Span, Time};

/// Delay before asking an endorser again after it did not yet know the client.
const IDENTITY_LAG_RETRY: Span = Span(20_000);
/// Delay before retrying a submission while no leader is known.
const NO_LEADER_RETRY: Span = Span(100_000);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum NodeEvent {
    BecameLeader { term: u64 },
    BlockCommitted { number: u64, txs: usize, valid: usize },
    IdentityApplied { index: u64, appended: bool },
    Receipt { tx_id: TxId, flag: ValidationFlag, block: u64 },
    Refused { what: String, reason: String },
}

#[derive(Debug, Default)]
pub struct NodeOutput {
    pub send: Vec<(Addr, Msg)>,
    /// Modeled processing time of this step (zero when the cost model is off).
    pub cost: Span,
    pub events: Vec<NodeEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum TimerKind {
    EndorseRetry,
    Resubmit,
    Deadline,
    OnboardRetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Waiter {
    client: Addr,
    req: u64,
}

#[derive(Debug)]
struct PushOp {
    waiters: Vec<Waiter>,
    private: bool,
    cid: ContentId,
    commitment: Option<Hash32>,
    proposal: Proposal,
    tx_id: TxId,
    responses: BTreeMap<String, ProposalResponse>,
    retry_now: Vec<String>,
    envelope: Option<TransactionEnvelope>,
}

#[derive(Debug)]
struct OnboardOp {
    waiters: Vec<Waiter>,
    req: OnboardRequest,
    deadline: Time,
}

#[derive(Debug)]
enum CasWait {
    Raw(Waiter),
    Query { waiter: Waiter, key: String, cid: ContentId, metadata: BTreeMap<String, String>, report: VerificationReport },
}

/// Durable per-node state survives `restart`; everything else is rebuilt.
pub struct Node {
    id: NodeId,
    cfg: Arc<NetworkConfig>,
    nodes: Vec<NodeId>,
    agent: Did,
    key: Keypair,
    rng: ChaCha20Rng,
    org_nodes: BTreeMap<String, NodeId>,

    pub peer: Peer,
    pub identities: IdentityLedger,
    pub cas: Cas,
    pub orderer: Orderer,

    verifier: Verifier,
    ops: BTreeMap<u64, PushOp>,
    by_tx: HashMap<TxId, u64>,
    next_op: u64,
    timers: BinaryHeap<Reverse<(Time, u64, TimerKind)>>,
    cas_waits: BTreeMap<FetchToken, CasWait>,
    next_token: FetchToken,
    onboards: BTreeMap<u64, OnboardOp>,
    onboard_ids: BTreeMap<Did, u64>,
    connections: BTreeMap<Did, PublicKey>,
    cost_ms: f64,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node").field("id", &self.id).field("height", &self.peer.height()).finish_non_exhaustive()
    }
}

impl Node {
    pub fn new(id: NodeId, cfg: Arc<NetworkConfig>, genesis: &Genesis, journal: Journal, now: Time) -> Self {
        let nodes = cfg.node_ids();
        let key = genesis.key(id).clone();
        let mut registry = Registry::builtin();
        if !cfg.chaincodes.is_empty() {
            registry.retain(&cfg.chaincodes);
        }
        let peer = Peer::new(
            PeerConfig {
                org: id.org(),
                policy: cfg.policy(),
                collections: cfg.collections(),
                org_keys: genesis.org_keys.clone(),
            },
            key.clone(),
            registry,
            journal,
        );
        let identities = IdentityLedger::with_genesis(genesis.identity.clone()).expect("genesis records are valid");
        let cas = Cas::new(
            id,
            nodes.clone(),
            BlockStore::new(cfg.cas.max_payload, cfg.cas.capacity),
            Span::from_millis(cfg.cas.fetch_timeout_ms),
        );
        let orderer = Orderer::new(id, nodes.clone(), cfg.ordering(), derive_rng(cfg.seed, "raft", id.0 as u64), now);
        Node {
            id,
            org_nodes: nodes.iter().map(|n| (n.org(), *n)).collect(),
            nodes,
            agent: genesis.agent(id).clone(),
            key,
            rng: derive_rng(cfg.seed, "node", id.0 as u64),
            cfg,
            peer,
            identities,
            cas,
            orderer,
            verifier: Verifier::new(),
            ops: BTreeMap::new(),
            by_tx: HashMap::new(),
            next_op: 1,
            timers: BinaryHeap::new(),
            cas_waits: BTreeMap::new(),
            next_token: 1,
            onboards: BTreeMap::new(),
            onboard_ids: BTreeMap::new(),
            connections: BTreeMap::new(),
            cost_ms: 0.0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn agent(&self) -> &Did {
        &self.agent
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    /// Operations in flight in the Core Service.
    pub fn in_flight(&self) -> usize {
        self.ops.len() + self.onboards.len()
    }

    pub fn next_deadline(&self) -> Time {
        let mut t = self.orderer.next_deadline();
        if let Some(c) = self.cas.next_deadline() {
            t = t.min(c);
        }
        if let Some(Reverse((x, _, _))) = self.timers.peek() {
            t = t.min(*x);
        }
        t
    }

    /// Crash recovery: durable stores are kept, in-flight work is forgotten.
    pub fn restart(&mut self, now: Time) -> NodeOutput {
        self.orderer.restart(now);
        self.cas.reset_volatile();
        self.verifier.reset();
        self.ops.clear();
        self.by_tx.clear();
        self.timers.clear();
        self.cas_waits.clear();
        self.onboards.clear();
        self.onboard_ids.clear();
        self.connections.clear();
        self.cost_ms = 0.0;
        let mut out = NodeOutput::default();
        self.push_cas_sends(self.cas.reannounce_all(), &mut out);
        out
    }

    pub fn tick(&mut self, now: Time) -> NodeOutput {
        let mut out = NodeOutput::default();
        let mut oo = OrderOutput::default();
        self.orderer.tick(now, &mut oo);
        self.absorb_order(now, oo, &mut out);
        let step = self.cas.tick(now);
        self.absorb_cas(now, step, &mut out);
        while let Some(Reverse((t, op, kind))) = self.timers.peek().copied() {
            if t > now {
                break;
            }
            self.timers.pop();
            self.fire_timer(now, op, kind, &mut out);
        }
        self.finish(out)
    }

    pub fn handle(&mut self, now: Time, from: Addr, msg: Msg) -> NodeOutput {
        let mut out = NodeOutput::default();
        match (from, msg) {
            (Addr::Node(n), Msg::Raft(m)) => {
                let mut oo = OrderOutput::default();
                self.orderer.handle(now, n, m, &mut oo);
                self.absorb_order(now, oo, &mut out);
            }
            (Addr::Node(n), Msg::Cas(m)) => {
                if matches!(m, CasMsg::Announce { .. }) {
                    self.charge(self.cfg.cost.cas_announce_ms);
                }
                let step = self.cas.handle(n, m, now);
                self.absorb_cas(now, step, &mut out);
            }
            (Addr::Node(n), Msg::Endorse { req, proposal }) => {
                let result = self.endorse(&proposal).map_err(|e| ErrorBody::from(&e));
                out.send.push((Addr::Node(n), Msg::EndorseReply { req, result }));
            }
            (Addr::Node(n), Msg::EndorseReply { req, result }) => self.on_endorse_reply(now, n, req, result, &mut out),
            (client, Msg::Request { req, body }) => self.on_request(now, Waiter { client, req }, body, &mut out),
            (from, other) => out.events.push(NodeEvent::Refused {
                what: other.channel().into(),
                reason: format!("unexpected from {from}"),
            }),
        }
        self.finish(out)
    }

    fn finish(&mut self, mut out: NodeOutput) -> NodeOutput {
        if self.cfg.cost.enabled {
            out.cost = Span::from_secs_f64(self.cost_ms / 1000.0);
        }
        self.cost_ms = 0.0;
        out
    }

    fn charge(&mut self, ms: f64) {
        self.cost_ms += ms;
    }

    fn schedule(&mut self, at: Time, op: u64, kind: TimerKind) {
        self.timers.push(Reverse((at, op, kind)));
    }

    fn reply(&self, w: Waiter, result: Result<Response>, out: &mut NodeOutput) {
        out.send.push((w.client, Msg::Response { req: w.req, result: result.map_err(|e| ErrorBody::from(&e)) }));
    }

    fn push_cas_sends(&self, sends: Vec<(NodeId, CasMsg)>, out: &mut NodeOutput) {
        out.send.extend(sends.into_iter().map(|(n, m)| (Addr::Node(n), Msg::Cas(m))));
    }

    // ---- ordering ----

    fn absorb_order(&mut self, now: Time, oo: OrderOutput, out: &mut NodeOutput) {
        if let Some(term) = oo.became_leader {
            out.events.push(NodeEvent::BecameLeader { term });
        }
        out.send.extend(oo.send.into_iter().map(|(n, m)| (Addr::Node(n), Msg::Raft(m))));
        for (index, payload) in oo.deliver {
            match payload {
                Payload::Noop => {}
                Payload::Block(b) => self.commit_block(now, b, out),
                Payload::Identity(tx) => self.apply_identity(now, index, tx, out),
            }
        }
    }

    fn submit(&mut self, now: Time, item: Submission, out: &mut NodeOutput) -> SubmitOutcome {
        let mut oo = OrderOutput::default();
        let r = self.orderer.submit(now, item, &mut oo);
        self.absorb_order(now, oo, out);
        r
    }

    fn commit_block(&mut self, now: Time, block: OrderedBlock, out: &mut NodeOutput) {
        let number = block.header.number;
        let commitments: Vec<Option<Hash32>> = block
            .txs
            .iter()
            .map(|t| t.rwset.private_writes.first().map(|w| w.commitment))
            .collect();
        let report = match self.peer.validate_and_commit(block, &self.identities) {
            Ok(r) => r,
            Err(e) => {
                out.events.push(NodeEvent::Refused { what: format!("block {number}"), reason: e.to_string() });
                return;
            }
        };
        let c = self.cfg.cost;
        self.charge(
            c.block_commit_ms
                + report.signature_checks as f64 * c.sig_verify_ms
                + report.writes as f64 * c.state_write_ms
                + report.private_installed as f64 * c.private_commit_ms,
        );
        let valid = report.results.iter().filter(|(_, f)| *f == ValidationFlag::Valid).count();
        out.events.push(NodeEvent::BlockCommitted { number, txs: report.results.len(), valid });
        for ((tx_id, flag), onchain) in report.results.into_iter().zip(commitments) {
            if flag == ValidationFlag::DuplicateTxid {
                continue;
            }
            let Some(op_id) = self.by_tx.remove(&tx_id) else { continue };
            let Some(op) = self.ops.remove(&op_id) else { continue };
            let commitment = if flag == ValidationFlag::Valid { onchain.or(op.commitment) } else { op.commitment };
            let receipt = TxReceipt { tx_id, block: number, flag, cid: op.cid, commitment: op.private.then_some(commitment).flatten() };
            out.events.push(NodeEvent::Receipt { tx_id, flag, block: number });
            for w in op.waiters {
                self.reply(w, Ok(Response::Receipt(receipt.clone())), out);
            }
        }
        let _ = now;
    }

    fn apply_identity(&mut self, now: Time, index: u64, tx: IdentityTx, out: &mut NodeOutput) {
        let nym = match &tx.record {
            IdentityRecord::Nym { did, .. } => Some(did.clone()),
            _ => None,
        };
        match self.identities.apply(tx) {
            Ok(a) => out.events.push(NodeEvent::IdentityApplied { index, appended: a == Applied::Appended }),
            Err(e) => out.events.push(NodeEvent::Refused { what: format!("identity entry {index}"), reason: e.to_string() }),
        }
        if let Some(did) = nym {
            if let Some(op) = self.onboard_ids.remove(&did).and_then(|id| self.onboards.remove(&id)) {
                self.finish_onboard(now, op, out);
            }
        }
    }

    // ---- endorsement ----

    fn endorse(&mut self, proposal: &Proposal) -> Result<ProposalResponse> {
        let (resp, stats) = self.peer.endorse(proposal, &self.identities, &mut self.verifier)?;
        let c = self.cfg.cost;
        let verifies = if stats.presentation_checked { 3.0 } else { 1.0 };
        self.charge(
            verifies * c.sig_verify_ms
                + c.chaincode_ms
                + c.sign_ms
                + stats.private_writes as f64 * c.transient_write_ms,
        );
        Ok(resp)
    }

    fn required_nodes(&self) -> Vec<(String, NodeId)> {
        self.peer
            .config()
            .policy
            .required_orgs
            .iter()
            .filter_map(|o| self.org_nodes.get(o).map(|n| (o.clone(), *n)))
            .collect()
    }

    fn on_endorse_reply(
        &mut self,
        now: Time,
        from: NodeId,
        op_id: u64,
        result: std::result::Result<ProposalResponse, ErrorBody>,
        out: &mut NodeOutput,
    ) {
        let Some(op) = self.ops.get_mut(&op_id) else { return };
        if op.envelope.is_some() {
            return;
        }
        match result {
            Ok(resp) if resp.tx_id == op.tx_id && resp.endorsement.org == from.org() => {
                op.responses.insert(from.org(), resp);
            }
            Ok(_) => return,
            Err(e) if e.code == "identity_rejected" && e.message.contains(&RejectReason::UnregisteredDid.to_string()) => {
                // The endorser has not applied the client's registration yet.
                op.retry_now.push(from.org());
                self.schedule(now + IDENTITY_LAG_RETRY, op_id, TimerKind::EndorseRetry);
                return;
            }
            Err(e) => {
                self.fail_op(op_id, e.into_error(), out);
                return;
            }
        }
        self.try_assemble(now, op_id, out);
    }

    fn try_assemble(&mut self, now: Time, op_id: u64, out: &mut NodeOutput) {
        let required = self.required_nodes();
        let Some(op) = self.ops.get_mut(&op_id) else { return };
        if !required.iter().all(|(org, _)| op.responses.contains_key(org)) {
            return;
        }
        let responses: Vec<ProposalResponse> = op.responses.values().cloned().collect();
        let Some(env) = TransactionEnvelope::assemble(&op.proposal, &responses) else {
            self.fail_op(op_id, Error::Chaincode("endorsers produced different results".into()), out);
            return;
        };
        op.envelope = Some(env.clone());
        self.submit_envelope(now, op_id, env, out);
    }

    fn submit_envelope(&mut self, now: Time, op_id: u64, env: TransactionEnvelope, out: &mut NodeOutput) {
        let retry = match self.submit(now, Submission::Tx(env), out) {
            SubmitOutcome::Unavailable => NO_LEADER_RETRY,
            _ => Span::from_millis(self.cfg.core.resubmit_ms),
        };
        if self.ops.contains_key(&op_id) {
            self.schedule(now + retry, op_id, TimerKind::Resubmit);
        }
    }

    fn fail_op(&mut self, op_id: u64, err: Error, out: &mut NodeOutput) {
        if let Some(op) = self.ops.remove(&op_id) {
            self.by_tx.remove(&op.tx_id);
            for w in op.waiters {
                self.reply(w, Err(err.clone()), out);
            }
        }
    }

    fn fire_timer(&mut self, now: Time, op_id: u64, kind: TimerKind, out: &mut NodeOutput) {
        match kind {
            TimerKind::Deadline => {
                if self.ops.contains_key(&op_id) {
                    self.fail_op(op_id, Error::Timeout("no commit observed before the receipt timeout".into()), out);
                }
            }
            TimerKind::EndorseRetry => {
                let required = self.required_nodes();
                let Some(op) = self.ops.get_mut(&op_id) else { return };
                if op.envelope.is_some() {
                    return;
                }
                let mut targets: Vec<(String, NodeId)> = std::mem::take(&mut op.retry_now)
                    .into_iter()
                    .filter_map(|o| required.iter().find(|(r, _)| *r == o).cloned())
                    .collect();
                if targets.is_empty() {
                    // Periodic retry: anyone still silent.
                    targets = required.iter().filter(|(o, _)| !op.responses.contains_key(o)).cloned().collect();
                    self.schedule(now + Span::from_millis(self.cfg.core.endorse_retry_ms), op_id, TimerKind::EndorseRetry);
                }
                let Some(op) = self.ops.get(&op_id) else { return };
                let proposal = op.proposal.clone();
                for (org, node) in targets {
                    if op.responses.contains_key(&org) {
                        continue;
                    }
                    out.send.push((Addr::Node(node), Msg::Endorse { req: op_id, proposal: proposal.clone() }));
                }
            }
            TimerKind::Resubmit => {
                let Some(env) = self.ops.get(&op_id).and_then(|o| o.envelope.clone()) else { return };
                self.submit_envelope(now, op_id, env, out);
            }
            TimerKind::OnboardRetry => {
                let Some(op) = self.onboards.get(&op_id) else { return };
                if now >= op.deadline {
                    let op = self.onboards.remove(&op_id).expect("present");
                    self.onboard_ids.remove(&op.req.did);
                    let did = op.req.did;
                    for w in op.waiters {
                        self.reply(w, Err(Error::Timeout(format!("{did} not registered in time"))), out);
                    }
                } else {
                    self.submit_nym(now, op_id, out);
                }
            }
        }
    }

    // ---- Core Service ----

    fn on_request(&mut self, now: Time, w: Waiter, body: Request, out: &mut NodeOutput) {
        match body {
            Request::Push(req) => {
                if let Err(e) = self.start_push(now, w, req, out) {
                    self.reply(w, Err(e), out);
                }
            }
            Request::Query(q) => {
                if let Err(e) = self.start_query(now, w, q, out) {
                    self.reply(w, Err(e), out);
                }
            }
            Request::Onboard(req) => self.start_onboard(now, w, req, out),
            Request::Connect { did, verkey } => {
                let r = if did.is_bound_to(&verkey) {
                    self.connections.insert(did, verkey);
                    Ok(Response::Connected { agent: self.agent.clone() })
                } else {
                    Err(Error::IdentityRejected("did is not derived from verkey".into()))
                };
                self.reply(w, r, out);
            }
            Request::Health => {
                let h = Health {
                    node: self.id.to_string(),
                    agent: self.agent.clone(),
                    role: self.orderer.role(),
                    term: self.orderer.term(),
                    leader: self.orderer.leader().map(|l| l.to_string()),
                    height: self.peer.height(),
                };
                self.reply(w, Ok(Response::Health(h)), out);
            }
            Request::Height => self.reply(w, Ok(Response::Height { height: self.peer.height() }), out),
            Request::CasPut { data } => {
                let r = self.cas_put(&data, out).map(|cid| Response::Cid { cid });
                self.reply(w, r, out);
            }
            Request::CasGet { cid } => {
                let token = self.next_token;
                self.next_token += 1;
                match self.cas.get(cid, token, now) {
                    GetStart::Ready(r) => {
                        self.reply(w, r.map(|b| Response::Bytes { data: HexBytes(b.to_vec()) }), out)
                    }
                    GetStart::Pending(sends) => {
                        self.cas_waits.insert(token, CasWait::Raw(w));
                        self.push_cas_sends(sends, out);
                    }
                }
            }
            Request::Resolve { did } => {
                let r = self
                    .identities
                    .resolve(&did)
                    .map(Response::DidDoc)
                    .ok_or_else(|| Error::NotFound(format!("{did} is not registered")));
                self.reply(w, r, out);
            }
            Request::Verify { presentation, nonce } => {
                self.charge(2.0 * self.cfg.cost.sig_verify_ms);
                let r = self.verifier.verify_presentation(&self.identities, &presentation, &nonce);
                self.reply(w, Ok(Response::Verdict(crate::identity::Verdict::from_result(r))), out);
            }
        }
    }

    fn cas_put(&mut self, data: &[u8], out: &mut NodeOutput) -> Result<ContentId> {
        self.charge(self.cfg.cost.cas_put_ms);
        let (cid, sends) = self.cas.put(data)?;
        self.push_cas_sends(sends, out);
        Ok(cid)
    }

    fn start_push(&mut self, now: Time, w: Waiter, req: PushRequest, out: &mut NodeOutput) -> Result<()> {
        req.check()?;
        let tx_id = req.header.tx_id();
        if let Some(op_id) = self.by_tx.get(&tx_id).copied() {
            if let Some(op) = self.ops.get_mut(&op_id) {
                op.waiters.push(w);
                return Ok(());
            }
        }
        if let Some((block, flag)) = self.peer.tx_status(&tx_id) {
            // Retried request whose transaction already committed.
            let commitment = if req.private && flag == ValidationFlag::Valid {
                self.peer
                    .state
                    .get(&req.key)
                    .and_then(|v| <[u8; 32]>::try_from(v.value.0.as_slice()).ok())
                    .map(Hash32)
            } else {
                None
            };
            let receipt = TxReceipt { tx_id, block, flag, cid: req.cid(), commitment };
            self.reply(w, Ok(Response::Receipt(receipt)), out);
            return Ok(());
        }

        // Identity first: a rejected client leaves no trace in the content store.
        let cached = self.verifier.is_cached_member(&req.header.client, MEMBER_SCHEMA);
        self.charge(if cached { 1.0 } else { 3.0 } * self.cfg.cost.sig_verify_ms);
        self.verifier
            .verify_transactor(
                &self.identities,
                &req.header.client,
                &req.client_signature,
                &req.header.signing_bytes(),
                MEMBER_SCHEMA,
                req.presentation.as_ref(),
                &tx_id.to_string(),
            )
            .map_err(|r| Error::IdentityRejected(r.to_string()))?;

        let cid = if req.cas { self.cas_put(&req.payload, out)? } else { compute_cid(&req.payload) };
        let mut transient = BTreeMap::new();
        let mut commitment = None;
        if req.private {
            let mut salt = [0u8; 32];
            self.rng.fill_bytes(&mut salt);
            let salt = Hash32(salt);
            commitment = Some(public_commitment(&salt, &cid));
            transient.insert("salt".to_string(), HexBytes(salt.0.to_vec()));
            transient.insert("cid".to_string(), HexBytes(cid.to_string().into_bytes()));
            if !req.cas {
                transient.insert("inline".to_string(), req.payload.clone());
            }
        }
        let proposal = Proposal {
            header: req.header.clone(),
            client_signature: req.client_signature,
            transient,
            presentation: req.presentation.clone(),
        };
        let op_id = self.next_op;
        self.next_op += 1;
        self.ops.insert(
            op_id,
            PushOp {
                waiters: vec![w],
                private: req.private,
                cid,
                commitment,
                proposal: proposal.clone(),
                tx_id,
                responses: BTreeMap::new(),
                retry_now: Vec::new(),
                envelope: None,
            },
        );
        self.by_tx.insert(tx_id, op_id);
        self.schedule(now + Span::from_millis(self.cfg.core.receipt_timeout_ms), op_id, TimerKind::Deadline);
        self.schedule(now + Span::from_millis(self.cfg.core.endorse_retry_ms), op_id, TimerKind::EndorseRetry);

        for (org, node) in self.required_nodes() {
            if node == self.id {
                match self.endorse(&proposal) {
                    Ok(resp) => {
                        if let Some(op) = self.ops.get_mut(&op_id) {
                            op.responses.insert(org, resp);
                        }
                    }
                    Err(e) => {
                        self.fail_op(op_id, e, out);
                        return Ok(());
                    }
                }
            } else {
                out.send.push((Addr::Node(node), Msg::Endorse { req: op_id, proposal: proposal.clone() }));
            }
        }
        self.try_assemble(now, op_id, out);
        Ok(())
    }

    fn start_query(&mut self, now: Time, w: Waiter, q: QueryRequest, out: &mut NodeOutput) -> Result<()> {
        let cached = self.verifier.is_cached_member(&q.client, MEMBER_SCHEMA);
        self.charge(if cached { 1.0 } else { 3.0 } * self.cfg.cost.sig_verify_ms);
        let nonce = QueryRequest::nonce(&q.key, q.private, &q.client, q.timestamp);
        self.verifier
            .verify_transactor(
                &self.identities,
                &q.client,
                &q.signature,
                &q.own_signing_bytes(),
                MEMBER_SCHEMA,
                q.presentation.as_ref(),
                &nonce,
            )
            .map_err(|r| Error::IdentityRejected(r.to_string()))?;
        self.charge(2.0 * self.cfg.cost.chaincode_ms);

        let (cid, inline, metadata, commitment_ok) = if q.private {
            let raw = self.peer.query(VOTE_CC, "get_private", std::slice::from_ref(&q.key))?;
            let rec: PrivateRecord = codec::from_slice(&raw)?;
            let onchain = self.peer.query(VOTE_CC, "get_commitment", std::slice::from_ref(&q.key))?;
            if onchain.as_slice() != rec.commitment().as_bytes() {
                return Err(Error::Tamper(format!(
                    "private record for {} does not match its on-chain commitment",
                    q.key
                )));
            }
            (rec.cid, rec.inline, BTreeMap::new(), Some(true))
        } else {
            let raw = self.peer.query(DATA_CC, "get", std::slice::from_ref(&q.key))?;
            let rec: DataRecord = codec::from_slice(&raw)?;
            (rec.cid, rec.inline, rec.metadata, None)
        };
        let block = self.peer.state.version(&q.key).map(|v| v.block).unwrap_or_default();
        let report = VerificationReport { commitment_ok, cas_integrity_ok: true, block };
        if let Some(bytes) = inline {
            if !cid.matches(&bytes) {
                return Err(Error::Integrity(format!("inline payload of {} does not match {cid}", q.key)));
            }
            let r = QueryResult { key: q.key, payload: bytes, cid, metadata, report };
            self.reply(w, Ok(Response::Data(r)), out);
            return Ok(());
        }
        let token = self.next_token;
        self.next_token += 1;
        match self.cas.get(cid, token, now) {
            GetStart::Ready(r) => {
                let r = r.map(|b| Response::Data(QueryResult { key: q.key, payload: HexBytes(b.to_vec()), cid, metadata, report }));
                self.reply(w, r, out);
            }
            GetStart::Pending(sends) => {
                self.cas_waits.insert(token, CasWait::Query { waiter: w, key: q.key, cid, metadata, report });
                self.push_cas_sends(sends, out);
            }
        }
        Ok(())
    }

    fn absorb_cas(&mut self, _now: Time, step: CasStep, out: &mut NodeOutput) {
        self.push_cas_sends(step.send, out);
        for (token, result) in step.done {
            let Some(wait) = self.cas_waits.remove(&token) else { continue };
            match wait {
                CasWait::Raw(w) => self.reply(w, result.map(|b| Response::Bytes { data: HexBytes(b.to_vec()) }), out),
                CasWait::Query { waiter, key, cid, metadata, report } => {
                    let r = result.map(|b| {
                        Response::Data(QueryResult { key, payload: HexBytes(b.to_vec()), cid, metadata, report })
                    });
                    self.reply(waiter, r, out);
                }
            }
        }
    }

    // ---- onboarding ----

    fn start_onboard(&mut self, now: Time, w: Waiter, req: OnboardRequest, out: &mut NodeOutput) {
        if !req.did.is_bound_to(&req.verkey) {
            self.reply(w, Err(Error::IdentityRejected("did is not derived from verkey".into())), out);
            return;
        }
        if req.name.is_empty() {
            self.reply(w, Err(Error::InvalidRequest("name must not be empty".into())), out);
            return;
        }
        let op = OnboardOp {
            waiters: vec![w],
            req: req.clone(),
            deadline: now + Span::from_millis(self.cfg.core.receipt_timeout_ms),
        };
        if self.identities.resolve(&req.did).is_some_and(|d| d.verkey == req.verkey) {
            self.finish_onboard(now, op, out);
            return;
        }
        if let Some(existing) = self.onboard_ids.get(&req.did).and_then(|id| self.onboards.get_mut(id)) {
            existing.waiters.push(w);
            return;
        }
        let op_id = self.next_op;
        self.next_op += 1;
        self.onboard_ids.insert(req.did.clone(), op_id);
        self.onboards.insert(op_id, op);
        self.submit_nym(now, op_id, out);
    }

    fn submit_nym(&mut self, now: Time, op_id: u64, out: &mut NodeOutput) {
        let Some(op) = self.onboards.get(&op_id) else { return };
        let did = &op.req.did;
        let role = match op.req.kind {
            MemberKind::User => IdRole::User,
            MemberKind::Application => IdRole::Application,
        };
        let tx = IdentityTx::signed(
            IdentityRecord::Nym { did: did.clone(), verkey: op.req.verkey, role, endpoint: String::new() },
            self.agent.clone(),
            &self.key,
        );
        self.charge(self.cfg.cost.sign_ms);
        let retry = match self.submit(now, Submission::Identity(tx), out) {
            SubmitOutcome::Unavailable => NO_LEADER_RETRY,
            _ => Span::from_millis(self.cfg.core.resubmit_ms),
        };
        self.schedule(now + retry, op_id, TimerKind::OnboardRetry);
    }

    fn finish_onboard(&mut self, _now: Time, op: OnboardOp, out: &mut NodeOutput) {
        let attrs: BTreeMap<String, String> = [
            ("kind".to_string(), op.req.kind.to_string()),
            ("name".to_string(), op.req.name.clone()),
            ("node".to_string(), self.id.to_string()),
        ]
        .into();
        self.charge(self.cfg.cost.sign_ms);
        let r = issue_credential(&self.identities, &self.agent, &self.key, &op.req.did, MEMBER_SCHEMA, &attrs, &mut self.rng)
            .map(|credential| Response::Onboarded(Onboarded { did: op.req.did.clone(), credential }));
        for w in op.waiters {
            self.reply(w, r.clone(), out);
        }
    }

    // ---- inspection ----

    pub fn is_leader(&self) -> bool {
        self.orderer.role() == Role::Leader
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Fault-injection hook: flips one bit of a stored private record's salt
    /// (`field = "salt"`) or cid digest (`field = "cid"`).
    pub fn corrupt_private(&mut self, key: &str, field: &str, byte: usize, bit: u8) -> bool {
        let Some(rec) = self.peer.private.get_mut(PRIVATE_COLLECTION, key) else { return false };
        let target = match field {
            "salt" => &mut rec.salt.0,
            "cid" => &mut rec.cid.0 .0,
            _ => return false,
        };
        target[byte % 32] ^= 1 << (bit % 8);
        true
    }
}
