// SPDX-License-Identifier: Apache-2.0

//! Discrete-event executor. Every node is a single server with a FIFO inbox:
//! a step starts when the node is idle, takes the modeled cost of its work,
//! and its outgoing messages leave when the step finishes. Links add latency
//! and loss; same-pair messages stay in order.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use deon_core::codec;
use deon_core::crypto::derive_rng;
use deon_core::genesis::Genesis;
use deon_core::ledger::Journal;
use deon_core::msg::Msg;
use deon_core::net::{Addr, ClientId, NodeId};
use deon_core::node::{Node, NodeOutput};
use deon_core::service::Request;
use deon_core::time::{Span, Time};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::bus::{Bus, ClientResponse};
use crate::config::NetConfig;
use crate::trace::{CorruptTarget, DropReason, Fault, TraceLog, TraceMsg};

/// A fault scheduled to fire at a given time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetAction {
    Kill(NodeId),
    Restart(NodeId),
    Partition(Vec<Vec<NodeId>>),
    Heal,
    Corrupt(CorruptTarget),
}

#[derive(Debug)]
enum Ev {
    Deliver { msg: TraceMsg },
    Wake(usize),
    Tick(usize, Time),
    Action(NetAction),
}

#[derive(Debug)]
enum Input {
    Msg(Addr, Arc<[u8]>),
    Tick,
}

struct Slot {
    node: Node,
    alive: bool,
    inbox: VecDeque<Input>,
    busy_until: Time,
    wake_at: Option<Time>,
    tick_at: Option<Time>,
    tick_queued: bool,
    /// Total modeled busy time, for utilisation reports.
    busy: Span,
}

pub struct SimNet {
    cfg: NetConfig,
    genesis: Genesis,
    now: Time,
    seq: u64,
    queue: BinaryHeap<Reverse<(Time, u64)>>,
    pending: HashMap<u64, Ev>,
    slots: Vec<Slot>,
    link_rng: ChaCha20Rng,
    link_last: HashMap<(Addr, Addr), Time>,
    groups: Option<Vec<BTreeSet<NodeId>>>,
    responses: VecDeque<ClientResponse>,
    pub trace: TraceLog,
}

impl SimNet {
    pub fn new(cfg: NetConfig) -> deon_core::Result<Self> {
        cfg.network.validate()?;
        let genesis = Genesis::new(&cfg.network);
        let shared = Arc::new(cfg.network.clone());
        let mut slots = Vec::new();
        for id in cfg.network.node_ids() {
            let journal = match &cfg.journal_dir {
                Some(dir) => Journal::create(&dir.join(format!("{id}.journal")))?,
                None => Journal::in_memory(),
            };
            slots.push(Slot {
                node: Node::new(id, shared.clone(), &genesis, journal, Time(0)),
                alive: true,
                inbox: VecDeque::new(),
                busy_until: Time(0),
                wake_at: None,
                tick_at: None,
                tick_queued: false,
                busy: Span(0),
            });
        }
        let mut net = SimNet {
            link_rng: derive_rng(cfg.network.seed, "link", 0),
            trace: TraceLog::new(cfg.capture),
            cfg,
            genesis,
            now: Time(0),
            seq: 0,
            queue: BinaryHeap::new(),
            pending: HashMap::new(),
            slots,
            link_last: HashMap::new(),
            groups: None,
            responses: VecDeque::new(),
        };
        for i in 0..net.slots.len() {
            net.reschedule_tick(i);
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.slots[id.0 as usize].node
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.slots[id.0 as usize].node
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.slots.iter().map(|s| &s.node)
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.slots[id.0 as usize].alive
    }

    pub fn busy_time(&self, id: NodeId) -> Span {
        self.slots[id.0 as usize].busy
    }

    /// Current leader as seen by a live node claiming the role.
    pub fn leader(&self) -> Option<NodeId> {
        self.slots
            .iter()
            .filter(|s| s.alive && s.node.is_leader())
            .max_by_key(|s| s.node.orderer.term())
            .map(|s| s.node.id())
    }

    fn push(&mut self, at: Time, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq)));
        self.pending.insert(self.seq, ev);
    }

    pub fn schedule(&mut self, at: Time, action: NetAction) {
        self.push(at.max(self.now), Ev::Action(action));
    }

    fn connected(&self, a: Addr, b: Addr) -> bool {
        let (Addr::Node(x), Addr::Node(y)) = (a, b) else { return true };
        match &self.groups {
            None => true,
            Some(gs) => gs.iter().any(|g| g.contains(&x) && g.contains(&y)),
        }
    }

    fn latency(&mut self) -> Span {
        let l = self.cfg.link;
        let jitter = if l.jitter_ms > 0.0 { self.link_rng.gen_range(0.0..l.jitter_ms) } else { 0.0 };
        Span::from_secs_f64((l.base_ms + jitter) / 1000.0)
    }

    /// Puts encoded bytes on the link `from -> to`, leaving at `sent`.
    fn transmit(&mut self, sent: Time, from: Addr, to: Addr, channel: &'static str, bytes: Arc<[u8]>) {
        let mut msg = TraceMsg { sent, at: sent, from, to, channel, bytes, dropped: None };
        let lost = self.cfg.link.loss > 0.0 && self.link_rng.gen_bool(self.cfg.link.loss.min(1.0));
        if lost {
            msg.dropped = Some(DropReason::Loss);
        } else if !self.connected(from, to) {
            msg.dropped = Some(DropReason::Partition);
        }
        if msg.dropped.is_some() {
            self.trace.record(msg);
            return;
        }
        let at = sent + self.latency();
        let last = self.link_last.entry((from, to)).or_insert(Time(0));
        let at = at.max(*last);
        *last = at;
        msg.at = at;
        self.push(at, Ev::Deliver { msg });
    }

    fn reschedule_tick(&mut self, i: usize) {
        let slot = &self.slots[i];
        if !slot.alive || slot.tick_queued {
            return;
        }
        let d = slot.node.next_deadline().max(self.now);
        if slot.tick_at.map_or(true, |t| d < t) {
            self.slots[i].tick_at = Some(d);
            self.push(d, Ev::Tick(i, d));
        }
    }

    fn process(&mut self, i: usize) {
        loop {
            let slot = &mut self.slots[i];
            if !slot.alive || slot.busy_until > self.now {
                break;
            }
            let Some(input) = slot.inbox.pop_front() else { break };
            let start = self.now;
            let out = match input {
                Input::Tick => {
                    slot.tick_queued = false;
                    slot.node.tick(start)
                }
                Input::Msg(from, bytes) => match codec::from_slice::<Msg>(&bytes) {
                    Ok(msg) => slot.node.handle(start, from, msg),
                    Err(_) => NodeOutput::default(),
                },
            };
            self.absorb(i, start, out);
        }
        let slot = &mut self.slots[i];
        if slot.alive && !slot.inbox.is_empty() && slot.busy_until > self.now && slot.wake_at != Some(slot.busy_until) {
            slot.wake_at = Some(slot.busy_until);
            let t = slot.busy_until;
            self.push(t, Ev::Wake(i));
        }
        self.reschedule_tick(i);
    }

    fn absorb(&mut self, i: usize, start: Time, out: NodeOutput) {
        let cost_model = self.cfg.network.cost;
        let from = Addr::Node(NodeId(i as u32));
        let mut cost = out.cost;
        let mut encoded = Vec::with_capacity(out.send.len());
        for (to, msg) in out.send {
            let bytes: Arc<[u8]> = codec::to_canonical_vec(&msg).into();
            if cost_model.enabled {
                let kib = bytes.len() as f64 / 1024.0;
                cost = cost + Span::from_secs_f64((cost_model.msg_ms + kib * cost_model.msg_per_kib_ms) / 1000.0);
            }
            encoded.push((to, msg.channel(), bytes));
        }
        let done = start + cost;
        let slot = &mut self.slots[i];
        slot.busy_until = done;
        slot.busy = slot.busy + cost;
        let id = slot.node.id();
        for e in out.events {
            self.trace.event(done, id, e);
        }
        for (to, channel, bytes) in encoded {
            self.transmit(done, from, to, channel, bytes);
        }
    }

    fn on_event(&mut self, ev: Ev) {
        match ev {
            Ev::Deliver { mut msg } => {
                if let Addr::Node(n) = msg.from {
                    if !self.slots[n.0 as usize].alive && msg.channel != "planted" {
                        msg.dropped = Some(DropReason::DeadSender);
                    }
                }
                if msg.dropped.is_none() && !self.connected(msg.from, msg.to) {
                    msg.dropped = Some(DropReason::Partition);
                }
                match msg.to {
                    Addr::Node(n) => {
                        let i = n.0 as usize;
                        if msg.dropped.is_none() && !self.slots[i].alive {
                            msg.dropped = Some(DropReason::DeadReceiver);
                        }
                        if msg.dropped.is_none() {
                            self.slots[i].inbox.push_back(Input::Msg(msg.from, msg.bytes.clone()));
                            self.trace.record(msg);
                            self.process(i);
                        } else {
                            self.trace.record(msg);
                        }
                    }
                    Addr::Client(c) => {
                        if msg.dropped.is_none() {
                            match codec::from_slice::<Msg>(&msg.bytes) {
                                Ok(Msg::Response { req, result }) => {
                                    let Addr::Node(node) = msg.from else { unreachable!("clients only talk to nodes") };
                                    self.responses.push_back(ClientResponse { at: msg.at, client: c, node, req, result });
                                }
                                _ => msg.dropped = Some(DropReason::Malformed),
                            }
                        }
                        self.trace.record(msg);
                    }
                }
            }
            Ev::Wake(i) => {
                self.slots[i].wake_at = None;
                self.process(i);
            }
            Ev::Tick(i, t) => {
                let slot = &mut self.slots[i];
                if slot.tick_at != Some(t) || !slot.alive {
                    return;
                }
                slot.tick_at = None;
                if !slot.tick_queued {
                    slot.tick_queued = true;
                    slot.inbox.push_back(Input::Tick);
                }
                self.process(i);
            }
            Ev::Action(a) => self.apply(a),
        }
    }

    pub fn apply(&mut self, action: NetAction) {
        match action {
            NetAction::Kill(n) => self.kill(n),
            NetAction::Restart(n) => self.restart(n),
            NetAction::Partition(groups) => self.partition(groups),
            NetAction::Heal => self.heal(),
            NetAction::Corrupt(t) => {
                self.corrupt(t);
            }
        }
    }

    pub fn kill(&mut self, n: NodeId) {
        let now = self.now;
        let slot = &mut self.slots[n.0 as usize];
        slot.alive = false;
        slot.inbox.clear();
        slot.busy_until = now;
        slot.tick_at = None;
        slot.wake_at = None;
        slot.tick_queued = false;
        self.trace.fault(now, Fault::Kill { node: n });
    }

    pub fn restart(&mut self, n: NodeId) {
        let i = n.0 as usize;
        if self.slots[i].alive {
            return;
        }
        self.slots[i].alive = true;
        self.trace.fault(self.now, Fault::Restart { node: n });
        let now = self.now;
        let out = self.slots[i].node.restart(now);
        self.absorb(i, now, out);
        self.reschedule_tick(i);
    }

    pub fn partition(&mut self, groups: Vec<Vec<NodeId>>) {
        self.trace.fault(self.now, Fault::Partition { groups: groups.clone() });
        self.groups = Some(groups.into_iter().map(|g| g.into_iter().collect()).collect());
    }

    pub fn heal(&mut self) {
        self.trace.fault(self.now, Fault::Heal);
        self.groups = None;
    }

    /// Flips one bit in a node's storage; returns whether the target existed.
    pub fn corrupt(&mut self, target: CorruptTarget) -> bool {
        let applied = target.apply(self.node_mut(target.node()));
        self.trace.fault(self.now, Fault::Corrupt { target, applied });
        applied
    }

    /// Puts arbitrary bytes on the wire, recorded like any other message.
    /// Used to check that the leakage scan notices what it should.
    pub fn plant(&mut self, from: Addr, to: Addr, bytes: Vec<u8>) {
        self.trace.fault(self.now, Fault::Planted { from, to });
        self.transmit(self.now, from, to, "planted", bytes.into());
    }

    fn step(&mut self) -> bool {
        let Some(Reverse((t, seq))) = self.queue.pop() else { return false };
        self.now = self.now.max(t);
        if let Some(ev) = self.pending.remove(&seq) {
            self.on_event(ev);
        }
        true
    }

    fn next_time(&self) -> Option<Time> {
        self.queue.peek().map(|Reverse((t, _))| *t)
    }

    /// Runs every event up to and including `until`.
    pub fn run_until(&mut self, until: Time) {
        while self.next_time().is_some_and(|t| t <= until) {
            self.step();
        }
        self.now = self.now.max(until);
    }

    pub fn run_for(&mut self, span: Span) {
        self.run_until(self.now + span);
    }

    /// Runs until some live node leads, or `limit` passes.
    pub fn wait_for_leader(&mut self, limit: Span) -> Option<NodeId> {
        let end = self.now + limit;
        while self.leader().is_none() && self.now < end {
            self.run_for(Span::from_millis(10));
        }
        self.leader()
    }

    /// Runs until every live node has committed `height` blocks, or `limit`
    /// passes. Returns whether they got there.
    pub fn wait_for_height(&mut self, height: u64, limit: Span) -> bool {
        let end = self.now + limit;
        loop {
            if self.slots.iter().filter(|s| s.alive).all(|s| s.node.peer.height() >= height) {
                return true;
            }
            if self.now >= end {
                return false;
            }
            self.run_for(Span::from_millis(10));
        }
    }
}

impl Bus for SimNet {
    fn now(&self) -> Time {
        self.now
    }

    fn node_count(&self) -> u32 {
        self.slots.len() as u32
    }

    fn send(&mut self, client: ClientId, node: NodeId, req: u64, body: Request) {
        let msg = Msg::Request { req, body };
        let bytes: Arc<[u8]> = codec::to_canonical_vec(&msg).into();
        self.transmit(self.now, Addr::Client(client), Addr::Node(node), msg.channel(), bytes);
    }

    fn poll(&mut self, until: Time) -> Vec<ClientResponse> {
        while self.responses.is_empty() && self.next_time().is_some_and(|t| t <= until) {
            self.step();
        }
        if self.responses.is_empty() {
            self.now = self.now.max(until);
        }
        self.responses.drain(..).collect()
    }
}
