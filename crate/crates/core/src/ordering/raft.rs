// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::cutter::BlockCutter;
use crate::codec::Hash32;
use crate::identity::IdentityTx;
use crate::ledger::{OrderedBlock, TransactionEnvelope, TxId};
use crate::net::NodeId;
use crate::time::{Span, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingConfig {
    pub election_timeout_min: Span,
    pub election_timeout_max: Span,
    pub heartbeat: Span,
    pub batch_timeout: Span,
    pub max_block_txs: usize,
    /// Log entries carried by one append message.
    pub max_append_entries: usize,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        OrderingConfig {
            election_timeout_min: Span::from_millis(150),
            election_timeout_max: Span::from_millis(300),
            heartbeat: Span::from_millis(50),
            batch_timeout: Span::from_millis(250),
            max_block_txs: 50,
            max_append_entries: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Noop,
    Block(OrderedBlock),
    Identity(IdentityTx),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub term: u64,
    pub payload: Payload,
}

/// Something a client of the ordering service wants ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Submission {
    Tx(TransactionEnvelope),
    Identity(IdentityTx),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "leader", rename_all = "snake_case")]
pub enum SubmitOutcome {
    Ack,
    Redirect(NodeId),
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RaftMsg {
    RequestVote { term: u64, last_index: u64, last_term: u64 },
    Vote { term: u64, granted: bool },
    Append { term: u64, prev_index: u64, prev_term: u64, entries: Vec<LogEntry>, commit: u64 },
    AppendReply { term: u64, success: bool, match_index: u64, conflict_index: u64 },
    /// Submissions relayed towards the leader.
    Forward { items: Vec<Submission> },
}

impl RaftMsg {
    fn term(&self) -> Option<u64> {
        match self {
            RaftMsg::RequestVote { term, .. }
            | RaftMsg::Vote { term, .. }
            | RaftMsg::Append { term, .. }
            | RaftMsg::AppendReply { term, .. } => Some(*term),
            RaftMsg::Forward { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Follower,
    Candidate,
    Leader,
}

/// State that survives a crash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DurableRaft {
    pub term: u64,
    pub voted_for: Option<NodeId>,
    pub log: Vec<LogEntry>,
    /// Highest log index handed to the local node.
    pub applied: u64,
}

#[derive(Debug, Default)]
pub struct OrderOutput {
    pub send: Vec<(NodeId, RaftMsg)>,
    /// Newly committed entries, in log order, with their 1-based index.
    pub deliver: Vec<(u64, Payload)>,
    pub became_leader: Option<u64>,
}

/// One orderer: a Raft replica plus the leader-side block cutter.
#[derive(Debug)]
pub struct Orderer {
    id: NodeId,
    nodes: Vec<NodeId>,
    cfg: OrderingConfig,
    rng: ChaCha20Rng,
    d: DurableRaft,
    role: Role,
    leader: Option<NodeId>,
    commit: u64,
    election_deadline: Time,
    heartbeat_due: Time,
    votes: BTreeSet<NodeId>,
    next: BTreeMap<NodeId, u64>,
    matched: BTreeMap<NodeId, u64>,
    cutter: BlockCutter,
    next_block: (u64, Hash32),
    log_txids: HashSet<TxId>,
    /// Submissions waiting for a leader to become known.
    stranded: Vec<Submission>,
}

impl Orderer {
    pub fn new(id: NodeId, nodes: Vec<NodeId>, cfg: OrderingConfig, rng: ChaCha20Rng, now: Time) -> Self {
        let mut o = Orderer {
            id,
            nodes,
            cfg,
            rng,
            d: DurableRaft::default(),
            role: Role::Follower,
            leader: None,
            commit: 0,
            election_deadline: now,
            heartbeat_due: Time::MAX,
            votes: BTreeSet::new(),
            next: BTreeMap::new(),
            matched: BTreeMap::new(),
            cutter: BlockCutter::new(cfg.max_block_txs, cfg.batch_timeout),
            next_block: (0, Hash32::ZERO),
            log_txids: HashSet::new(),
            stranded: Vec::new(),
        };
        o.reset_election_timer(now);
        o
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn term(&self) -> u64 {
        self.d.term
    }

    pub fn leader(&self) -> Option<NodeId> {
        self.leader
    }

    pub fn commit_index(&self) -> u64 {
        self.commit
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.d.log
    }

    pub fn durable(&self) -> &DurableRaft {
        &self.d
    }

    pub fn config(&self) -> &OrderingConfig {
        &self.cfg
    }

    pub fn pending(&self) -> usize {
        self.cutter.len()
    }

    fn last_index(&self) -> u64 {
        self.d.log.len() as u64
    }

    fn term_at(&self, index: u64) -> u64 {
        if index == 0 {
            0
        } else {
            self.d.log[index as usize - 1].term
        }
    }

    fn quorum(&self) -> usize {
        self.nodes.len() / 2 + 1
    }

    fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied().filter(move |n| *n != self.id)
    }

    fn reset_election_timer(&mut self, now: Time) {
        let lo = self.cfg.election_timeout_min.0;
        let hi = self.cfg.election_timeout_max.0.max(lo);
        self.election_deadline = now + Span(self.rng.gen_range(lo..=hi));
    }

    pub fn next_deadline(&self) -> Time {
        match self.role {
            Role::Leader => self.cutter.deadline().map_or(self.heartbeat_due, |d| d.min(self.heartbeat_due)),
            _ => self.election_deadline,
        }
    }

    /// Crash recovery: keep the durable log, forget everything else.
    pub fn restart(&mut self, now: Time) {
        self.role = Role::Follower;
        self.leader = None;
        self.commit = self.d.applied;
        self.votes.clear();
        self.next.clear();
        self.matched.clear();
        self.cutter.drain();
        self.stranded.clear();
        self.log_txids.clear();
        self.heartbeat_due = Time::MAX;
        self.reset_election_timer(now);
    }

    pub fn tick(&mut self, now: Time, out: &mut OrderOutput) {
        match self.role {
            Role::Leader => {
                while let Some(batch) = self.cutter.cut(now) {
                    self.append_block(batch, out);
                }
                if now >= self.heartbeat_due {
                    self.heartbeat_due = now + self.cfg.heartbeat;
                    self.broadcast_append(out);
                }
            }
            _ => {
                if now >= self.election_deadline {
                    self.start_election(now, out);
                }
            }
        }
    }

    pub fn submit(&mut self, now: Time, item: Submission, out: &mut OrderOutput) -> SubmitOutcome {
        match (self.role, self.leader) {
            (Role::Leader, _) => {
                match item {
                    Submission::Tx(env) => {
                        if !self.log_txids.contains(&env.tx_id) {
                            self.cutter.push(now, env);
                        }
                        while let Some(batch) = self.cutter.cut(now) {
                            self.append_block(batch, out);
                        }
                    }
                    Submission::Identity(tx) => self.append_entry(Payload::Identity(tx), out),
                }
                SubmitOutcome::Ack
            }
            (_, Some(l)) => {
                out.send.push((l, RaftMsg::Forward { items: vec![item] }));
                SubmitOutcome::Redirect(l)
            }
            (_, None) => SubmitOutcome::Unavailable,
        }
    }

    pub fn handle(&mut self, now: Time, from: NodeId, msg: RaftMsg, out: &mut OrderOutput) {
        if let Some(t) = msg.term() {
            if t > self.d.term {
                self.step_down(t, now);
            }
        }
        match msg {
            RaftMsg::RequestVote { term, last_index, last_term } => {
                let up_to_date = (last_term, last_index) >= (self.term_at(self.last_index()), self.last_index());
                let granted = term == self.d.term
                    && self.d.voted_for.map_or(true, |v| v == from)
                    && up_to_date;
                if granted {
                    self.d.voted_for = Some(from);
                    self.reset_election_timer(now);
                }
                out.send.push((from, RaftMsg::Vote { term: self.d.term, granted }));
            }
            RaftMsg::Vote { term, granted } => {
                if self.role == Role::Candidate && term == self.d.term && granted {
                    self.votes.insert(from);
                    if self.votes.len() >= self.quorum() {
                        self.become_leader(now, out);
                    }
                }
            }
            RaftMsg::Append { term, prev_index, prev_term, entries, commit } => {
                self.on_append(now, from, term, prev_index, prev_term, entries, commit, out)
            }
            RaftMsg::AppendReply { term, success, match_index, conflict_index } => {
                if self.role != Role::Leader || term != self.d.term {
                    return;
                }
                if success {
                    let m = self.matched.entry(from).or_insert(0);
                    *m = (*m).max(match_index);
                    let m = *m;
                    let n = self.next.entry(from).or_insert(1);
                    *n = (*n).max(m + 1);
                    self.advance_commit(out);
                    if self.next[&from] <= self.last_index() {
                        self.send_append(from, out);
                    }
                } else {
                    let m = self.matched.get(&from).copied().unwrap_or(0);
                    let n = conflict_index.clamp(m + 1, self.last_index() + 1);
                    self.next.insert(from, n);
                    self.send_append(from, out);
                }
            }
            RaftMsg::Forward { items } => {
                for item in items {
                    if self.role == Role::Leader {
                        self.submit(now, item, out);
                    } else {
                        self.stranded.push(item);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn on_append(
        &mut self,
        now: Time,
        from: NodeId,
        term: u64,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
        out: &mut OrderOutput,
    ) {
        let reply = |success, match_index, conflict_index, term| RaftMsg::AppendReply {
            term,
            success,
            match_index,
            conflict_index,
        };
        if term < self.d.term {
            out.send.push((from, reply(false, 0, 0, self.d.term)));
            return;
        }
        if self.role != Role::Follower {
            self.role = Role::Follower;
            self.votes.clear();
        }
        self.leader = Some(from);
        self.reset_election_timer(now);
        if !self.stranded.is_empty() {
            out.send.push((from, RaftMsg::Forward { items: std::mem::take(&mut self.stranded) }));
        }

        if prev_index > self.last_index() {
            out.send.push((from, reply(false, 0, self.last_index() + 1, self.d.term)));
            return;
        }
        if self.term_at(prev_index) != prev_term {
            let bad = self.term_at(prev_index);
            let mut first = prev_index;
            while first > 1 && self.term_at(first - 1) == bad {
                first -= 1;
            }
            out.send.push((from, reply(false, 0, first.max(self.commit + 1), self.d.term)));
            return;
        }
        let mut idx = prev_index;
        for e in entries {
            idx += 1;
            if idx <= self.last_index() {
                if self.term_at(idx) == e.term {
                    continue;
                }
                assert!(idx > self.commit, "attempt to overwrite committed entry {idx}");
                self.d.log.truncate(idx as usize - 1);
            }
            self.d.log.push(e);
        }
        let new_commit = leader_commit.min(idx);
        if new_commit > self.commit {
            self.commit = new_commit;
            self.deliver(out);
        }
        out.send.push((from, reply(true, idx, 0, self.d.term)));
    }

    fn step_down(&mut self, term: u64, now: Time) {
        let was_leader = self.role == Role::Leader;
        self.d.term = term;
        self.d.voted_for = None;
        self.role = Role::Follower;
        self.leader = None;
        self.votes.clear();
        if was_leader {
            self.stranded.extend(self.cutter.drain().into_iter().map(Submission::Tx));
            self.heartbeat_due = Time::MAX;
            self.reset_election_timer(now);
        }
    }

    fn start_election(&mut self, now: Time, out: &mut OrderOutput) {
        self.d.term += 1;
        self.d.voted_for = Some(self.id);
        self.role = Role::Candidate;
        self.leader = None;
        self.votes = BTreeSet::from([self.id]);
        self.reset_election_timer(now);
        if self.votes.len() >= self.quorum() {
            self.become_leader(now, out);
            return;
        }
        let (last_index, last_term) = (self.last_index(), self.term_at(self.last_index()));
        let term = self.d.term;
        for p in self.peers().collect::<Vec<_>>() {
            out.send.push((p, RaftMsg::RequestVote { term, last_index, last_term }));
        }
    }

    fn become_leader(&mut self, now: Time, out: &mut OrderOutput) {
        self.role = Role::Leader;
        self.leader = Some(self.id);
        let next = self.last_index() + 1;
        let peers: Vec<NodeId> = self.peers().collect();
        self.next = peers.iter().map(|p| (*p, next)).collect();
        self.matched = peers.iter().map(|p| (*p, 0)).collect();
        self.next_block = (0, Hash32::ZERO);
        self.log_txids.clear();
        for e in &self.d.log {
            if let Payload::Block(b) = &e.payload {
                self.next_block = (b.header.number + 1, b.header.hash());
                self.log_txids.extend(b.txs.iter().map(|t| t.tx_id));
            }
        }
        out.became_leader = Some(self.d.term);
        self.heartbeat_due = now + self.cfg.heartbeat;
        self.append_entry(Payload::Noop, out);
        for item in std::mem::take(&mut self.stranded) {
            self.submit(now, item, out);
        }
    }

    fn append_block(&mut self, txs: Vec<TransactionEnvelope>, out: &mut OrderOutput) {
        let (number, prev) = self.next_block;
        let block = OrderedBlock::new(number, prev, self.d.term, txs);
        self.next_block = (number + 1, block.header.hash());
        self.log_txids.extend(block.txs.iter().map(|t| t.tx_id));
        self.append_entry(Payload::Block(block), out);
    }

    fn append_entry(&mut self, payload: Payload, out: &mut OrderOutput) {
        self.d.log.push(LogEntry { term: self.d.term, payload });
        let last = self.last_index();
        for p in self.peers().collect::<Vec<_>>() {
            if self.next[&p] == last {
                self.send_append(p, out);
            }
        }
        self.advance_commit(out);
    }

    fn broadcast_append(&mut self, out: &mut OrderOutput) {
        for p in self.peers().collect::<Vec<_>>() {
            self.send_append(p, out);
        }
    }

    /// Sends entries from the follower's next index (possibly none) and
    /// optimistically advances it.
    fn send_append(&mut self, to: NodeId, out: &mut OrderOutput) {
        let next = self.next[&to];
        let prev_index = next - 1;
        let end = (prev_index + self.cfg.max_append_entries as u64).min(self.last_index());
        let entries = self.d.log[prev_index as usize..end as usize].to_vec();
        self.next.insert(to, end + 1);
        out.send.push((
            to,
            RaftMsg::Append {
                term: self.d.term,
                prev_index,
                prev_term: self.term_at(prev_index),
                entries,
                commit: self.commit,
            },
        ));
    }

    fn advance_commit(&mut self, out: &mut OrderOutput) {
        let mut n = self.last_index();
        while n > self.commit && self.term_at(n) == self.d.term {
            let acks = 1 + self.matched.values().filter(|m| **m >= n).count();
            if acks >= self.quorum() {
                self.commit = n;
                self.deliver(out);
                // Tell followers about the new commit index right away.
                self.broadcast_append(out);
                return;
            }
            n -= 1;
        }
    }

    fn deliver(&mut self, out: &mut OrderOutput) {
        while self.d.applied < self.commit {
            self.d.applied += 1;
            out.deliver.push((self.d.applied, self.d.log[self.d.applied as usize - 1].payload.clone()));
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::{Keypair, Signature};
    use crate::identity::Did;
    use crate::ledger::{ProposalHeader, RwSet};
    use rand::SeedableRng;
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    pub(crate) fn env(i: u64) -> TransactionEnvelope {
        let header = ProposalHeader {
            chaincode: "x".into(),
            function: "f".into(),
            args: vec![i.to_string()],
            client: Did::from_public_key(&Keypair::from_secret(&[1; 32]).public()),
            timestamp: i,
        };
        TransactionEnvelope {
            tx_id: header.tx_id(),
            header,
            client_signature: Signature([0; 64]),
            rwset: RwSet::default(),
            response: Default::default(),
            endorsements: vec![],
        }
    }

    /// Minimal lossless 1 ms-latency network for exercising the protocol.
    pub(crate) struct TestNet {
        pub now: Time,
        pub nodes: Vec<Orderer>,
        pub alive: Vec<bool>,
        pub cut: Vec<Vec<bool>>,
        queue: BinaryHeap<Reverse<(Time, u64, u32, u32, String)>>,
        seq: u64,
        pub delivered: Vec<Vec<(u64, Payload)>>,
    }

    impl TestNet {
        pub fn new(n: u32, seed: u64, cfg: OrderingConfig) -> Self {
            let ids: Vec<NodeId> = (0..n).map(NodeId).collect();
            let nodes = ids
                .iter()
                .map(|id| Orderer::new(*id, ids.clone(), cfg, ChaCha20Rng::seed_from_u64(seed + id.0 as u64), Time::ZERO))
                .collect();
            TestNet {
                now: Time::ZERO,
                nodes,
                alive: vec![true; n as usize],
                cut: vec![vec![false; n as usize]; n as usize],
                queue: BinaryHeap::new(),
                seq: 0,
                delivered: vec![Vec::new(); n as usize],
            }
        }

        fn absorb(&mut self, from: usize, out: OrderOutput) {
            self.delivered[from].extend(out.deliver);
            for (to, msg) in out.send {
                self.seq += 1;
                let at = self.now + Span::from_millis(1);
                let wire = serde_json::to_string(&msg).unwrap();
                self.queue.push(Reverse((at, self.seq, from as u32, to.0, wire)));
            }
        }

        pub fn submit(&mut self, at: usize, item: Submission) -> SubmitOutcome {
            let mut out = OrderOutput::default();
            let r = self.nodes[at].submit(self.now, item, &mut out);
            self.absorb(at, out);
            r
        }

        pub fn leader(&self) -> Option<usize> {
            (0..self.nodes.len()).find(|i| self.alive[*i] && self.nodes[*i].role() == Role::Leader)
        }

        pub fn kill(&mut self, i: usize) {
            self.alive[i] = false;
        }

        pub fn restart(&mut self, i: usize) {
            self.alive[i] = true;
            let now = self.now;
            self.nodes[i].restart(now);
        }

        pub fn run_until(&mut self, until: Time) {
            loop {
                let next_msg = self.queue.peek().map(|Reverse(e)| e.0).unwrap_or(Time::MAX);
                let next_tick = (0..self.nodes.len())
                    .filter(|i| self.alive[*i])
                    .map(|i| self.nodes[i].next_deadline())
                    .min()
                    .unwrap_or(Time::MAX);
                let t = next_msg.min(next_tick);
                if t > until {
                    self.now = until;
                    return;
                }
                self.now = t.max(self.now);
                if next_msg <= next_tick {
                    let Reverse((_, _, from, to, wire)) = self.queue.pop().unwrap();
                    let (f, t) = (from as usize, to as usize);
                    if !self.alive[t] || self.cut[f][t] {
                        continue;
                    }
                    let msg: RaftMsg = serde_json::from_str(&wire).unwrap();
                    let mut out = OrderOutput::default();
                    self.nodes[t].handle(self.now, NodeId(from), msg, &mut out);
                    self.absorb(t, out);
                } else {
                    for i in 0..self.nodes.len() {
                        if self.alive[i] && self.nodes[i].next_deadline() <= self.now {
                            let mut out = OrderOutput::default();
                            self.nodes[i].tick(self.now, &mut out);
                            self.absorb(i, out);
                        }
                    }
                }
            }
        }

        pub fn blocks(&self, i: usize) -> Vec<OrderedBlock> {
            self.delivered[i]
                .iter()
                .filter_map(|(_, p)| match p {
                    Payload::Block(b) => Some(b.clone()),
                    _ => None,
                })
                .collect()
        }

        /// Committed prefixes of all logs agree.
        pub fn assert_safe(&self) {
            for a in &self.nodes {
                for b in &self.nodes {
                    let n = a.commit_index().min(b.commit_index()) as usize;
                    assert_eq!(a.log()[..n], b.log()[..n]);
                }
            }
        }
    }

    fn cfg(max: usize) -> OrderingConfig {
        OrderingConfig { max_block_txs: max, ..OrderingConfig::default() }
    }

    #[test]
    fn single_node_commits() {
        let mut net = TestNet::new(1, 1, cfg(2));
        net.run_until(Time::from_millis(400));
        assert_eq!(net.leader(), Some(0));
        for i in 0..3 {
            assert_eq!(net.submit(0, Submission::Tx(env(i))), SubmitOutcome::Ack);
        }
        net.run_until(Time::from_millis(1000));
        let blocks = net.blocks(0);
        assert_eq!(blocks.iter().map(|b| b.txs.len()).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn one_leader_per_term_and_identical_streams() {
        for seed in 0..20 {
            let mut net = TestNet::new(3, seed, cfg(10));
            net.run_until(Time::from_millis(1000));
            let leaders: Vec<_> = net.nodes.iter().filter(|n| n.role() == Role::Leader).collect();
            assert_eq!(leaders.len(), 1);
            let l = net.leader().unwrap();
            let f = (l + 1) % 3;
            assert_eq!(net.submit(f, Submission::Tx(env(99))), SubmitOutcome::Redirect(NodeId(l as u32)));
            for i in 0..25 {
                net.submit(l, Submission::Tx(env(i)));
            }
            net.run_until(Time::from_millis(2000));
            let b0 = net.blocks(0);
            assert_eq!(b0.iter().map(|b| b.txs.len()).sum::<usize>(), 26);
            assert_eq!(b0, net.blocks(1));
            assert_eq!(b0, net.blocks(2));
            for (i, b) in b0.iter().enumerate() {
                assert_eq!(b.header.number, i as u64);
            }
            net.assert_safe();
        }
    }

    #[test]
    fn no_leader_means_unavailable() {
        let mut net = TestNet::new(3, 3, cfg(10));
        assert_eq!(net.submit(0, Submission::Tx(env(0))), SubmitOutcome::Unavailable);
    }

    #[test]
    fn kill_leader_then_restart_catches_up() {
        let mut net = TestNet::new(3, 7, cfg(5));
        net.run_until(Time::from_millis(1000));
        let l = net.leader().unwrap();
        for i in 0..10 {
            net.submit(l, Submission::Tx(env(i)));
        }
        net.run_until(Time::from_millis(1100));
        let committed_before = net.blocks((l + 1) % 3);
        assert_eq!(committed_before.len(), 2);
        net.kill(l);
        net.run_until(Time::from_millis(2000));
        let l2 = net.leader().unwrap();
        assert_ne!(l2, l);
        for i in 10..20 {
            net.submit(l2, Submission::Tx(env(i)));
        }
        net.run_until(Time::from_millis(3000));
        net.restart(l);
        net.run_until(Time::from_millis(4000));
        let want = net.blocks(l2);
        assert_eq!(want.iter().map(|b| b.txs.len()).sum::<usize>(), 20);
        assert_eq!(want[..2], committed_before[..]);
        assert_eq!(net.blocks(l), want);
        net.assert_safe();
    }

    #[test]
    fn two_down_stalls_until_quorum() {
        let mut net = TestNet::new(3, 11, cfg(1));
        net.run_until(Time::from_millis(1000));
        let l = net.leader().unwrap();
        let others: Vec<usize> = (0..3).filter(|i| *i != l).collect();
        net.kill(others[0]);
        net.kill(others[1]);
        net.submit(l, Submission::Tx(env(1)));
        net.run_until(Time::from_millis(5000));
        assert!(net.blocks(l).is_empty());
        net.restart(others[0]);
        net.run_until(Time::from_millis(8000));
        // The pending tx may be lost with the old leader's queue if it stepped
        // down; what matters is that the stream moves again.
        let l2 = net.leader().unwrap();
        net.submit(l2, Submission::Tx(env(2)));
        net.run_until(Time::from_millis(9000));
        assert!(!net.blocks(l2).is_empty());
        net.assert_safe();
    }

    #[test]
    fn partition_minority_rejoins() {
        let mut net = TestNet::new(3, 5, cfg(3));
        net.run_until(Time::from_millis(1000));
        let l = net.leader().unwrap();
        let minority = (l + 1) % 3;
        for j in 0..3 {
            if j != minority {
                net.cut[j][minority] = true;
                net.cut[minority][j] = true;
            }
        }
        for i in 0..9 {
            net.submit(l, Submission::Tx(env(i)));
        }
        net.run_until(Time::from_millis(3000));
        assert!(net.blocks(minority).is_empty());
        assert!(net.nodes[minority].term() > net.nodes[l].term());
        for row in net.cut.iter_mut() {
            row.iter_mut().for_each(|c| *c = false);
        }
        net.run_until(Time::from_millis(5000));
        let l2 = net.leader().unwrap();
        assert_eq!(net.blocks(minority), net.blocks(l2));
        assert_eq!(net.blocks(l2).iter().map(|b| b.txs.len()).sum::<usize>(), 9);
        net.assert_safe();
    }

    #[test]
    fn deterministic_replay() {
        let run = || {
            let mut net = TestNet::new(3, 9, cfg(4));
            net.run_until(Time::from_millis(800));
            let l = net.leader().unwrap();
            for i in 0..10 {
                net.submit(l, Submission::Tx(env(i)));
            }
            net.run_until(Time::from_millis(2000));
            (net.delivered.clone(), net.nodes.iter().map(|n| n.term()).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn duplicate_submission_ordered_once() {
        let mut net = TestNet::new(3, 2, cfg(10));
        net.run_until(Time::from_millis(1000));
        let l = net.leader().unwrap();
        net.submit(l, Submission::Tx(env(1)));
        net.run_until(Time::from_millis(1500));
        net.submit(l, Submission::Tx(env(1)));
        net.run_until(Time::from_millis(2000));
        assert_eq!(net.blocks(l).iter().map(|b| b.txs.len()).sum::<usize>(), 1);
    }
}
