// SPDX-License-Identifier: Apache-2.0

//! Wall-clock executor: one thread per node plus a router thread that applies
//! link latency, loss and partitions. Runs are not reproducible; use the
//! simulator for that.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
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

use crate::bus::{Bus, ClientResponse};
use crate::config::{LinkConfig, NetConfig};
use crate::trace::{CorruptTarget, DropReason, Fault, TraceLog, TraceMsg};

type NodeFn = Box<dyn FnOnce(&mut Node) + Send>;

enum NodeCmd {
    Msg(Addr, Arc<[u8]>),
    Kill,
    Restart,
    With(NodeFn),
    Stop,
}

enum RouterCmd {
    Route(TraceMsg),
    Partition(Option<Vec<BTreeSet<NodeId>>>),
    Stop,
}

#[derive(Clone)]
struct Clock(Instant);

impl Clock {
    fn now(&self) -> Time {
        Time(self.0.elapsed().as_micros() as u64)
    }

    fn instant(&self, t: Time) -> Instant {
        self.0 + Duration::from_micros(t.0)
    }
}

struct Shared {
    clock: Clock,
    alive: Vec<AtomicBool>,
    trace: Mutex<TraceLog>,
    clients: Mutex<HashMap<ClientId, Sender<ClientResponse>>>,
}

pub struct WallNet {
    cfg: NetConfig,
    genesis: Genesis,
    shared: Arc<Shared>,
    router: Sender<RouterCmd>,
    nodes: Vec<Sender<NodeCmd>>,
    threads: Vec<JoinHandle<Node>>,
    router_thread: Option<JoinHandle<()>>,
    next_client: u32,
}

impl WallNet {
    pub fn new(cfg: NetConfig) -> deon_core::Result<Self> {
        cfg.network.validate()?;
        let genesis = Genesis::new(&cfg.network);
        let network = Arc::new(cfg.network.clone());
        let shared = Arc::new(Shared {
            clock: Clock(Instant::now()),
            alive: cfg.network.node_ids().iter().map(|_| AtomicBool::new(true)).collect(),
            trace: Mutex::new(TraceLog::new(cfg.capture)),
            clients: Mutex::new(HashMap::new()),
        });
        let (router_tx, router_rx) = unbounded();
        let mut senders = Vec::new();
        let mut receivers = Vec::new();
        for _ in cfg.network.node_ids() {
            let (tx, rx) = unbounded();
            senders.push(tx);
            receivers.push(rx);
        }
        let mut threads = Vec::new();
        for (id, rx) in cfg.network.node_ids().into_iter().zip(receivers) {
            let journal = match &cfg.journal_dir {
                Some(dir) => Journal::create(&dir.join(format!("{id}.journal")))?,
                None => Journal::in_memory(),
            };
            let node = Node::new(id, network.clone(), &genesis, journal, shared.clock.now());
            let (shared, router) = (shared.clone(), router_tx.clone());
            threads.push(
                std::thread::Builder::new()
                    .name(format!("node-{id}"))
                    .spawn(move || node_loop(node, rx, router, shared))
                    .map_err(|e| deon_core::Error::Io(e.to_string()))?,
            );
        }
        let router_thread = {
            let (shared, nodes, link) = (shared.clone(), senders.clone(), cfg.link);
            let rng = derive_rng(cfg.network.seed, "link", 0);
            std::thread::Builder::new()
                .name("router".into())
                .spawn(move || router_loop(router_rx, nodes, shared, link, rng))
                .map_err(|e| deon_core::Error::Io(e.to_string()))?
        };
        Ok(WallNet {
            cfg,
            genesis,
            shared,
            router: router_tx,
            nodes: senders,
            threads,
            router_thread: Some(router_thread),
            next_client: 1 << 20,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn now(&self) -> Time {
        self.shared.clock.now()
    }

    /// A new client endpoint on the bus.
    pub fn client(&mut self) -> WallClient {
        let id = ClientId(self.next_client);
        self.next_client += 1;
        self.endpoint(id, &[id])
    }

    /// One endpoint receiving the responses addressed to any of `ids`.
    pub fn endpoint(&mut self, id: ClientId, ids: &[ClientId]) -> WallClient {
        let (tx, rx) = unbounded();
        let mut table = self.shared.clients.lock().expect("client table");
        for c in ids.iter().chain([&id]) {
            table.insert(*c, tx.clone());
        }
        drop(table);
        WallClient {
            id,
            nodes: self.nodes.len() as u32,
            clock: self.shared.clock.clone(),
            router: self.router.clone(),
            rx,
            pending: Vec::new(),
        }
    }

    /// Runs `f` on the node's thread and waits for its result.
    pub fn with_node<R: Send + 'static>(&self, n: NodeId, f: impl FnOnce(&mut Node) -> R + Send + 'static) -> R {
        let (tx, rx) = crossbeam_channel::bounded(1);
        let job: NodeFn = Box::new(move |node| {
            let _ = tx.send(f(node));
        });
        self.nodes[n.0 as usize].send(NodeCmd::With(job)).expect("node thread running");
        rx.recv().expect("node thread answered")
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        self.shared.alive[n.0 as usize].load(Ordering::SeqCst)
    }

    pub fn kill(&self, n: NodeId) {
        self.fault(Fault::Kill { node: n });
        let _ = self.nodes[n.0 as usize].send(NodeCmd::Kill);
    }

    pub fn restart(&self, n: NodeId) {
        self.fault(Fault::Restart { node: n });
        let _ = self.nodes[n.0 as usize].send(NodeCmd::Restart);
    }

    pub fn partition(&self, groups: Vec<Vec<NodeId>>) {
        self.fault(Fault::Partition { groups: groups.clone() });
        let sets = groups.into_iter().map(|g| g.into_iter().collect()).collect();
        let _ = self.router.send(RouterCmd::Partition(Some(sets)));
    }

    pub fn heal(&self) {
        self.fault(Fault::Heal);
        let _ = self.router.send(RouterCmd::Partition(None));
    }

    pub fn corrupt(&self, target: CorruptTarget) -> bool {
        let t = target.clone();
        let applied = self.with_node(target.node(), move |n| t.apply(n));
        self.fault(Fault::Corrupt { target, applied });
        applied
    }

    fn fault(&self, f: Fault) {
        let now = self.now();
        self.shared.trace.lock().expect("trace").fault(now, f);
    }

    /// Stops every thread and hands back the nodes and the trace.
    pub fn shutdown(mut self) -> (Vec<Node>, Vec<bool>, TraceLog) {
        for tx in &self.nodes {
            let _ = tx.send(NodeCmd::Stop);
        }
        let nodes: Vec<Node> = self.threads.drain(..).map(|t| t.join().expect("node thread panicked")).collect();
        let _ = self.router.send(RouterCmd::Stop);
        if let Some(t) = self.router_thread.take() {
            t.join().expect("router thread panicked");
        }
        let alive = self.shared.alive.iter().map(|a| a.load(Ordering::SeqCst)).collect();
        let trace = std::mem::replace(&mut *self.shared.trace.lock().expect("trace"), TraceLog::new(self.cfg.capture));
        (nodes, alive, trace)
    }
}

impl Drop for WallNet {
    fn drop(&mut self) {
        for tx in &self.nodes {
            let _ = tx.send(NodeCmd::Stop);
        }
        let _ = self.router.send(RouterCmd::Stop);
    }
}

fn node_loop(mut node: Node, rx: Receiver<NodeCmd>, router: Sender<RouterCmd>, shared: Arc<Shared>) -> Node {
    let i = node.id().0 as usize;
    let mut alive = true;
    loop {
        let deadline = if alive {
            shared.clock.instant(node.next_deadline())
        } else {
            Instant::now() + Duration::from_secs(3600)
        };
        let out = match rx.recv_deadline(deadline) {
            Ok(NodeCmd::Msg(from, bytes)) => {
                if !alive {
                    continue;
                }
                let now = shared.clock.now();
                let mut out = match codec::from_slice::<Msg>(&bytes) {
                    Ok(msg) => node.handle(now, from, msg),
                    Err(_) => NodeOutput::default(),
                };
                if node.next_deadline() <= now {
                    let t = node.tick(now);
                    out.send.extend(t.send);
                    out.events.extend(t.events);
                }
                out
            }
            Ok(NodeCmd::Kill) => {
                alive = false;
                shared.alive[i].store(false, Ordering::SeqCst);
                continue;
            }
            Ok(NodeCmd::Restart) => {
                if alive {
                    continue;
                }
                alive = true;
                shared.alive[i].store(true, Ordering::SeqCst);
                node.restart(shared.clock.now())
            }
            Ok(NodeCmd::With(f)) => {
                f(&mut node);
                continue;
            }
            Ok(NodeCmd::Stop) | Err(RecvTimeoutError::Disconnected) => return node,
            Err(RecvTimeoutError::Timeout) => node.tick(shared.clock.now()),
        };
        let now = shared.clock.now();
        if !out.events.is_empty() {
            let mut trace = shared.trace.lock().expect("trace");
            for e in out.events {
                trace.event(now, node.id(), e);
            }
        }
        for (to, msg) in out.send {
            let bytes: Arc<[u8]> = codec::to_canonical_vec(&msg).into();
            let m = TraceMsg { sent: now, at: now, from: Addr::Node(node.id()), to, channel: msg.channel(), bytes, dropped: None };
            let _ = router.send(RouterCmd::Route(m));
        }
    }
}

fn router_loop(
    rx: Receiver<RouterCmd>,
    nodes: Vec<Sender<NodeCmd>>,
    shared: Arc<Shared>,
    link: LinkConfig,
    mut rng: rand_chacha::ChaCha20Rng,
) {
    let mut heap: BinaryHeap<Reverse<(Time, u64)>> = BinaryHeap::new();
    let mut held: HashMap<u64, TraceMsg> = HashMap::new();
    let mut seq = 0u64;
    let mut last: HashMap<(Addr, Addr), Time> = HashMap::new();
    let mut groups: Option<Vec<BTreeSet<NodeId>>> = None;
    let connected = |groups: &Option<Vec<BTreeSet<NodeId>>>, a: Addr, b: Addr| {
        let (Addr::Node(x), Addr::Node(y)) = (a, b) else { return true };
        groups.as_ref().map_or(true, |gs| gs.iter().any(|g| g.contains(&x) && g.contains(&y)))
    };
    loop {
        let wait = heap
            .peek()
            .map(|Reverse((t, _))| shared.clock.instant(*t))
            .unwrap_or_else(|| Instant::now() + Duration::from_secs(3600));
        match rx.recv_deadline(wait) {
            Ok(RouterCmd::Route(mut m)) => {
                if link.loss > 0.0 && rng.gen_bool(link.loss.min(1.0)) {
                    m.dropped = Some(DropReason::Loss);
                } else if !connected(&groups, m.from, m.to) {
                    m.dropped = Some(DropReason::Partition);
                }
                if m.dropped.is_some() {
                    shared.trace.lock().expect("trace").record(m);
                } else {
                    let jitter = if link.jitter_ms > 0.0 { rng.gen_range(0.0..link.jitter_ms) } else { 0.0 };
                    let at = m.sent.max(shared.clock.now()) + Span::from_secs_f64((link.base_ms + jitter) / 1000.0);
                    let slot = last.entry((m.from, m.to)).or_insert(Time(0));
                    m.at = at.max(*slot);
                    *slot = m.at;
                    seq += 1;
                    heap.push(Reverse((m.at, seq)));
                    held.insert(seq, m);
                }
            }
            Ok(RouterCmd::Partition(g)) => groups = g,
            Ok(RouterCmd::Stop) | Err(RecvTimeoutError::Disconnected) => return,
            Err(RecvTimeoutError::Timeout) => {}
        }
        let now = shared.clock.now();
        while let Some(Reverse((t, s))) = heap.peek().copied() {
            if t > now {
                break;
            }
            heap.pop();
            let Some(mut m) = held.remove(&s) else { continue };
            if let Addr::Node(n) = m.from {
                if !shared.alive[n.0 as usize].load(Ordering::SeqCst) {
                    m.dropped = Some(DropReason::DeadSender);
                }
            }
            if m.dropped.is_none() && !connected(&groups, m.from, m.to) {
                m.dropped = Some(DropReason::Partition);
            }
            match m.to {
                Addr::Node(n) if m.dropped.is_none() => {
                    if shared.alive[n.0 as usize].load(Ordering::SeqCst) {
                        let _ = nodes[n.0 as usize].send(NodeCmd::Msg(m.from, m.bytes.clone()));
                    } else {
                        m.dropped = Some(DropReason::DeadReceiver);
                    }
                }
                Addr::Client(c) if m.dropped.is_none() => match (codec::from_slice::<Msg>(&m.bytes), m.from) {
                    (Ok(Msg::Response { req, result }), Addr::Node(node)) => {
                        let r = ClientResponse { at: m.at, client: c, node, req, result };
                        if let Some(tx) = shared.clients.lock().expect("client table").get(&c) {
                            let _ = tx.send(r);
                        }
                    }
                    _ => m.dropped = Some(DropReason::Malformed),
                },
                _ => {}
            }
            shared.trace.lock().expect("trace").record(m);
        }
    }
}

/// A client endpoint of a [`WallNet`].
pub struct WallClient {
    id: ClientId,
    nodes: u32,
    clock: Clock,
    router: Sender<RouterCmd>,
    rx: Receiver<ClientResponse>,
    pending: Vec<ClientResponse>,
}

impl WallClient {
    pub fn id(&self) -> ClientId {
        self.id
    }
}

impl Bus for WallClient {
    fn now(&self) -> Time {
        self.clock.now()
    }

    fn node_count(&self) -> u32 {
        self.nodes
    }

    fn send(&mut self, client: ClientId, node: NodeId, req: u64, body: Request) {
        let msg = Msg::Request { req, body };
        let now = self.clock.now();
        let bytes: Arc<[u8]> = codec::to_canonical_vec(&msg).into();
        let m = TraceMsg { sent: now, at: now, from: Addr::Client(client), to: Addr::Node(node), channel: msg.channel(), bytes, dropped: None };
        let _ = self.router.send(RouterCmd::Route(m));
    }

    fn poll(&mut self, until: Time) -> Vec<ClientResponse> {
        if self.pending.is_empty() {
            match self.rx.recv_deadline(self.clock.instant(until)) {
                Ok(r) => self.pending.push(r),
                Err(_) => return Vec::new(),
            }
        }
        self.pending.extend(self.rx.try_iter());
        std::mem::take(&mut self.pending)
    }
}
