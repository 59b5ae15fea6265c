// SPDX-License-Identifier: Apache-2.0

//! Cross-node invariants checked after a run: chain integrity, replica
//! agreement, ordering safety and a byte scan for secrets on the wire and
//! on the ledgers.

use std::collections::BTreeMap;

use aho_corasick::AhoCorasick;
use deon_core::client::DISCLOSED;
use deon_core::codec::{self, Hash32};
use deon_core::crypto::Keypair;
use deon_core::genesis::Genesis;
use deon_core::identity::Wallet;
use deon_core::msg::Msg;
use deon_core::net::NodeId;
use deon_core::node::Node;
use deon_core::service::{Request, Response};
use serde::Serialize;

use crate::config::Capture;
use crate::trace::TraceLog;

/// Values shorter than this are too likely to occur by chance to scan for.
pub const MIN_SECRET_LEN: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub ok: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditReport {
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.ok)
    }

    /// Nodes that failed the named check.
    pub fn failed_nodes(&self, name: &str) -> Vec<NodeId> {
        self.failures().filter(|c| c.name == name).filter_map(|c| c.node).collect()
    }

    pub fn passed(&self, name: &str) -> bool {
        self.checks.iter().filter(|c| c.name == name).all(|c| c.ok && !c.skipped)
    }

    fn push(&mut self, name: &'static str, node: Option<NodeId>, ok: bool, detail: String) {
        self.checks.push(Check { name, node, ok, skipped: false, detail });
    }

    fn skip(&mut self, name: &'static str, detail: &str) {
        self.checks.push(Check { name, node: None, ok: true, skipped: true, detail: detail.into() });
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Secret {
    pub label: String,
    pub bytes: Vec<u8>,
}

/// What must never be seen. `wire` items are searched in bus traffic and on
/// the ledgers; `ledger` items only on the ledgers, since nodes legitimately
/// exchange them.
#[derive(Debug, Clone, Default)]
pub struct Secrets {
    pub wire: Vec<Secret>,
    pub ledger: Vec<Secret>,
}

impl Secrets {
    fn add(list: &mut Vec<Secret>, label: String, bytes: &[u8]) {
        if bytes.len() >= MIN_SECRET_LEN && !list.iter().any(|s| s.bytes == bytes) {
            list.push(Secret { label, bytes: bytes.to_vec() });
        }
    }

    pub fn add_wire(&mut self, label: impl Into<String>, bytes: &[u8]) {
        Self::add(&mut self.wire, label.into(), bytes);
    }

    pub fn add_ledger(&mut self, label: impl Into<String>, bytes: &[u8]) {
        Self::add(&mut self.ledger, label.into(), bytes);
    }

    pub fn key(&mut self, label: &str, key: &Keypair) {
        self.add_wire(format!("{label} private key"), &key.secret_bytes());
    }

    pub fn genesis(&mut self, genesis: &Genesis, nodes: &[NodeId]) {
        for n in nodes {
            self.key(&format!("{n}"), genesis.key(*n));
        }
    }

    /// Keys, plus salts and values of undisclosed credential attributes, held
    /// by a client wallet. Pairwise DIDs must stay off the ledgers.
    pub fn wallet(&mut self, label: &str, wallet: &Wallet) {
        for (did, key) in wallet.keys() {
            self.key(&format!("{label} {did}"), key);
        }
        for vc in wallet.credentials() {
            for a in vc.attributes.iter().filter(|a| !DISCLOSED.contains(&a.name.as_str())) {
                self.add_wire(format!("{label} salt of undisclosed {}", a.name), a.salt.as_bytes());
                self.add_wire(format!("{label} undisclosed {}", a.name), a.value.as_bytes());
            }
        }
        for pairwise in wallet.pairwise().values() {
            self.add_ledger(format!("{label} pairwise did"), pairwise.as_str().as_bytes());
        }
    }

    /// Salts, private cids and private payloads from a node's private store.
    pub fn private_data(&mut self, node: &Node) {
        for ((coll, key), rec) in node.peer.private.iter() {
            let label = format!("{} {coll}/{key}", node.id());
            self.add_ledger(format!("{label} salt"), rec.salt.as_bytes());
            self.add_ledger(format!("{label} cid"), rec.cid.0.as_bytes());
            let payload = rec.inline.as_ref().map(|p| p.0.clone()).or_else(|| node.cas.store.get_raw(&rec.cid).map(|p| p.to_vec()));
            if let Some(p) = payload {
                self.add_ledger(format!("{label} payload"), &p);
            }
        }
    }

    fn automaton(list: &[&Secret]) -> (AhoCorasick, Vec<usize>) {
        let mut patterns = Vec::new();
        let mut owner = Vec::new();
        for (i, s) in list.iter().enumerate() {
            patterns.push(s.bytes.clone());
            owner.push(i);
            patterns.push(hex::encode(&s.bytes).into_bytes());
            owner.push(i);
        }
        (AhoCorasick::new(patterns).expect("secret patterns build"), owner)
    }
}

/// A compiled matcher over a set of secrets.
pub struct Scanner<'a> {
    secrets: Vec<&'a Secret>,
    ac: AhoCorasick,
    owner: Vec<usize>,
}

impl<'a> Scanner<'a> {
    pub fn new(secrets: impl IntoIterator<Item = &'a Secret>) -> Self {
        let secrets: Vec<&Secret> = secrets.into_iter().collect();
        let (ac, owner) = Secrets::automaton(&secrets);
        Scanner { secrets, ac, owner }
    }

    pub fn find(&self, haystack: &[u8]) -> Option<&'a Secret> {
        self.ac.find(haystack).map(|m| self.secrets[self.owner[m.pattern().as_usize()]])
    }
}

/// Onboarding necessarily carries the applicant's name in and the full
/// credential (with every salt) back to the holder.
fn exempt(bytes: &[u8]) -> bool {
    match codec::from_slice::<Msg>(bytes) {
        Ok(Msg::Request { body: Request::Onboard(_), .. }) => true,
        Ok(Msg::Response { result: Ok(Response::Onboarded(_)), .. }) => true,
        _ => false,
    }
}

/// Runs every check. `alive[i]` says whether node `i` is currently up;
/// agreement checks only cover live nodes.
pub fn audit(nodes: &[&Node], alive: &[bool], trace: &TraceLog, secrets: &Secrets) -> AuditReport {
    let mut r = AuditReport::default();

    let mut intact = Vec::new();
    for n in nodes {
        match n.peer.journal().verify() {
            Ok(()) => {
                r.push("chain_integrity", Some(n.id()), true, String::new());
                intact.push(true);
            }
            Err((i, why)) => {
                r.push("chain_integrity", Some(n.id()), false, format!("block {i}: {why}"));
                intact.push(false);
            }
        }
    }

    let live: Vec<&Node> = nodes.iter().zip(alive).filter(|(_, a)| **a).map(|(n, _)| *n).collect();
    let comparable: Vec<&Node> = nodes
        .iter()
        .zip(alive.iter().zip(&intact))
        .filter(|(_, (a, ok))| **a && **ok)
        .map(|(n, _)| *n)
        .collect();
    agreement(&mut r, "block_stream", &comparable, |n| (n.peer.height(), n.peer.stream_digest()));
    agreement(&mut r, "world_state", &live, |n| (n.peer.height(), n.peer.state_digest()));
    agreement(&mut r, "identity_ledger", &live, |n| (n.identities.len() as u64, n.identities.digest()));

    let mut safe = true;
    for a in nodes {
        for b in nodes {
            let k = a.orderer.commit_index().min(b.orderer.commit_index()) as usize;
            let k = k.min(a.orderer.log().len()).min(b.orderer.log().len());
            if a.orderer.log()[..k] != b.orderer.log()[..k] {
                safe = false;
                r.push("ordering_safety", Some(a.id()), false, format!("committed log differs from {}", b.id()));
            }
        }
    }
    if safe {
        r.push("ordering_safety", None, true, String::new());
    }

    leakage(&mut r, nodes, trace, secrets);
    r
}

/// Every node must match the most common value.
fn agreement(r: &mut AuditReport, name: &'static str, nodes: &[&Node], f: impl Fn(&Node) -> (u64, Hash32)) {
    let values: Vec<(u64, Hash32)> = nodes.iter().map(|n| f(n)).collect();
    let mut counts: BTreeMap<(u64, Hash32), usize> = BTreeMap::new();
    for v in &values {
        *counts.entry(*v).or_default() += 1;
    }
    let Some(reference) = counts.iter().max_by_key(|(v, c)| (**c, v.0)).map(|(v, _)| *v) else { return };
    let mut all = true;
    for (n, v) in nodes.iter().zip(&values) {
        if *v != reference {
            all = false;
            r.push(
                name,
                Some(n.id()),
                false,
                format!("height {} digest {} vs height {} digest {}", v.0, v.1, reference.0, reference.1),
            );
        }
    }
    if all {
        r.push(name, None, true, format!("{} nodes at height {}", nodes.len(), reference.0));
    }
}

fn leakage(r: &mut AuditReport, nodes: &[&Node], trace: &TraceLog, secrets: &Secrets) {
    let wire = Scanner::new(&secrets.wire);
    let everything = Scanner::new(secrets.wire.iter().chain(&secrets.ledger));

    // Detector self-test: a message carrying a known secret must be caught.
    let probe = secrets.wire.iter().chain(&secrets.ledger).next();
    match probe {
        Some(s) => {
            let mut planted = b"{\"planted\":\"".to_vec();
            planted.extend(hex::encode(&s.bytes).bytes());
            planted.extend(b"\"}");
            let ok = everything.find(&planted).is_some();
            r.push("leak_detector", None, ok, if ok { String::new() } else { "planted secret not found".into() });
        }
        None => r.skip("leak_detector", "no secrets registered"),
    }

    let mut ledger_ok = true;
    for n in nodes {
        for (i, entry) in n.peer.journal().entries().iter().enumerate() {
            if let Some(s) = everything.find(entry) {
                ledger_ok = false;
                r.push("no_secret_on_chain", Some(n.id()), false, format!("block {i} contains {}", s.label));
            }
        }
        for (i, rec) in n.identities.records().iter().enumerate() {
            if let Some(s) = everything.find(&codec::to_canonical_vec(rec)) {
                ledger_ok = false;
                r.push("no_secret_on_chain", Some(n.id()), false, format!("identity record {i} contains {}", s.label));
            }
        }
    }
    if ledger_ok {
        r.push("no_secret_on_chain", None, true, String::new());
    }

    if trace.capture() != Capture::Full {
        r.skip("no_secret_on_wire", "trace did not keep message bytes");
        return;
    }
    let mut leaks = 0usize;
    let mut first = String::new();
    for m in &trace.messages {
        if let Some(s) = wire.find(&m.bytes) {
            if exempt(&m.bytes) {
                continue;
            }
            leaks += 1;
            if first.is_empty() {
                first = format!("{} -> {} at {} ({}) carries {}", m.from, m.to, m.sent, m.channel, s.label);
            }
        }
    }
    let detail = if leaks == 0 {
        format!("{} messages scanned", trace.messages.len())
    } else {
        format!("{leaks} messages; first: {first}")
    };
    r.push("no_secret_on_wire", None, leaks == 0, detail);
}
