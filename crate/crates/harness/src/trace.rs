// SPDX-License-Identifier: Apache-2.0

//! Record of a run: bus traffic, node events and injected faults.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use deon_core::codec::Hash32;
use deon_core::net::{Addr, NodeId};
use deon_core::cas::ContentId;
use deon_core::node::{Node, NodeEvent};
use deon_core::time::Time;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Capture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Loss,
    Partition,
    DeadSender,
    DeadReceiver,
    Malformed,
}

#[derive(Debug, Clone)]
pub struct TraceMsg {
    pub sent: Time,
    pub at: Time,
    pub from: Addr,
    pub to: Addr,
    pub channel: &'static str,
    pub bytes: Arc<[u8]>,
    pub dropped: Option<DropReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum CorruptTarget {
    /// Bit flip inside stored block `index` of a node's journal.
    Block { node: NodeId, index: usize, byte: usize, bit: u8 },
    /// Bit flip in a private record's salt or cid.
    Private { node: NodeId, key: String, field: String, byte: usize, bit: u8 },
    /// Bit flip in a stored content-store payload.
    Cas { node: NodeId, cid: String, byte: usize, bit: u8 },
}

impl CorruptTarget {
    pub fn node(&self) -> NodeId {
        match self {
            CorruptTarget::Block { node, .. } | CorruptTarget::Private { node, .. } | CorruptTarget::Cas { node, .. } => *node,
        }
    }

    /// Applies the flip to `target`'s storage. An empty key or cid picks the
    /// first one the node holds. Returns whether anything was changed.
    pub fn apply(&self, target: &mut Node) -> bool {
        match self {
            CorruptTarget::Block { index, byte, bit, .. } => target.peer.journal_mut().corrupt(*index, *byte, *bit),
            CorruptTarget::Private { key, field, byte, bit, .. } => {
                let key = if key.is_empty() {
                    match target.peer.private.iter().next() {
                        Some(((_, k), _)) => k.clone(),
                        None => return false,
                    }
                } else {
                    key.clone()
                };
                target.corrupt_private(&key, field, *byte, *bit)
            }
            CorruptTarget::Cas { cid, byte, bit, .. } => {
                let cid = if cid.is_empty() {
                    match target.cas.store.cids().next() {
                        Some(c) => *c,
                        None => return false,
                    }
                } else {
                    match cid.parse::<ContentId>() {
                        Ok(c) => c,
                        Err(_) => return false,
                    }
                };
                target.cas.store.corrupt(&cid, *byte, *bit)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum Fault {
    Kill { node: NodeId },
    Restart { node: NodeId },
    Partition { groups: Vec<Vec<NodeId>> },
    Heal,
    Corrupt { target: CorruptTarget, applied: bool },
    /// Detector self-test: arbitrary bytes put on the wire.
    Planted { from: Addr, to: Addr },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEvent {
    pub at: Time,
    pub node: NodeId,
    #[serde(flatten)]
    pub event: NodeEvent,
}

#[derive(Debug, Clone)]
pub struct TraceLog {
    capture: Capture,
    pub messages: Vec<TraceMsg>,
    pub events: Vec<TraceEvent>,
    pub faults: Vec<(Time, Fault)>,
    digest: Sha256,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

impl TraceLog {
    pub fn new(capture: Capture) -> Self {
        TraceLog {
            capture,
            messages: Vec::new(),
            events: Vec::new(),
            faults: Vec::new(),
            digest: Sha256::new(),
            sent: 0,
            delivered: 0,
            dropped: 0,
            bytes: 0,
        }
    }

    pub fn capture(&self) -> Capture {
        self.capture
    }

    /// Records the final fate of a message.
    pub fn record(&mut self, m: TraceMsg) {
        self.sent += 1;
        self.bytes += m.bytes.len() as u64;
        if m.dropped.is_some() {
            self.dropped += 1;
        } else {
            self.delivered += 1;
        }
        if self.capture != Capture::None {
            self.digest.update(m.at.0.to_be_bytes());
            self.digest.update(m.from.to_string().as_bytes());
            self.digest.update(m.to.to_string().as_bytes());
            self.digest.update([m.dropped.is_some() as u8]);
            self.digest.update((m.bytes.len() as u64).to_be_bytes());
            self.digest.update(&m.bytes);
        }
        if self.capture == Capture::Full {
            self.messages.push(m);
        }
    }

    pub fn event(&mut self, at: Time, node: NodeId, event: NodeEvent) {
        self.events.push(TraceEvent { at, node, event });
    }

    pub fn fault(&mut self, at: Time, fault: Fault) {
        self.faults.push((at, fault));
    }

    /// Digest over every message outcome so far, in order.
    pub fn digest(&self) -> Hash32 {
        Hash32(self.digest.clone().finalize().into())
    }

    /// Writes events and faults as JSON lines, plus message metadata when
    /// captured.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (at, f) in &self.faults {
            writeln!(w, "{}", serde_json::json!({"at_us": at.0, "kind": "fault", "fault": f}))?;
        }
        for e in &self.events {
            writeln!(w, "{}", serde_json::json!({"kind": "event", "event": e}))?;
        }
        for m in &self.messages {
            writeln!(
                w,
                "{}",
                serde_json::json!({
                    "kind": "message",
                    "sent_us": m.sent.0,
                    "at_us": m.at.0,
                    "from": m.from.to_string(),
                    "to": m.to.to_string(),
                    "channel": m.channel,
                    "len": m.bytes.len(),
                    "dropped": m.dropped,
                })
            )?;
        }
        w.flush()
    }
}
