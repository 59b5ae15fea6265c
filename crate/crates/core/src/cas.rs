// SPDX-License-Identifier: Apache-2.0

//! Content-addressed storage.
//!
//! Each node keeps an immutable [`BlockStore`] plus a replicated
//! [`ProviderIndex`]. Puts are announced to every peer; a get that misses
//! locally asks known providers first, then falls back to the remaining
//! peers, verifying every fetched payload against its [`ContentId`] before it
//! is returned or cached.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{self, Hash32};
use crate::error::{Error, Result};
use crate::net::NodeId;
use crate::time::{Span, Time};

const CID_PREFIX: &str = "cid:sha256:";

/// Default upper bound on a single payload.
pub const DEFAULT_MAX_PAYLOAD: usize = 16 * 1024 * 1024;

/// Digest-derived name of an immutable payload: `cid:sha256:<64 hex>`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(pub Hash32);

impl ContentId {
    pub fn digest(&self) -> &Hash32 {
        &self.0
    }

    pub fn matches(&self, payload: &[u8]) -> bool {
        compute_cid(payload) == *self
    }
}

pub fn compute_cid(payload: &[u8]) -> ContentId {
    ContentId(codec::sha256(payload))
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{CID_PREFIX}{}", self.0.to_hex())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", &self.0.to_hex()[..12])
    }
}

impl FromStr for ContentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let hex = s
            .strip_prefix(CID_PREFIX)
            .ok_or_else(|| Error::InvalidRequest(format!("malformed cid: {s}")))?;
        if hex.len() != 64 || !hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(Error::InvalidRequest(format!("malformed cid: {s}")));
        }
        Ok(ContentId(Hash32::from_hex(hex)?))
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Node-local immutable payload store.
#[derive(Debug, Clone)]
pub struct BlockStore {
    blobs: HashMap<ContentId, Arc<[u8]>>,
    byte_count: usize,
    max_payload: usize,
    capacity: Option<usize>,
}

impl Default for BlockStore {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_PAYLOAD, None)
    }
}

impl BlockStore {
    pub fn new(max_payload: usize, capacity: Option<usize>) -> Self {
        BlockStore { blobs: HashMap::new(), byte_count: 0, max_payload, capacity }
    }

    /// Stores `payload`; returns its id and whether it was newly inserted.
    pub fn put(&mut self, payload: &[u8]) -> Result<(ContentId, bool)> {
        if payload.len() > self.max_payload {
            return Err(Error::Resource(format!(
                "payload of {} bytes exceeds limit {}",
                payload.len(),
                self.max_payload
            )));
        }
        let cid = compute_cid(payload);
        if self.blobs.contains_key(&cid) {
            return Ok((cid, false));
        }
        if let Some(cap) = self.capacity {
            if self.byte_count + payload.len() > cap {
                return Err(Error::Resource("content store is full".into()));
            }
        }
        self.byte_count += payload.len();
        self.blobs.insert(cid, Arc::from(payload));
        Ok((cid, true))
    }

    /// Stores bytes that arrived from elsewhere, refusing anything that does
    /// not hash to `expected`.
    pub fn put_verified(&mut self, expected: ContentId, payload: &[u8]) -> Result<bool> {
        if !expected.matches(payload) {
            return Err(Error::Integrity(format!("payload does not hash to {expected}")));
        }
        self.put(payload).map(|(_, new)| new)
    }

    /// Raw lookup without verification.
    pub fn get_raw(&self, cid: &ContentId) -> Option<Arc<[u8]>> {
        self.blobs.get(cid).cloned()
    }

    /// Lookup that re-checks the digest of the stored bytes.
    pub fn get(&self, cid: &ContentId) -> Option<Result<Arc<[u8]>>> {
        self.blobs.get(cid).map(|b| {
            if cid.matches(b) {
                Ok(b.clone())
            } else {
                Err(Error::Integrity(format!("stored bytes for {cid} fail digest check")))
            }
        })
    }

    pub fn contains(&self, cid: &ContentId) -> bool {
        self.blobs.contains_key(cid)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn byte_count(&self) -> usize {
        self.byte_count
    }

    pub fn cids(&self) -> impl Iterator<Item = &ContentId> {
        self.blobs.keys()
    }

    /// Fault-injection hook: flips one bit of a stored payload in place.
    /// Returns false if the cid is not stored or the payload is empty.
    pub fn corrupt(&mut self, cid: &ContentId, byte: usize, bit: u8) -> bool {
        let Some(blob) = self.blobs.get_mut(cid) else { return false };
        if blob.is_empty() {
            return false;
        }
        let mut bytes = blob.to_vec();
        let i = byte % bytes.len();
        bytes[i] ^= 1 << (bit % 8);
        *blob = Arc::from(bytes);
        true
    }
}

/// Replicated map from content id to the nodes that announced it.
#[derive(Debug, Clone, Default)]
pub struct ProviderIndex {
    entries: BTreeMap<ContentId, BTreeSet<NodeId>>,
}

impl ProviderIndex {
    /// Set-union update; returns true if `node` was not already listed.
    pub fn announce(&mut self, cid: ContentId, node: NodeId) -> bool {
        self.entries.entry(cid).or_default().insert(node)
    }

    pub fn providers(&self, cid: &ContentId) -> BTreeSet<NodeId> {
        self.entries.get(cid).cloned().unwrap_or_default()
    }

    pub fn remove(&mut self, cid: &ContentId, node: NodeId) {
        if let Some(set) = self.entries.get_mut(cid) {
            set.remove(&node);
            if set.is_empty() {
                self.entries.remove(cid);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CasMsg {
    Announce { cid: ContentId, provider: NodeId },
    Fetch { req: u64, cid: ContentId },
    FetchReply {
        req: u64,
        cid: ContentId,
        #[serde(with = "codec::opt_hex_bytes")]
        data: Option<Vec<u8>>,
    },
}

/// Caller-chosen tag used to route a finished fetch back to whoever asked.
pub type FetchToken = u64;

#[derive(Debug)]
struct PendingFetch {
    cid: ContentId,
    token: FetchToken,
    current: NodeId,
    remaining: VecDeque<NodeId>,
    deadline: Time,
}

/// Result of starting a get.
#[derive(Debug)]
pub enum GetStart {
    Ready(Result<Arc<[u8]>>),
    Pending(Vec<(NodeId, CasMsg)>),
}

/// Messages to send plus fetches that finished during a step.
#[derive(Debug, Default)]
pub struct CasStep {
    pub send: Vec<(NodeId, CasMsg)>,
    pub done: Vec<(FetchToken, Result<Arc<[u8]>>)>,
}

/// Per-node content store: local blobs, provider index, outstanding fetches.
#[derive(Debug)]
pub struct Cas {
    id: NodeId,
    peers: Vec<NodeId>,
    pub store: BlockStore,
    pub index: ProviderIndex,
    pending: BTreeMap<u64, PendingFetch>,
    next_req: u64,
    fetch_timeout: Span,
}

impl Cas {
    pub fn new(id: NodeId, peers: Vec<NodeId>, store: BlockStore, fetch_timeout: Span) -> Self {
        let peers = peers.into_iter().filter(|p| *p != id).collect();
        Cas {
            id,
            peers,
            store,
            index: ProviderIndex::default(),
            pending: BTreeMap::new(),
            next_req: 0,
            fetch_timeout,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    /// Stores locally and announces to every peer. Idempotent: a repeated put
    /// returns the same id and sends no further announcements.
    pub fn put(&mut self, payload: &[u8]) -> Result<(ContentId, Vec<(NodeId, CasMsg)>)> {
        let (cid, new) = self.store.put(payload)?;
        self.index.announce(cid, self.id);
        let msgs = if new { self.announcements(cid) } else { Vec::new() };
        Ok((cid, msgs))
    }

    fn announcements(&self, cid: ContentId) -> Vec<(NodeId, CasMsg)> {
        self.peers
            .iter()
            .map(|p| (*p, CasMsg::Announce { cid, provider: self.id }))
            .collect()
    }

    /// Announcements for every locally held cid, sent after a restart.
    pub fn reannounce_all(&self) -> Vec<(NodeId, CasMsg)> {
        let mut cids: Vec<_> = self.store.cids().copied().collect();
        cids.sort();
        cids.into_iter().flat_map(|c| self.announcements(c)).collect()
    }

    pub fn providers(&self, cid: &ContentId) -> BTreeSet<NodeId> {
        self.index.providers(cid)
    }

    pub fn get(&mut self, cid: ContentId, token: FetchToken, now: Time) -> GetStart {
        if let Some(r) = self.store.get(&cid) {
            return GetStart::Ready(r);
        }
        let mut candidates: VecDeque<NodeId> =
            self.index.providers(&cid).into_iter().filter(|p| *p != self.id).collect();
        for p in &self.peers {
            if !candidates.contains(p) {
                candidates.push_back(*p);
            }
        }
        let Some(first) = candidates.pop_front() else {
            return GetStart::Ready(Err(Error::NotFound(format!("no provider for {cid}"))));
        };
        let req = self.next_req;
        self.next_req += 1;
        self.pending.insert(
            req,
            PendingFetch { cid, token, current: first, remaining: candidates, deadline: now + self.fetch_timeout },
        );
        GetStart::Pending(vec![(first, CasMsg::Fetch { req, cid })])
    }

    pub fn handle(&mut self, from: NodeId, msg: CasMsg, now: Time) -> CasStep {
        let mut step = CasStep::default();
        match msg {
            CasMsg::Announce { cid, provider } => {
                self.index.announce(cid, provider);
            }
            CasMsg::Fetch { req, cid } => {
                // Served raw: a corrupted replica is caught by the requester.
                let data = self.store.get_raw(&cid).map(|b| b.to_vec());
                step.send.push((from, CasMsg::FetchReply { req, cid, data }));
            }
            CasMsg::FetchReply { req, cid, data } => {
                let Some(p) = self.pending.get(&req) else { return step };
                if p.current != from || p.cid != cid {
                    return step;
                }
                match data {
                    Some(bytes) if cid.matches(&bytes) => {
                        let p = self.pending.remove(&req).expect("checked above");
                        self.index.announce(cid, from);
                        // A full cache does not fail the fetch itself.
                        if let Ok((_, new)) = self.store.put(&bytes) {
                            self.index.announce(cid, self.id);
                            if new {
                                step.send.extend(self.announcements(cid));
                            }
                        }
                        step.done.push((p.token, Ok(Arc::from(bytes))));
                    }
                    Some(_) => {
                        let p = self.pending.remove(&req).expect("checked above");
                        self.index.remove(&cid, from);
                        step.done.push((
                            p.token,
                            Err(Error::Integrity(format!("{from} served bytes not matching {cid}"))),
                        ));
                    }
                    None => {
                        self.index.remove(&cid, from);
                        self.advance(req, now, &mut step);
                    }
                }
            }
        }
        step
    }

    pub fn tick(&mut self, now: Time) -> CasStep {
        let mut step = CasStep::default();
        let expired: Vec<u64> =
            self.pending.iter().filter(|(_, p)| p.deadline <= now).map(|(r, _)| *r).collect();
        for req in expired {
            self.advance(req, now, &mut step);
        }
        step
    }

    /// Moves a fetch on to its next candidate, or fails it with not-found.
    fn advance(&mut self, req: u64, now: Time, step: &mut CasStep) {
        let Some(mut p) = self.pending.remove(&req) else { return };
        match p.remaining.pop_front() {
            Some(next) => {
                let new_req = self.next_req;
                self.next_req += 1;
                p.current = next;
                p.deadline = now + self.fetch_timeout;
                step.send.push((next, CasMsg::Fetch { req: new_req, cid: p.cid }));
                self.pending.insert(new_req, p);
            }
            None => step
                .done
                .push((p.token, Err(Error::NotFound(format!("no live provider for {}", p.cid))))),
        }
    }

    pub fn next_deadline(&self) -> Option<Time> {
        self.pending.values().map(|p| p.deadline).min()
    }

    /// Drops volatile state (outstanding fetches) on restart.
    pub fn reset_volatile(&mut self) {
        self.pending.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cid_test_vectors() {
        assert_eq!(
            compute_cid(b"").to_string(),
            "cid:sha256:e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            compute_cid(b"hello").to_string(),
            "cid:sha256:2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_eq!(compute_cid(b"same"), compute_cid(b"same"));
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!("sha256:00".parse::<ContentId>().is_err());
        assert!("cid:sha256:ABCDEF".parse::<ContentId>().is_err());
        let upper = format!("cid:sha256:{}", "A".repeat(64));
        assert!(upper.parse::<ContentId>().is_err());
        let ok = format!("cid:sha256:{}", "a".repeat(64));
        assert!(ok.parse::<ContentId>().is_ok());
    }

    #[test]
    fn store_idempotent_and_limited() {
        let mut s = BlockStore::new(8, Some(12));
        let (c1, new1) = s.put(b"abc").unwrap();
        let (c2, new2) = s.put(b"abc").unwrap();
        assert_eq!(c1, c2);
        assert!(new1 && !new2);
        assert_eq!(s.len(), 1);
        assert!(matches!(s.put(b"123456789"), Err(Error::Resource(_))));
        s.put(b"12345678").unwrap();
        assert!(matches!(s.put(b"xyz"), Err(Error::Resource(_))));
        assert_eq!(&*s.get(&c1).unwrap().unwrap(), b"abc");
    }

    #[test]
    fn corrupted_entry_fails_verification() {
        let mut s = BlockStore::default();
        let (c, _) = s.put(b"hello world").unwrap();
        assert!(s.corrupt(&c, 3, 2));
        assert!(matches!(s.get(&c), Some(Err(Error::Integrity(_)))));
    }

    fn pair() -> (Cas, Cas) {
        let peers = vec![NodeId(0), NodeId(1)];
        (
            Cas::new(NodeId(0), peers.clone(), BlockStore::default(), Span::from_millis(100)),
            Cas::new(NodeId(1), peers, BlockStore::default(), Span::from_millis(100)),
        )
    }

    #[test]
    fn cross_node_fetch_caches_and_announces() {
        let (mut a, mut b) = pair();
        let (cid, ann) = a.put(b"payload").unwrap();
        assert_eq!(ann.len(), 1);
        for (_, m) in ann {
            b.handle(NodeId(0), m, Time::ZERO);
        }
        assert_eq!(b.providers(&cid), BTreeSet::from([NodeId(0)]));

        let GetStart::Pending(msgs) = b.get(cid, 9, Time::ZERO) else { panic!("expected fetch") };
        let (to, fetch) = msgs.into_iter().next().unwrap();
        assert_eq!(to, NodeId(0));
        let reply = a.handle(NodeId(1), fetch, Time::ZERO).send.remove(0).1;
        let step = b.handle(NodeId(0), reply, Time::ZERO);
        assert_eq!(step.done.len(), 1);
        assert_eq!(&*step.done[0].1.as_ref().unwrap().clone(), b"payload");
        assert!(b.store.contains(&cid));
        assert_eq!(b.providers(&cid), BTreeSet::from([NodeId(0), NodeId(1)]));
        // b re-announces to a
        assert_eq!(step.send.len(), 1);
    }

    #[test]
    fn corrupted_reply_is_integrity_error() {
        let (mut a, mut b) = pair();
        let (cid, _) = a.put(b"payload").unwrap();
        a.store.corrupt(&cid, 0, 0);
        b.index.announce(cid, NodeId(0));
        let GetStart::Pending(msgs) = b.get(cid, 1, Time::ZERO) else { panic!() };
        let reply = a.handle(NodeId(1), msgs[0].1.clone(), Time::ZERO).send.remove(0).1;
        let step = b.handle(NodeId(0), reply, Time::ZERO);
        assert!(matches!(step.done[0].1, Err(Error::Integrity(_))));
        assert!(b.providers(&cid).is_empty());
        assert!(!b.store.contains(&cid));
    }

    #[test]
    fn silent_provider_times_out_to_not_found() {
        let (_a, mut b) = pair();
        let cid = compute_cid(b"gone");
        b.index.announce(cid, NodeId(0));
        let GetStart::Pending(_) = b.get(cid, 5, Time::ZERO) else { panic!() };
        assert!(b.tick(Time::from_millis(50)).done.is_empty());
        let step = b.tick(Time::from_millis(100));
        assert!(matches!(step.done[0], (5, Err(Error::NotFound(_)))));
    }

    #[test]
    fn single_node_miss_is_not_found() {
        let mut solo = Cas::new(NodeId(0), vec![NodeId(0)], BlockStore::default(), Span::from_millis(10));
        assert!(matches!(
            solo.get(compute_cid(b"x"), 0, Time::ZERO),
            GetStart::Ready(Err(Error::NotFound(_)))
        ));
    }

    proptest! {
        #[test]
        fn cid_text_round_trips(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let cid = compute_cid(&bytes);
            let text = cid.to_string();
            prop_assert_eq!(text.parse::<ContentId>().unwrap(), cid);
            prop_assert!(cid.matches(&bytes));
        }

        #[test]
        fn returned_payload_always_matches_cid(
            bytes in proptest::collection::vec(any::<u8>(), 1..256),
            flip in any::<usize>(),
            bit in 0u8..8,
            corrupt in any::<bool>(),
        ) {
            let mut s = BlockStore::default();
            let (cid, _) = s.put(&bytes).unwrap();
            if corrupt {
                s.corrupt(&cid, flip, bit);
            }
            match s.get(&cid).unwrap() {
                Ok(p) => prop_assert_eq!(compute_cid(&p), cid),
                Err(e) => prop_assert!(corrupt && matches!(e, Error::Integrity(_))),
            }
        }
    }
}
