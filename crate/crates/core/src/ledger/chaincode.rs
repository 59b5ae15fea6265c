// SPDX-License-Identifier: Apache-2.0

//! Deterministic chaincode over a simulation stub, plus the two built-in
//! contracts: `vote_cc` (private data) and `data_cc` (plain).

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::state::{PendingPrivate, PrivateRecord, PrivateStore, WorldState};
use super::tx::{KvRead, KvWrite, PrivateWrite, RwSet, Version};
use crate::cas::ContentId;
use crate::codec::{self, Hash32, HexBytes};
use crate::error::{Error, Result};

pub const VOTE_CC: &str = "vote_cc";
pub const DATA_CC: &str = "data_cc";
pub const PRIVATE_COLLECTION: &str = "deon_private";

/// Simulation context handed to chaincode. Reads go against a snapshot of the
/// world state and are recorded with their versions; writes are buffered.
pub struct Stub<'a> {
    state: &'a WorldState,
    private: &'a PrivateStore,
    transient: &'a BTreeMap<String, HexBytes>,
    reads: BTreeMap<String, Option<Version>>,
    writes: BTreeMap<String, Vec<u8>>,
    private_writes: BTreeMap<(String, String), PrivateRecord>,
}

impl<'a> Stub<'a> {
    pub fn new(
        state: &'a WorldState,
        private: &'a PrivateStore,
        transient: &'a BTreeMap<String, HexBytes>,
    ) -> Self {
        Stub {
            state,
            private,
            transient,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
            private_writes: BTreeMap::new(),
        }
    }

    pub fn get_state(&mut self, key: &str) -> Option<Vec<u8>> {
        if let Some(v) = self.writes.get(key) {
            return Some(v.clone());
        }
        let current = self.state.get(key);
        self.reads.entry(key.to_string()).or_insert(current.map(|v| v.version));
        current.map(|v| v.value.0.clone())
    }

    pub fn put_state(&mut self, key: &str, value: Vec<u8>) {
        self.writes.insert(key.to_string(), value);
    }

    pub fn get_private(&self, collection: &str, key: &str) -> Option<PrivateRecord> {
        self.private_writes
            .get(&(collection.to_string(), key.to_string()))
            .cloned()
            .or_else(|| self.private.get(collection, key).cloned())
    }

    pub fn put_private(&mut self, collection: &str, key: &str, record: PrivateRecord) {
        self.private_writes.insert((collection.to_string(), key.to_string()), record);
    }

    pub fn transient(&self, name: &str) -> Option<&[u8]> {
        self.transient.get(name).map(|b| b.0.as_slice())
    }

    /// Read/write sets plus the private records behind each private write.
    pub fn into_results(self) -> (RwSet, Vec<PendingPrivate>) {
        let reads = self.reads.into_iter().map(|(key, version)| KvRead { key, version }).collect();
        let writes = self.writes.into_iter().map(|(key, v)| KvWrite { key, value: HexBytes(v) }).collect();
        let mut private_writes = Vec::new();
        let mut pending = Vec::new();
        for ((collection, key), record) in self.private_writes {
            private_writes.push(PrivateWrite {
                collection: collection.clone(),
                key: key.clone(),
                commitment: record.commitment(),
            });
            pending.push(PendingPrivate { collection, key, record });
        }
        (RwSet { reads, writes, private_writes }, pending)
    }
}

pub trait Chaincode: Send + Sync {
    fn name(&self) -> &str;

    /// True for functions that only read; these may be served by `query`.
    fn is_query(&self, function: &str) -> bool;

    fn invoke(&self, stub: &mut Stub<'_>, function: &str, args: &[String]) -> Result<Vec<u8>>;
}

fn arg<'a>(args: &'a [String], i: usize, what: &str) -> Result<&'a str> {
    args.get(i)
        .map(String::as_str)
        .ok_or_else(|| Error::Chaincode(format!("missing argument {i} ({what})")))
}

fn transient_hash(stub: &Stub<'_>, name: &str) -> Result<Hash32> {
    let raw = stub
        .transient(name)
        .ok_or_else(|| Error::Chaincode(format!("missing transient field {name}")))?;
    let arr: [u8; 32] = raw
        .try_into()
        .map_err(|_| Error::Chaincode(format!("transient {name} must be 32 bytes")))?;
    Ok(Hash32(arr))
}

/// Private-data voting contract.
///
/// `push_vote(voteID)` with transient `{salt, cid[, inline]}` stores the
/// private record in the collection and the commitment on-chain.
#[derive(Debug, Default)]
pub struct VoteCc;

impl Chaincode for VoteCc {
    fn name(&self) -> &str {
        VOTE_CC
    }

    fn is_query(&self, function: &str) -> bool {
        matches!(function, "get_commitment" | "get_private")
    }

    fn invoke(&self, stub: &mut Stub<'_>, function: &str, args: &[String]) -> Result<Vec<u8>> {
        match function {
            "push_vote" => {
                let key = arg(args, 0, "voteID")?;
                if stub.get_state(key).is_some() {
                    return Err(Error::Chaincode(format!("{key} already recorded")));
                }
                let salt = transient_hash(stub, "salt")?;
                let cid_text = std::str::from_utf8(
                    stub.transient("cid").ok_or_else(|| Error::Chaincode("missing transient field cid".into()))?,
                )
                .map_err(|_| Error::Chaincode("cid is not utf-8".into()))?;
                let cid: ContentId = cid_text.parse().map_err(|e: Error| Error::Chaincode(e.message()))?;
                let inline = stub.transient("inline").map(|b| HexBytes(b.to_vec()));
                let record = PrivateRecord { salt, cid, inline };
                let commitment = record.commitment();
                stub.put_private(PRIVATE_COLLECTION, key, record);
                stub.put_state(key, commitment.0.to_vec());
                Ok(commitment.0.to_vec())
            }
            "get_commitment" => {
                let key = arg(args, 0, "voteID")?;
                stub.get_state(key).ok_or_else(|| Error::NotFound(format!("no commitment for {key}")))
            }
            "get_private" => {
                let key = arg(args, 0, "voteID")?;
                let rec = stub
                    .get_private(PRIVATE_COLLECTION, key)
                    .ok_or_else(|| Error::NotFound(format!("no private record for {key}")))?;
                Ok(codec::to_canonical_vec(&rec))
            }
            other => Err(Error::Chaincode(format!("vote_cc has no function {other}"))),
        }
    }
}

/// Value stored on-chain by `data_cc`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRecord {
    pub cid: ContentId,
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<HexBytes>,
}

/// Plain contract: `push(key, cid, metadata-json[, inline-hex])`, `get(key)`.
#[derive(Debug, Default)]
pub struct DataCc;

impl Chaincode for DataCc {
    fn name(&self) -> &str {
        DATA_CC
    }

    fn is_query(&self, function: &str) -> bool {
        function == "get"
    }

    fn invoke(&self, stub: &mut Stub<'_>, function: &str, args: &[String]) -> Result<Vec<u8>> {
        match function {
            "push" => {
                let key = arg(args, 0, "key")?;
                let cid: ContentId = arg(args, 1, "cid")?.parse().map_err(|e: Error| Error::Chaincode(e.message()))?;
                let metadata: BTreeMap<String, String> = serde_json::from_str(arg(args, 2, "metadata")?)
                    .map_err(|e| Error::Chaincode(format!("metadata: {e}")))?;
                let inline = match args.get(3) {
                    Some(h) => Some(HexBytes(hex::decode(h).map_err(|e| Error::Chaincode(e.to_string()))?)),
                    None => None,
                };
                // Recorded read: concurrent pushes to one key conflict.
                let _ = stub.get_state(key);
                let rec = DataRecord { cid, metadata, inline };
                stub.put_state(key, codec::to_canonical_vec(&rec));
                Ok(cid.to_string().into_bytes())
            }
            "get" => {
                let key = arg(args, 0, "key")?;
                stub.get_state(key).ok_or_else(|| Error::NotFound(format!("no record for {key}")))
            }
            other => Err(Error::Chaincode(format!("data_cc has no function {other}"))),
        }
    }
}

#[derive(Clone, Default)]
pub struct Registry {
    codes: BTreeMap<String, Arc<dyn Chaincode>>,
}

impl Registry {
    pub fn builtin() -> Self {
        let mut r = Registry::default();
        r.register(Arc::new(VoteCc));
        r.register(Arc::new(DataCc));
        r
    }

    pub fn register(&mut self, cc: Arc<dyn Chaincode>) {
        self.codes.insert(cc.name().to_string(), cc);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Chaincode>> {
        self.codes.get(name).ok_or_else(|| Error::UnknownChaincode(name.to_string()))
    }

    /// Keeps only the named chaincodes.
    pub fn retain(&mut self, names: &[String]) {
        self.codes.retain(|k, _| names.contains(k));
    }
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.codes.keys()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::compute_cid;

    fn transient(salt: [u8; 32], cid: &ContentId) -> BTreeMap<String, HexBytes> {
        BTreeMap::from([
            ("salt".to_string(), HexBytes(salt.to_vec())),
            ("cid".to_string(), HexBytes(cid.to_string().into_bytes())),
        ])
    }

    #[test]
    fn push_vote_produces_one_private_and_one_public_write() {
        let state = WorldState::default();
        let private = PrivateStore::default();
        let cid = compute_cid(b"{\"choice\":\"A\"}");
        let t = transient([3u8; 32], &cid);
        let mut stub = Stub::new(&state, &private, &t);
        let out = VoteCc.invoke(&mut stub, "push_vote", &["p1::v7".into()]).unwrap();
        let (rw, pending) = stub.into_results();
        assert_eq!(rw.writes.len(), 1);
        assert_eq!(rw.private_writes.len(), 1);
        assert_eq!(pending.len(), 1);
        assert_eq!(rw.reads, vec![KvRead { key: "p1::v7".into(), version: None }]);
        assert_eq!(rw.writes[0].value.0, out);
        assert_eq!(rw.private_writes[0].commitment.0.to_vec(), out);
        // no salt or cid text in the public write set
        let public = codec::to_canonical_string(&rw);
        assert!(!public.contains(&hex::encode([3u8; 32])));
        assert!(!public.contains(&cid.to_string()));
    }

    #[test]
    fn push_vote_twice_is_chaincode_error() {
        let mut state = WorldState::default();
        state.put("k".into(), vec![1], Version { block: 0, tx: 0 });
        let private = PrivateStore::default();
        let t = transient([1u8; 32], &compute_cid(b"x"));
        let mut stub = Stub::new(&state, &private, &t);
        assert!(matches!(VoteCc.invoke(&mut stub, "push_vote", &["k".into()]), Err(Error::Chaincode(_))));
    }

    #[test]
    fn data_cc_round_trip() {
        let mut state = WorldState::default();
        let private = PrivateStore::default();
        let t = BTreeMap::new();
        let cid = compute_cid(b"d");
        let mut stub = Stub::new(&state, &private, &t);
        DataCc
            .invoke(&mut stub, "push", &["k".into(), cid.to_string(), r#"{"m":"1"}"#.into()])
            .unwrap();
        let (rw, _) = stub.into_results();
        state.put("k".into(), rw.writes[0].value.0.clone(), Version { block: 0, tx: 0 });
        let mut stub = Stub::new(&state, &private, &t);
        let raw = DataCc.invoke(&mut stub, "get", &["k".into()]).unwrap();
        let rec: DataRecord = codec::from_slice(&raw).unwrap();
        assert_eq!(rec.cid, cid);
        assert_eq!(rec.metadata.get("m").map(String::as_str), Some("1"));
    }

    #[test]
    fn unknown_chaincode() {
        assert!(matches!(Registry::builtin().get("nope"), Err(Error::UnknownChaincode(_))));
    }
}
