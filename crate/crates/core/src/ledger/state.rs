// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tx::{TxId, Version};
use crate::cas::ContentId;
use crate::codec::{self, Hash32, HexBytes};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    pub value: HexBytes,
    pub version: Version,
}

/// Versioned key-value world state: a pure fold of valid writes over the
/// block stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
}

impl WorldState {
    pub fn get(&self, key: &str) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    pub fn version(&self, key: &str) -> Option<Version> {
        self.entries.get(key).map(|v| v.version)
    }

    pub fn put(&mut self, key: String, value: Vec<u8>, version: Version) {
        debug_assert!(self.version(&key).map_or(true, |old| old < version), "versions must increase");
        self.entries.insert(key, VersionedValue { value: HexBytes(value), version });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SHA-256 over the canonical list of `[key, value-hex, version]` sorted by key.
    pub fn digest(&self) -> Hash32 {
        #[derive(Serialize)]
        struct Row<'a>(&'a str, &'a HexBytes, &'a Version);
        let rows: Vec<Row<'_>> = self.entries.iter().map(|(k, v)| Row(k, &v.value, &v.version)).collect();
        codec::digest_of(&rows)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &VersionedValue)> {
        self.entries.iter()
    }
}

/// Off-chain half of a private write. Only members of the collection hold it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateRecord {
    pub salt: Hash32,
    pub cid: ContentId,
    /// Payload carried inline when the content store is bypassed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<HexBytes>,
}

impl PrivateRecord {
    pub fn commitment(&self) -> Hash32 {
        public_commitment(&self.salt, &self.cid)
    }
}

/// `SHA-256(salt ‖ UTF-8 text of the cid)`.
pub fn public_commitment(salt: &Hash32, cid: &ContentId) -> Hash32 {
    codec::sha256_concat(&[salt.as_bytes(), cid.to_string().as_bytes()])
}

#[derive(Debug, Clone, Default)]
pub struct PrivateStore {
    entries: BTreeMap<(String, String), PrivateRecord>,
}

impl PrivateStore {
    pub fn get(&self, collection: &str, key: &str) -> Option<&PrivateRecord> {
        self.entries.get(&(collection.to_string(), key.to_string()))
    }

    pub fn put(&mut self, collection: &str, key: &str, record: PrivateRecord) {
        self.entries.insert((collection.to_string(), key.to_string()), record);
    }

    pub fn get_mut(&mut self, collection: &str, key: &str) -> Option<&mut PrivateRecord> {
        self.entries.get_mut(&(collection.to_string(), key.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &PrivateRecord)> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingPrivate {
    pub collection: String,
    pub key: String,
    pub record: PrivateRecord,
}

/// Private writes produced at endorsement, held until the transaction commits.
#[derive(Debug, Clone, Default)]
pub struct TransientStore {
    entries: BTreeMap<TxId, Vec<PendingPrivate>>,
}

impl TransientStore {
    pub fn insert(&mut self, tx: TxId, writes: Vec<PendingPrivate>) {
        self.entries.insert(tx, writes);
    }

    pub fn take(&mut self, tx: &TxId) -> Option<Vec<PendingPrivate>> {
        self.entries.remove(tx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::compute_cid;

    #[test]
    fn empty_digest_is_digest_of_empty_list() {
        let s = WorldState::default();
        assert_eq!(s.digest(), codec::sha256(b"[]"));
    }

    #[test]
    fn digest_changes_on_any_write() {
        let mut s = WorldState::default();
        s.put("a".into(), b"1".to_vec(), Version { block: 0, tx: 0 });
        let d1 = s.digest();
        s.put("a".into(), b"1".to_vec(), Version { block: 1, tx: 0 });
        let d2 = s.digest();
        s.put("b".into(), vec![], Version { block: 1, tx: 1 });
        let d3 = s.digest();
        assert!(d1 != d2 && d2 != d3 && d1 != d3);
    }

    #[test]
    fn commitment_is_salt_then_cid_text() {
        let salt = Hash32([7u8; 32]);
        let cid = compute_cid(b"vote");
        let mut buf = vec![7u8; 32];
        buf.extend_from_slice(cid.to_string().as_bytes());
        assert_eq!(public_commitment(&salt, &cid), codec::sha256(&buf));
    }
}
