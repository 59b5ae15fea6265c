// SPDX-License-Identifier: Apache-2.0

//! Network-wide configuration shared by every node. All sections have
//! defaults so a config file only needs the keys it changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cas::DEFAULT_MAX_PAYLOAD;
use crate::ledger::{Collections, EndorsementPolicy, PRIVATE_COLLECTION};
use crate::net::NodeId;
use crate::ordering::OrderingConfig;
use crate::time::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: u32,
    pub seed: u64,
    pub raft: RaftSection,
    pub block: BlockSection,
    pub policy: PolicySection,
    /// Collection name -> member orgs. Empty means `deon_private` with all orgs.
    pub collections: BTreeMap<String, Vec<String>>,
    /// Enabled chaincodes. Empty means all built-ins.
    pub chaincodes: Vec<String>,
    pub cas: CasSection,
    pub core: CoreSection,
    pub cost: CostModel,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            nodes: 3,
            seed: 42,
            raft: RaftSection::default(),
            block: BlockSection::default(),
            policy: PolicySection::default(),
            collections: BTreeMap::new(),
            chaincodes: Vec::new(),
            cas: CasSection::default(),
            core: CoreSection::default(),
            cost: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaftSection {
    /// Election timeout range, drawn uniformly per timer reset.
    pub election_timeout_ms: [u64; 2],
    pub heartbeat_ms: u64,
    pub max_append_entries: usize,
}

impl Default for RaftSection {
    fn default() -> Self {
        RaftSection { election_timeout_ms: [150, 300], heartbeat_ms: 50, max_append_entries: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSection {
    pub max_txs: usize,
    pub timeout_ms: u64,
}

impl Default for BlockSection {
    fn default() -> Self {
        BlockSection { max_txs: 50, timeout_ms: 250 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// Orgs whose endorsement is required. Empty means every org.
    pub required_orgs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CasSection {
    pub max_payload: usize,
    pub fetch_timeout_ms: u64,
    /// Distinct entries a node may hold; unlimited when absent.
    pub capacity: Option<usize>,
}

impl Default for CasSection {
    fn default() -> Self {
        CasSection { max_payload: DEFAULT_MAX_PAYLOAD, fetch_timeout_ms: 500, capacity: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSection {
    pub receipt_timeout_ms: u64,
    /// Endorsers that have not answered by then are asked again.
    pub endorse_retry_ms: u64,
    /// An envelope not seen committed by then is submitted again.
    pub resubmit_ms: u64,
}

impl Default for CoreSection {
    fn default() -> Self {
        CoreSection { receipt_timeout_ms: 10_000, endorse_retry_ms: 1_000, resubmit_ms: 1_000 }
    }
}

/// Simulated processing cost per operation, charged against a node's single
/// processing queue in sim-time mode. Wall-clock mode ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub enabled: bool,
    pub sig_verify_ms: f64,
    pub sign_ms: f64,
    pub chaincode_ms: f64,
    pub state_write_ms: f64,
    pub msg_ms: f64,
    pub msg_per_kib_ms: f64,
    pub cas_put_ms: f64,
    pub cas_announce_ms: f64,
    pub transient_write_ms: f64,
    pub private_commit_ms: f64,
    pub block_commit_ms: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            enabled: true,
            sig_verify_ms: 0.6,
            sign_ms: 0.3,
            chaincode_ms: 0.3,
            state_write_ms: 0.1,
            msg_ms: 0.05,
            msg_per_kib_ms: 0.02,
            cas_put_ms: 1.0,
            cas_announce_ms: 0.5,
            transient_write_ms: 1.0,
            private_commit_ms: 1.0,
            block_commit_ms: 0.5,
        }
    }
}

impl CostModel {
    pub fn free() -> Self {
        CostModel { enabled: false, ..CostModel::default() }
    }
}

impl NetworkConfig {
    pub fn node_ids(&self) -> Vec<NodeId> {
        (0..self.nodes).map(NodeId).collect()
    }

    pub fn orgs(&self) -> Vec<String> {
        self.node_ids().into_iter().map(NodeId::org).collect()
    }

    pub fn ordering(&self) -> OrderingConfig {
        OrderingConfig {
            election_timeout_min: Span::from_millis(self.raft.election_timeout_ms[0]),
            election_timeout_max: Span::from_millis(self.raft.election_timeout_ms[1]),
            heartbeat: Span::from_millis(self.raft.heartbeat_ms),
            batch_timeout: Span::from_millis(self.block.timeout_ms),
            max_block_txs: self.block.max_txs,
            max_append_entries: self.raft.max_append_entries,
        }
    }

    pub fn policy(&self) -> EndorsementPolicy {
        if self.policy.required_orgs.is_empty() {
            EndorsementPolicy::all_of(self.orgs())
        } else {
            EndorsementPolicy::all_of(self.policy.required_orgs.iter().cloned())
        }
    }

    pub fn collections(&self) -> Collections {
        if self.collections.is_empty() {
            Collections::from([(PRIVATE_COLLECTION.to_string(), self.orgs().into_iter().collect())])
        } else {
            self.collections.iter().map(|(k, v)| (k.clone(), v.iter().cloned().collect())).collect()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::InvalidRequest;
        if self.nodes == 0 {
            return Err(InvalidRequest("nodes must be at least 1".into()));
        }
        if self.block.max_txs == 0 {
            return Err(InvalidRequest("block.max_txs must be positive".into()));
        }
        let [lo, hi] = self.raft.election_timeout_ms;
        if lo == 0 || lo > hi || self.raft.heartbeat_ms >= lo {
            return Err(InvalidRequest("need 0 < heartbeat_ms < election_timeout_ms[0] <= [1]".into()));
        }
        let orgs = self.orgs();
        for org in self.policy().required_orgs.iter().chain(self.collections().values().flatten()) {
            if !orgs.contains(org) {
                return Err(InvalidRequest(format!("unknown org {org}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: NetworkConfig = serde_json::from_str(r#"{"nodes":5,"block":{"max_txs":10}}"#).unwrap();
        assert_eq!(cfg.nodes, 5);
        assert_eq!(cfg.block.max_txs, 10);
        assert_eq!(cfg.block.timeout_ms, 250);
        assert_eq!(cfg.policy().required_orgs.len(), 5);
        assert!(cfg.collections()[PRIVATE_COLLECTION].contains("org5"));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_org() {
        let mut cfg = NetworkConfig::default();
        cfg.policy.required_orgs = vec!["org9".into()];
        assert!(cfg.validate().is_err());
    }
}
