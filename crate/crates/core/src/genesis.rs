// SPDX-License-Identifier: Apache-2.0

//! Deterministic network genesis: one org key per node, which doubles as the
//! node agent's steward identity, plus the membership credential definition.

use std::collections::BTreeMap;

use crate::codec::{self, Hash32};
use crate::config::NetworkConfig;
use crate::crypto::{derive_rng, Keypair, PublicKey};
use crate::identity::{Did, IdentityRecord, IdentityTx, Role, MEMBER_ATTRIBUTES, MEMBER_SCHEMA};
use crate::net::NodeId;

#[derive(Clone)]
pub struct Genesis {
    keys: Vec<Keypair>,
    pub agents: Vec<Did>,
    pub identity: Vec<IdentityTx>,
    pub org_keys: BTreeMap<String, PublicKey>,
}

impl std::fmt::Debug for Genesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Genesis").field("agents", &self.agents).finish_non_exhaustive()
    }
}

pub fn agent_endpoint(node: NodeId) -> String {
    format!("deon://{node}")
}

impl Genesis {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let ids = cfg.node_ids();
        let keys: Vec<Keypair> =
            ids.iter().map(|n| Keypair::generate(&mut derive_rng(cfg.seed, "org-key", n.0 as u64))).collect();
        let agents: Vec<Did> = keys.iter().map(|k| Did::from_public_key(&k.public())).collect();
        let mut identity: Vec<IdentityTx> = ids
            .iter()
            .zip(&keys)
            .zip(&agents)
            .map(|((n, k), did)| {
                IdentityTx::signed(
                    IdentityRecord::Nym {
                        did: did.clone(),
                        verkey: k.public(),
                        role: Role::Steward,
                        endpoint: agent_endpoint(*n),
                    },
                    did.clone(),
                    k,
                )
            })
            .collect();
        identity.push(IdentityTx::signed(
            IdentityRecord::CredDef {
                schema: MEMBER_SCHEMA.into(),
                attributes: MEMBER_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
                issuer: agents[0].clone(),
            },
            agents[0].clone(),
            &keys[0],
        ));
        let org_keys = ids.iter().map(|n| n.org()).zip(keys.iter().map(Keypair::public)).collect();
        Genesis { keys, agents, identity, org_keys }
    }

    pub fn key(&self, node: NodeId) -> &Keypair {
        &self.keys[node.0 as usize]
    }

    pub fn agent(&self, node: NodeId) -> &Did {
        &self.agents[node.0 as usize]
    }

    /// Digest over the public genesis material.
    pub fn digest(&self) -> Hash32 {
        codec::digest_of(&(&self.identity, &self.org_keys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::IdentityLedger;

    #[test]
    fn same_seed_same_genesis() {
        let cfg = NetworkConfig::default();
        assert_eq!(Genesis::new(&cfg).digest(), Genesis::new(&cfg).digest());
        let other = NetworkConfig { seed: 43, ..NetworkConfig::default() };
        assert_ne!(Genesis::new(&cfg).digest(), Genesis::new(&other).digest());
    }

    #[test]
    fn agents_are_stewards() {
        let g = Genesis::new(&NetworkConfig::default());
        let l = IdentityLedger::with_genesis(g.identity.clone()).unwrap();
        for a in &g.agents {
            assert!(l.is_steward(a));
        }
        assert!(l.cred_def(MEMBER_SCHEMA).is_some());
    }
}
