// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tx::TransactionEnvelope;
use crate::crypto::PublicKey;

/// Set of organizations that must all endorse a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndorsementPolicy {
    pub required_orgs: BTreeSet<String>,
}

impl EndorsementPolicy {
    pub fn all_of<I: IntoIterator<Item = String>>(orgs: I) -> Self {
        EndorsementPolicy { required_orgs: orgs.into_iter().collect() }
    }
}

/// True iff every required org contributed a signature that verifies over the
/// envelope's endorsement bytes under that org's registered key. Monotone:
/// extra or invalid endorsements from other orgs never turn true into false.
pub fn evaluate_policy(
    env: &TransactionEnvelope,
    policy: &EndorsementPolicy,
    org_keys: &BTreeMap<String, PublicKey>,
) -> bool {
    let msg = env.endorsement_message();
    policy.required_orgs.iter().all(|org| {
        let Some(key) = org_keys.get(org) else { return false };
        env.endorsements.iter().any(|e| e.org == *org && key.verify(&msg, &e.signature))
    })
}
