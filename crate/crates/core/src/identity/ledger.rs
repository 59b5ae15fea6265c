// SPDX-License-Identifier: Apache-2.0

//! Identity ledger: NYM and CRED_DEF records, replicated through the same
//! ordering service as the data chain but applied to a separate namespace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::did::{Did, DidDocument};
use crate::codec;
use crate::crypto::{Keypair, PublicKey, Signature};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Node agent; allowed to write identity records and issue credentials.
    Steward,
    User,
    Application,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum IdentityRecord {
    Nym {
        did: Did,
        verkey: PublicKey,
        role: Role,
        #[serde(default)]
        endpoint: String,
    },
    CredDef {
        schema: String,
        attributes: Vec<String>,
        issuer: Did,
    },
}

/// A record plus the steward signature authorizing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityTx {
    pub record: IdentityRecord,
    pub submitter: Did,
    pub signature: Signature,
}

impl IdentityTx {
    pub fn signed(record: IdentityRecord, submitter: Did, key: &Keypair) -> Self {
        let signature = key.sign(&codec::to_canonical_vec(&record));
        IdentityTx { record, submitter, signature }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    Appended,
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NymEntry {
    verkey: PublicKey,
    role: Role,
    endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredDef {
    pub schema: String,
    pub attributes: Vec<String>,
    pub issuer: Did,
}

/// Append-only record list with lookup indexes. Holds public data only.
#[derive(Debug, Clone, Default)]
pub struct IdentityLedger {
    records: Vec<IdentityTx>,
    nyms: BTreeMap<Did, NymEntry>,
    cred_defs: BTreeMap<String, CredDef>,
}

impl IdentityLedger {
    /// Ledger seeded with trusted records that bypass the steward check.
    pub fn with_genesis(genesis: Vec<IdentityTx>) -> Result<Self> {
        let mut l = IdentityLedger::default();
        for tx in genesis {
            l.apply_unchecked(tx)?;
        }
        Ok(l)
    }

    /// Applies an ordered record. The submitter must be a registered steward
    /// whose key signed the record.
    pub fn apply(&mut self, tx: IdentityTx) -> Result<Applied> {
        let Some(sub) = self.nyms.get(&tx.submitter) else {
            return Err(Error::IdentityRejected(format!("unknown submitter {}", tx.submitter)));
        };
        if sub.role != Role::Steward {
            return Err(Error::IdentityRejected(format!("{} is not a node agent", tx.submitter)));
        }
        if !sub.verkey.verify(&codec::to_canonical_vec(&tx.record), &tx.signature) {
            return Err(Error::IdentityRejected("bad submitter signature".into()));
        }
        self.apply_unchecked(tx)
    }

    fn apply_unchecked(&mut self, tx: IdentityTx) -> Result<Applied> {
        match &tx.record {
            IdentityRecord::Nym { did, verkey, role, endpoint } => {
                if !did.is_bound_to(verkey) {
                    return Err(Error::IdentityRejected(format!("{did} is not derived from its verkey")));
                }
                if let Some(existing) = self.nyms.get(did) {
                    return if existing.verkey == *verkey {
                        Ok(Applied::NoOp)
                    } else {
                        Err(Error::IdentityRejected(format!("{did} already registered with another key")))
                    };
                }
                self.nyms.insert(
                    did.clone(),
                    NymEntry { verkey: *verkey, role: *role, endpoint: endpoint.clone() },
                );
            }
            IdentityRecord::CredDef { schema, attributes, issuer } => {
                validate_attribute_names(attributes)?;
                if self.cred_defs.contains_key(schema) {
                    return Ok(Applied::NoOp);
                }
                self.cred_defs.insert(
                    schema.clone(),
                    CredDef { schema: schema.clone(), attributes: attributes.clone(), issuer: issuer.clone() },
                );
            }
        }
        self.records.push(tx);
        Ok(Applied::Appended)
    }

    pub fn resolve(&self, did: &Did) -> Option<DidDocument> {
        self.nyms.get(did).map(|n| DidDocument {
            id: did.clone(),
            verkey: n.verkey,
            service_endpoint: n.endpoint.clone(),
        })
    }

    pub fn role(&self, did: &Did) -> Option<Role> {
        self.nyms.get(did).map(|n| n.role)
    }

    pub fn is_steward(&self, did: &Did) -> bool {
        self.role(did) == Some(Role::Steward)
    }

    pub fn cred_def(&self, schema: &str) -> Option<&CredDef> {
        self.cred_defs.get(schema)
    }

    pub fn records(&self) -> &[IdentityTx] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Digest over the canonical record list; equal on replicas that applied
    /// the same records.
    pub fn digest(&self) -> codec::Hash32 {
        codec::digest_of(&self.records)
    }
}

/// Attribute names must be distinct, non-empty, and no name may be a prefix of
/// another, so `name ‖ value` splits unambiguously inside a commitment.
fn validate_attribute_names(names: &[String]) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if a.is_empty() {
            return Err(Error::InvalidRequest("empty attribute name".into()));
        }
        for (j, b) in names.iter().enumerate() {
            if i != j && b.starts_with(a.as_str()) {
                return Err(Error::InvalidRequest(format!("attribute names {a} and {b} overlap")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::did::create_did;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn steward_ledger() -> (IdentityLedger, Did, Keypair, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (did, kp, _) = create_did(&mut rng);
        let nym = IdentityRecord::Nym { did: did.clone(), verkey: kp.public(), role: Role::Steward, endpoint: "n1".into() };
        let l = IdentityLedger::with_genesis(vec![IdentityTx::signed(nym, did.clone(), &kp)]).unwrap();
        (l, did, kp, rng)
    }

    #[test]
    fn register_resolve_and_idempotence() {
        let (mut l, steward, skp, mut rng) = steward_ledger();
        let (user, ukp, _) = create_did(&mut rng);
        let rec = IdentityRecord::Nym { did: user.clone(), verkey: ukp.public(), role: Role::User, endpoint: String::new() };
        assert_eq!(l.apply(IdentityTx::signed(rec.clone(), steward.clone(), &skp)).unwrap(), Applied::Appended);
        assert_eq!(l.resolve(&user).unwrap().verkey, ukp.public());
        assert_eq!(l.apply(IdentityTx::signed(rec, steward.clone(), &skp)).unwrap(), Applied::NoOp);
        assert_eq!(l.len(), 2);

        let (other, _, _) = create_did(&mut rng);
        assert!(l.resolve(&other).is_none());
    }

    #[test]
    fn duplicate_did_with_other_key_rejected() {
        let (mut l, steward, skp, mut rng) = steward_ledger();
        let (user, ukp, _) = create_did(&mut rng);
        let (_, other_kp, _) = create_did(&mut rng);
        let ok = IdentityRecord::Nym { did: user.clone(), verkey: ukp.public(), role: Role::User, endpoint: String::new() };
        l.apply(IdentityTx::signed(ok, steward.clone(), &skp)).unwrap();
        // Binding check fires before the duplicate check for a foreign key.
        let bad = IdentityRecord::Nym { did: user, verkey: other_kp.public(), role: Role::User, endpoint: String::new() };
        assert!(l.apply(IdentityTx::signed(bad, steward, &skp)).is_err());
    }

    #[test]
    fn only_stewards_write() {
        let (mut l, steward, skp, mut rng) = steward_ledger();
        let (user, ukp, _) = create_did(&mut rng);
        let rec = IdentityRecord::Nym { did: user.clone(), verkey: ukp.public(), role: Role::User, endpoint: String::new() };
        l.apply(IdentityTx::signed(rec, steward.clone(), &skp)).unwrap();
        let (x, xkp, _) = create_did(&mut rng);
        let rec = IdentityRecord::Nym { did: x, verkey: xkp.public(), role: Role::User, endpoint: String::new() };
        assert!(l.apply(IdentityTx::signed(rec.clone(), user, &ukp)).is_err());
        // forged signature
        assert!(l.apply(IdentityTx::signed(rec, steward, &ukp)).is_err());
    }

    #[test]
    fn attribute_prefixes_rejected() {
        assert!(validate_attribute_names(&["kind".into(), "name".into(), "node".into()]).is_ok());
        assert!(validate_attribute_names(&["no".into(), "node".into()]).is_err());
        assert!(validate_attribute_names(&["a".into(), "a".into()]).is_err());
    }
}
