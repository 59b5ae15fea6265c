// SPDX-License-Identifier: Apache-2.0

//! Decentralized identity: dids, the identity ledger, credentials with
//! selective disclosure, wallets, and the membership verifier.

pub mod credential;
pub mod did;
pub mod ledger;
pub mod verifier;
pub mod wallet;

pub use credential::{
    attribute_commitment, check_presentation, issue_credential, present, AttributeEntry, Presentation,
    RejectReason, VerifiableCredential, MEMBER_ATTRIBUTES, MEMBER_SCHEMA,
};
pub use did::{create_did, Did, DidDocument};
pub use ledger::{Applied, IdentityLedger, IdentityRecord, IdentityTx, Role};
pub use verifier::{Verdict, Verifier};
pub use wallet::Wallet;
