// SPDX-License-Identifier: Apache-2.0

pub mod cas;
pub mod client;
pub mod codec;
pub mod config;
pub mod crypto;
pub mod error;
pub mod genesis;
pub mod identity;
pub mod ledger;
pub mod msg;
pub mod net;
pub mod node;
pub mod ordering;
pub mod par;
pub mod service;
pub mod time;

pub use error::{Error, Result};
