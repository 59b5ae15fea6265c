// SPDX-License-Identifier: Apache-2.0

//! `deon.toml`: defaults for the target node, the wallet and local networks.
//!
//! ```toml
//! node = "http://127.0.0.1:7050"
//! wallet = "deon-wallet.json"
//!
//! [network]
//! nodes = 3
//! seed = 42
//! mode = "wall"
//! base_port = 7050
//! link = "lan"
//!
//! [kdf]
//! log_n = 15
//! r = 8
//! p = 1
//! ```

use std::path::{Path, PathBuf};

use deon_core::error::{Error, Result};
use deon_harness::Mode;
use serde::{Deserialize, Serialize};

use crate::wallet_file::KdfParams;

pub const DEFAULT_FILE: &str = "deon.toml";
pub const DEFAULT_NODE: &str = "http://127.0.0.1:7050";
pub const DEFAULT_WALLET: &str = "deon-wallet.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkDefaults {
    pub nodes: u32,
    pub seed: u64,
    pub mode: Mode,
    pub base_port: u16,
    pub link: String,
}

impl Default for NetworkDefaults {
    fn default() -> Self {
        NetworkDefaults { nodes: 3, seed: 42, mode: Mode::Sim, base_port: 7050, link: "lan".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub node: Option<String>,
    pub wallet: Option<PathBuf>,
    pub network: NetworkDefaults,
    pub kdf: KdfParams,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::InvalidRequest(format!("config: {e}")))
    }

    /// Reads `path`; a missing default file is an empty config, a missing
    /// explicit one an error.
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let (path, explicit) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_FILE), false),
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Config::parse(&text).map_err(|e| Error::InvalidRequest(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && !explicit => Ok(Config::default()),
            Err(e) => Err(Error::Io(format!("{}: {e}", path.display()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = Config::parse("node = \"http://h:1\"\n[network]\nmode = \"wall\"\n[kdf]\nlog_n = 10\n").unwrap();
        assert_eq!(c.node.as_deref(), Some("http://h:1"));
        assert_eq!(c.network.mode, Mode::Wall);
        assert_eq!(c.network.nodes, 3);
        assert_eq!(c.kdf, KdfParams { log_n: 10, r: 8, p: 1 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("nodes = 3\n").is_err());
    }

    #[test]
    fn missing_default_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Config::load(Some(&dir.path().join("nope.toml"))).is_err());
    }
}
