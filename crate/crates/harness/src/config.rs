// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use deon_core::config::NetworkConfig;
use serde::{Deserialize, Serialize};

/// Latency and loss applied to every link, nodes and clients alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub base_ms: f64,
    pub jitter_ms: f64,
    pub loss: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig::lan()
    }
}

impl LinkConfig {
    /// Switched gigabit LAN.
    pub fn lan() -> Self {
        LinkConfig { base_ms: 1.0, jitter_ms: 0.2, loss: 0.0 }
    }

    /// Lossy off-grid Wi-Fi mesh.
    pub fn offgrid() -> Self {
        LinkConfig { base_ms: 5.0, jitter_ms: 3.0, loss: 0.01 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "lan" => Some(Self::lan()),
            "offgrid" => Some(Self::offgrid()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sim,
    Wall,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sim" => Ok(Mode::Sim),
            "wall" => Ok(Mode::Wall),
            _ => Err(format!("unknown mode {s:?} (sim|wall)")),
        }
    }
}

/// How much of the bus traffic the trace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capture {
    /// Nothing but counters.
    None,
    /// Running digest over every delivered message.
    #[default]
    Digest,
    /// Every message's bytes, for audits.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub network: NetworkConfig,
    pub link: LinkConfig,
    pub mode: Mode,
    pub capture: Capture,
    /// Mirror each node's block journal to `<dir>/n<i>.journal`.
    pub journal_dir: Option<PathBuf>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            network: NetworkConfig::default(),
            link: LinkConfig::lan(),
            mode: Mode::Sim,
            capture: Capture::Digest,
            journal_dir: None,
        }
    }
}

impl NetConfig {
    pub fn new(nodes: u32, seed: u64) -> Self {
        let mut c = NetConfig::default();
        c.network.nodes = nodes;
        c.network.seed = seed;
        c
    }
}
