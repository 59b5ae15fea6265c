// SPDX-License-Identifier: Apache-2.0

//! Runs a network of nodes on a simulated or real clock, drives client load
//! against it and audits the result.

pub mod audit;
pub mod bus;
pub mod config;
pub mod http;
pub mod load;
pub mod scenario;
pub mod session;
pub mod sim;
pub mod trace;
pub mod wall;

pub use bus::{call, Bus, ClientResponse};
pub use config::{Capture, LinkConfig, Mode, NetConfig};
pub use session::Session;
pub use sim::{NetAction, SimNet};
pub use wall::{WallClient, WallNet};
pub use audit::{audit, AuditReport, Secrets};
pub use load::{onboard_clients, Arm, Arrivals, LoadGen, LoadSpec, Sample};
pub use scenario::{run_script, Network, Script, WallDriver};
