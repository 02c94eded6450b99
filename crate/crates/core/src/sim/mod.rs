//! Deterministic simulation of the decentralized network: clients, topology,
//! round scheduling, seed exchange and unlearning requests.

mod client;
mod event;
mod network;
mod topology;

pub use client::ClientState;
pub use event::{metric, run_schedule, EventKind, EventLog, LogRecord, Schedule, SimEvent};
pub use network::{init_network, ClientStatus, HdusConfig, HdusNetwork, WireMessage};
pub use topology::Topology;
