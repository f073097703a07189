//! The protocol layer: actors, routing, wire format, message log and the
//! two schedules (deterministic single-threaded, and worker threads).
//!
//! Interactions flow user -> data owners, encrypted per owner key. Owners
//! buffer blocks; at the threshold they ask the coordinator for the rows
//! they need, push back gradient bundles, and the coordinator applies them
//! serially. Everything crossing the bus is logged.

mod actors;
mod bus;
mod msglog;
mod routing;
mod threaded;
pub mod wire;

pub use actors::{Cos, CosStats, DataOwner, DoStats, ReprAuditEntry};
pub use bus::{BusStats, Envelope, Federation, FederationConfig};
pub use msglog::{LogEntry, MessageLog};
pub use routing::{build_routing_table, RoutingTable};
pub use threaded::run_epoch_threaded;

/// Who sent or received a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    User,
    Do(u32),
    Cos,
}

/// Where an envelope is headed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Addr {
    Do(u32),
    Cos,
}
