//! Seed-deterministic simulator for service-function-chain (SFC) deployment
//! and failure recovery over a three-layer ground / UAV / satellite network.
//!
//! The network is modeled as a time-expansion graph: node positions, link
//! rates, and failures are fixed within each slot and change only at slot
//! boundaries. SFCs enter at ground stations, climb into the aerial layers to
//! have their VNFs processed, and terminate at a destination ground station.
//! Node failures arrive in Poisson batches; affected SFCs roll back to their
//! last surviving node and are re-placed either by a deferred-acceptance
//! matching game or by one of the baseline policies.
//!
//! Module map:
//! - [`scenario`]: configuration schema, validation, labeled RNG streams
//! - [`channel`]: link-budget formulas for all six link kinds
//! - [`energy`]: UAV/satellite energy models and the enforced energy ledger
//! - [`topology`]: mobility, orbits, and per-slot graph construction
//! - [`pathing`]: deterministic Dijkstra and transfer-time estimates
//! - [`failure`]: Poisson failure sampling and rollback bookkeeping
//! - [`recovery`]: preference construction and the matching game
//! - [`engine`]: the slot-loop simulator and delay attribution
//! - [`audit`]: independent replay of event logs against the constraints
//! - [`oracle`]: exact enumeration for tiny instances and LP export
//! - [`report`]: run reports and per-slot series

pub mod audit;
pub mod channel;
pub mod energy;
pub mod engine;
pub mod failure;
pub mod oracle;
pub mod pathing;
pub mod recovery;
pub mod report;
pub mod scenario;
pub mod topology;

pub use audit::{audit_event_log, AuditConfig};
pub use channel::LinkBudget;
pub use energy::EnergyLedger;
pub use engine::{run_scenario, DelayBreakdown, RunOutput};
pub use failure::FailurePlan;
pub use oracle::{enumerate_optimal, export_ilp, TinyInstance};
pub use pathing::Path;
pub use recovery::{Matching, PreferenceWeights};
pub use report::RunReport;
pub use scenario::{seeded_stream, Policy, Scenario, SfcId, SCHEMA_VERSION};
pub use topology::{Layer, LinkKind, PhysId, SlotGraph};
