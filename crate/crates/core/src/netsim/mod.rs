//! Discrete-event simulation of customers, edge servers, an update
//! repository and the admin, driven by integer ticks.
//!
//! Events fire in `(tick, insertion order)` order, so a run is a pure function
//! of the scenario and the seed.

mod agents;
pub mod config;
mod metrics;
mod node;
mod rules;
mod sim;

pub use config::{
    AdminParams, AllowlistSpec, ContractConfig, CustomerParams, EdgeParams, LatencySpec, LinkSpec,
    MigrationStep, NodeKind, NodeSpec, PartitionSpec, PermissionStep, QuotaSpec, RunSpec,
    ScenarioError, SimConfig,
};
pub use metrics::{chain_rows, metric_rows, MetricRow, SimStats, CSV_HEADER};
pub use node::{BlockStore, DropReason, EdgeNode, Mempool};
pub use rules::{genesis_block, genesis_state, BlockError, ChainRules, StoredBlock};
pub use sim::{init_sim, Sim, SimError, Stop};
