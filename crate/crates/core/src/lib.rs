//! A deterministic simulator for a permissioned edge-computing blockchain.
//!
//! Edge servers mine or stake blocks, IoT customers submit data through a
//! gas-metered device contract that gates firmware versions, logs activity,
//! penalizes devices that exceed their transaction quota and reimburses
//! reporters at distribution epochs.

pub mod artifact;
pub mod client;
pub mod consensus;
pub mod contract;
pub mod ledger;
pub mod netsim;
pub mod scenarios;
