use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Address, Digest256};

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevertReason {
    #[error("out of gas")]
    OutOfGas,
    #[error("caller is not the contract admin")]
    Unauthorized,
    #[error("migration would lower the contract version")]
    VersionRegression,
    #[error("device already registered")]
    AlreadyRegistered,
    #[error("device not registered")]
    NotRegistered,
    #[error("device firmware is older than the contract version")]
    OutdatedVersion,
    #[error("offender is within its quota")]
    NoViolation,
    #[error("reporter and offender are the same device")]
    SelfReport,
    #[error("offender already penalized this epoch")]
    AlreadyFlagged,
    #[error("height is not a distribution epoch boundary")]
    NotEpochBoundary,
    #[error("distribution already ran at this height")]
    AlreadyDistributed,
    #[error("malformed call arguments")]
    BadArguments,
    #[error("unknown contract method")]
    UnknownMethod,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum TxStatus {
    Success,
    Reverted(RevertReason),
}

impl TxStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, TxStatus::Success)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Event {
    UpdateRequired { url: String, version: u32 },
    Registered { device: Address, firmware_version: u32 },
    FirmwareUpdated { device: Address, version: u32 },
    Migrated { version: u32, update_url: String, block_interval: u64 },
    PenaltyApplied { offender: Address, amount: u128, shortfall: u128, reporter_share: u128 },
    Reimbursed { to: Address, amount: u128 },
    Granted { to: Address, amount: u128, netted: u128 },
    PermissionChanged { target: Address, allow: bool },
    Transferred { to: Address, amount: u128 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Digest256,
    #[serde(flatten)]
    pub status: TxStatus,
    pub gas_used: u64,
    pub fee: u128,
    pub events: Vec<Event>,
}

impl Receipt {
    pub fn update_url(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            Event::UpdateRequired { url, .. } => Some(url.as_str()),
            _ => None,
        })
    }
}
