use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{StakeSet, Staker};
use crate::ledger::{hash, Account, Address, Digest256};

use super::RevertReason;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotaConfig {
    /// Sliding window length W in blocks.
    pub window_blocks: u64,
    /// Largest share Q (percent) of window transactions one device may send.
    pub max_share_percent: u64,
    /// Below this many active senders in the window nobody is over quota.
    pub min_active_senders: u64,
    /// Currency charged per transaction above the allowance.
    pub penalty_rate: u128,
    /// Share R (percent) of a collected penalty owed to the reporter.
    pub reporter_share_percent: u64,
}

impl QuotaConfig {
    /// Defaults with the penalty rate pegged to two base transactions at unit gas price.
    pub fn with_base_tx(base_tx: u64) -> Self {
        QuotaConfig {
            window_blocks: 10,
            max_share_percent: 40,
            min_active_senders: 2,
            penalty_rate: 2 * base_tx as u128,
            reporter_share_percent: 50,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window_blocks == 0 {
            return Err("quota.window_blocks must be at least 1".into());
        }
        if self.max_share_percent == 0 || self.max_share_percent > 100 {
            return Err("quota.max_share_percent must be in 1..=100".into());
        }
        if self.reporter_share_percent > 100 {
            return Err("quota.reporter_share_percent must be in 0..=100".into());
        }
        Ok(())
    }
}

impl Default for QuotaConfig {
    fn default() -> Self {
        Self::with_base_tx(21)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochConfig {
    /// Distribution happens at heights that are positive multiples of this.
    pub length: u64,
    /// Currency minted into the pool at each distribution.
    pub mint: u128,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            length: 20,
            mint: 200,
        }
    }
}

impl EpochConfig {
    pub fn is_boundary(&self, height: u64) -> bool {
        height > 0 && self.length > 0 && height.is_multiple_of(self.length)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Register,
    SubmitData,
    ApplyUpdate,
    Report,
    Distribute,
    Migrate,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEntry {
    pub height: u64,
    pub device: Address,
    pub action: Action,
    pub gas_used: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub address: Address,
    pub firmware_version: u32,
    pub registered_at: u64,
    /// Successful submissions in the quota window ending at the last submission.
    pub window_tx_count: u64,
    /// Gas units across this device's logged activity.
    pub total_gas_spent: u128,
    pub flagged: bool,
    /// Penalty that could not be collected yet; netted against future grants.
    pub penalty_debt: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub admin: Address,
    pub current_version: u32,
    pub update_url: String,
    pub block_interval: u64,
    pub initialized: bool,
    pub devices: BTreeMap<Address, DeviceRecord>,
    pub activity_log: Vec<ActivityEntry>,
    pub quota: QuotaConfig,
    pub epoch: EpochConfig,
    pub pending_reimbursements: BTreeMap<Address, u128>,
    pub penalty_pool: u128,
    pub epochs_completed: u64,
    pub last_distribution: Option<u64>,
}

impl ContractState {
    /// Deployed but not yet migrated. `block_interval` is the pre-migration
    /// production interval.
    pub fn new(admin: Address, quota: QuotaConfig, epoch: EpochConfig, block_interval: u64) -> Self {
        ContractState {
            admin,
            current_version: 0,
            update_url: String::new(),
            block_interval,
            initialized: false,
            devices: BTreeMap::new(),
            activity_log: Vec::new(),
            quota,
            epoch,
            pending_reimbursements: BTreeMap::new(),
            penalty_pool: 0,
            epochs_completed: 0,
            last_distribution: None,
        }
    }

    pub fn digest(&self) -> Digest256 {
        hash(&serde_json::to_vec(self).expect("contract state serializes"))
    }

    pub fn pending_total(&self) -> u128 {
        self.pending_reimbursements.values().sum()
    }

    /// All log entries for `device`, in log order.
    pub fn get_activity(&self, device: &Address) -> Vec<ActivityEntry> {
        self.activity_log
            .iter()
            .filter(|e| e.device == *device)
            .cloned()
            .collect()
    }

    /// Successful submissions per device over heights `(end - W, end]`.
    pub fn window_counts(&self, end: u64) -> BTreeMap<Address, u64> {
        let start = end.saturating_sub(self.quota.window_blocks);
        let mut counts = BTreeMap::new();
        for e in self.activity_log.iter().rev() {
            if e.height <= start {
                break;
            }
            if e.height <= end && e.action == Action::SubmitData {
                *counts.entry(e.device).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn check_quota(&self, device: &Address, end: u64) -> Result<QuotaStatus, RevertReason> {
        if !self.devices.contains_key(device) {
            return Err(RevertReason::NotRegistered);
        }
        let counts = self.window_counts(end);
        if (counts.len() as u64) < self.quota.min_active_senders {
            return Ok(QuotaStatus::Within);
        }
        let total: u64 = counts.values().sum();
        let allowed = (self.quota.max_share_percent * total).div_ceil(100);
        let own = counts.get(device).copied().unwrap_or(0);
        if own > allowed {
            Ok(QuotaStatus::Exceeded {
                excess_count: own - allowed,
            })
        } else {
            Ok(QuotaStatus::Within)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuotaStatus {
    Within,
    Exceeded { excess_count: u64 },
}

/// Admission policy for transaction senders. The admin is always allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allowlist {
    /// When set, every address not in `denied` is allowed.
    pub open: bool,
    pub allowed: BTreeSet<Address>,
    pub denied: BTreeSet<Address>,
}

impl Allowlist {
    pub fn open() -> Self {
        Allowlist {
            open: true,
            ..Default::default()
        }
    }

    pub fn only(addresses: impl IntoIterator<Item = Address>) -> Self {
        Allowlist {
            open: false,
            allowed: addresses.into_iter().collect(),
            denied: BTreeSet::new(),
        }
    }

    pub fn permits(&self, address: &Address) -> bool {
        if self.open {
            !self.denied.contains(address)
        } else {
            self.allowed.contains(address)
        }
    }

    pub fn set(&mut self, target: Address, allow: bool) {
        if allow {
            self.denied.remove(&target);
            self.allowed.insert(target);
        } else {
            self.allowed.remove(&target);
            self.denied.insert(target);
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("conservation violated at height {height}: expected {expected}, found {actual}")]
pub struct ConservationError {
    pub height: u64,
    pub expected: u128,
    pub actual: u128,
}

/// Accounts, contract storage and the allowlist.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub accounts: BTreeMap<Address, Account>,
    pub contract: ContractState,
    pub allowlist: Allowlist,
    pub genesis_supply: u128,
}

impl WorldState {
    pub fn genesis(
        allocations: impl IntoIterator<Item = (Address, u128, u64)>,
        contract: ContractState,
        allowlist: Allowlist,
    ) -> Self {
        let mut accounts = BTreeMap::new();
        let mut supply = 0u128;
        for (address, balance, stake) in allocations {
            let mut acct = Account::new(address, balance);
            acct.stake = stake;
            supply += balance;
            accounts.insert(address, acct);
        }
        WorldState {
            accounts,
            contract,
            allowlist,
            genesis_supply: supply,
        }
    }

    pub fn account(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub fn balance(&self, address: &Address) -> u128 {
        self.accounts.get(address).map_or(0, |a| a.balance)
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.nonce)
    }

    pub(crate) fn account_mut(&mut self, address: &Address) -> &mut Account {
        self.accounts
            .entry(*address)
            .or_insert_with(|| Account::new(*address, 0))
    }

    pub fn permits(&self, address: &Address) -> bool {
        *address == self.contract.admin || self.allowlist.permits(address)
    }

    /// Staked accounts in address order.
    pub fn stake_set(&self) -> StakeSet {
        StakeSet::new(
            self.accounts
                .values()
                .filter(|a| a.stake > 0)
                .map(|a| Staker {
                    address: a.address,
                    stake: a.stake,
                    age: a.stake_age,
                })
                .collect(),
        )
        .expect("account addresses are unique")
    }

    pub fn digest(&self) -> Digest256 {
        hash(&serde_json::to_vec(self).expect("world state serializes"))
    }

    pub fn total_balances(&self) -> u128 {
        self.accounts.values().map(|a| a.balance).sum()
    }

    /// Balances plus pool plus pending reimbursements.
    pub fn circulating(&self) -> u128 {
        self.total_balances() + self.contract.penalty_pool + self.contract.pending_total()
    }

    pub fn expected_supply(&self, height: u64, block_reward: u128) -> u128 {
        self.genesis_supply
            + block_reward * height as u128
            + self.contract.epoch.mint * self.contract.epochs_completed as u128
    }

    pub fn check_conservation(&self, height: u64, block_reward: u128) -> Result<(), ConservationError> {
        let expected = self.expected_supply(height, block_reward);
        let actual = self.circulating();
        if expected == actual {
            Ok(())
        } else {
            Err(ConservationError {
                height,
                expected,
                actual,
            })
        }
    }
}
