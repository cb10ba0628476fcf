//! Gas-metered transaction execution and the contract's operations.
//!
//! Every operation charges its gas before touching state and validates before
//! writing, so a revert at any point leaves contract storage untouched. The one
//! deliberate write on a reverted call is the `Rejected` activity entry logged
//! when an outdated device submits data.

use crate::ledger::{method, Address, Transaction, TxError, TxKind};

use super::args::{decode_register, decode_report, MigrateParams};
use super::gas::{GasMeter, GasSchedule};
use super::receipt::{Event, Receipt, RevertReason, TxStatus};
use super::state::{Action, ActivityEntry, ContractState, DeviceRecord, QuotaStatus, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecContext {
    /// Height of the block being built or replayed.
    pub height: u64,
    pub producer: Address,
}

struct Outcome {
    status: Result<(), RevertReason>,
    events: Vec<Event>,
    activity: Option<Action>,
}

impl Outcome {
    fn ok(events: Vec<Event>, activity: Action) -> Self {
        Outcome {
            status: Ok(()),
            events,
            activity: Some(activity),
        }
    }

    fn plain(events: Vec<Event>) -> Self {
        Outcome {
            status: Ok(()),
            events,
            activity: None,
        }
    }

    fn revert(reason: RevertReason) -> Self {
        Outcome {
            status: Err(reason),
            events: Vec::new(),
            activity: None,
        }
    }
}

/// Runs one transaction. The caller is expected to have run admission checks;
/// only the nonce and escrow preconditions are re-checked here.
///
/// The sender's `gas_limit * gas_price` escrow is taken up front. On completion
/// (success or ordinary revert) unused gas is refunded and the producer is paid
/// for gas used. Running out of gas forfeits the whole escrow to the producer.
/// The sender nonce advances in every case.
pub fn execute(
    state: &mut WorldState,
    tx: &Transaction,
    schedule: &GasSchedule,
    ctx: &ExecContext,
) -> Result<Receipt, TxError> {
    let escrow = tx.gas_limit as u128 * tx.gas_price as u128;
    {
        let sender = state
            .accounts
            .get_mut(&tx.sender)
            .ok_or(TxError::InsufficientFunds)?;
        if sender.nonce != tx.nonce {
            return Err(TxError::BadNonce {
                expected: sender.nonce,
                got: tx.nonce,
            });
        }
        if tx.max_cost().is_none_or(|c| c > sender.balance) {
            return Err(TxError::InsufficientFunds);
        }
        sender.balance -= escrow;
    }

    let mut meter = GasMeter::new(tx.gas_limit);
    let outcome = match meter.charge(schedule.intrinsic(tx.payload.len())) {
        Ok(()) => dispatch(state, tx, schedule, ctx, &mut meter),
        Err(reason) => Outcome::revert(reason),
    };

    let (gas_used, fee) = if outcome.status == Err(RevertReason::OutOfGas) {
        (tx.gas_limit, escrow)
    } else {
        let fee = meter.used() as u128 * tx.gas_price as u128;
        state.account_mut(&tx.sender).balance += escrow - fee;
        (meter.used(), fee)
    };
    state.account_mut(&ctx.producer).balance += fee;
    state.account_mut(&tx.sender).nonce += 1;

    let (status, events) = match outcome.status {
        Ok(()) => (TxStatus::Success, outcome.events),
        Err(RevertReason::OutOfGas) => (TxStatus::Reverted(RevertReason::OutOfGas), Vec::new()),
        Err(reason) => (TxStatus::Reverted(reason), outcome.events),
    };
    if let Some(action) = outcome.activity {
        state
            .contract
            .log_activity(ctx.height, tx.sender, action, gas_used);
    }
    Ok(Receipt {
        tx_hash: tx.hash(),
        status,
        gas_used,
        fee,
        events,
    })
}

fn dispatch(
    state: &mut WorldState,
    tx: &Transaction,
    schedule: &GasSchedule,
    ctx: &ExecContext,
    meter: &mut GasMeter,
) -> Outcome {
    match run_op(state, tx, schedule, ctx, meter) {
        Ok(outcome) => outcome,
        Err(RevertReason::OutdatedVersion) => Outcome {
            status: Err(RevertReason::OutdatedVersion),
            events: vec![Event::UpdateRequired {
                url: state.contract.update_url.clone(),
                version: state.contract.current_version,
            }],
            activity: Some(Action::Rejected),
        },
        Err(reason) => Outcome::revert(reason),
    }
}

fn run_op(
    state: &mut WorldState,
    tx: &Transaction,
    schedule: &GasSchedule,
    ctx: &ExecContext,
    meter: &mut GasMeter,
) -> Result<Outcome, RevertReason> {
    let caller = tx.sender;
    match &tx.kind {
        TxKind::Transfer { to, amount } => {
            state.account_mut(&caller).balance -= amount;
            state.account_mut(to).balance += amount;
            Ok(Outcome::plain(vec![Event::Transferred {
                to: *to,
                amount: *amount,
            }]))
        }
        TxKind::PermissionUpdate { target, allow } => {
            meter.charge(schedule.permission_update)?;
            state.update_permission(&caller, *target, *allow)?;
            Ok(Outcome::plain(vec![Event::PermissionChanged {
                target: *target,
                allow: *allow,
            }]))
        }
        TxKind::Migrate { params } => {
            meter.charge(schedule.migrate)?;
            if caller != state.contract.admin {
                return Err(RevertReason::Unauthorized);
            }
            let params = MigrateParams::decode(params).ok_or(RevertReason::BadArguments)?;
            if !state.contract.initialized {
                meter.charge(schedule.init_surcharge)?;
            }
            let events = state.contract.migrate(&caller, &params)?;
            Ok(Outcome::ok(events, Action::Migrate))
        }
        TxKind::ContractCall { method, args } => match *method {
            method::REGISTER => {
                meter.charge(schedule.register)?;
                let version = decode_register(args).ok_or(RevertReason::BadArguments)?;
                let events = state.contract.register_device(&caller, version, ctx.height)?;
                Ok(Outcome::ok(events, Action::Register))
            }
            method::SUBMIT_DATA => {
                meter.charge(schedule.submit_data)?;
                state.contract.submit_data(&caller)?;
                Ok(Outcome::ok(Vec::new(), Action::SubmitData))
            }
            method::APPLY_UPDATE => {
                let events = state.contract.apply_update(&caller)?;
                Ok(Outcome::ok(events, Action::ApplyUpdate))
            }
            method::REPORT_MALICIOUS => {
                meter.charge(schedule.report_malicious)?;
                let offender = decode_report(args).ok_or(RevertReason::BadArguments)?;
                let events = state.report_malicious(&caller, &offender, ctx.height)?;
                Ok(Outcome::ok(events, Action::Report))
            }
            method::DISTRIBUTE => {
                meter.charge(schedule.distribute)?;
                let events = state.distribute_resources(ctx.height)?;
                Ok(Outcome::ok(events, Action::Distribute))
            }
            _ => Err(RevertReason::UnknownMethod),
        },
    }
}

impl ContractState {
    /// Appends to the log and keeps the device counters in step with it.
    fn log_activity(&mut self, height: u64, device: Address, action: Action, gas_used: u64) {
        self.activity_log.push(ActivityEntry {
            height,
            device,
            action,
            gas_used,
        });
        let window = if action == Action::SubmitData {
            self.window_counts(height).get(&device).copied()
        } else {
            None
        };
        if let Some(record) = self.devices.get_mut(&device) {
            record.total_gas_spent += gas_used as u128;
            if let Some(count) = window {
                record.window_tx_count = count;
            }
        }
    }

    /// Admin-only parameter update. The first call initializes the contract.
    pub fn migrate(&mut self, caller: &Address, params: &MigrateParams) -> Result<Vec<Event>, RevertReason> {
        if *caller != self.admin {
            return Err(RevertReason::Unauthorized);
        }
        if self.initialized && params.version < self.current_version {
            return Err(RevertReason::VersionRegression);
        }
        self.initialized = true;
        self.current_version = params.version;
        self.update_url = params.update_url.clone();
        self.block_interval = params.block_interval;
        Ok(vec![Event::Migrated {
            version: params.version,
            update_url: params.update_url.clone(),
            block_interval: params.block_interval,
        }])
    }

    pub fn register_device(
        &mut self,
        caller: &Address,
        firmware_version: u32,
        height: u64,
    ) -> Result<Vec<Event>, RevertReason> {
        if self.devices.contains_key(caller) {
            return Err(RevertReason::AlreadyRegistered);
        }
        self.devices.insert(
            *caller,
            DeviceRecord {
                address: *caller,
                firmware_version,
                registered_at: height,
                window_tx_count: 0,
                total_gas_spent: 0,
                flagged: false,
                penalty_debt: 0,
            },
        );
        Ok(vec![Event::Registered {
            device: *caller,
            firmware_version,
        }])
    }

    /// Accepts data only from devices running the current firmware.
    pub fn submit_data(&self, caller: &Address) -> Result<(), RevertReason> {
        let record = self.devices.get(caller).ok_or(RevertReason::NotRegistered)?;
        if record.firmware_version < self.current_version {
            return Err(RevertReason::OutdatedVersion);
        }
        Ok(())
    }

    pub fn apply_update(&mut self, caller: &Address) -> Result<Vec<Event>, RevertReason> {
        let version = self.current_version;
        let record = self.devices.get_mut(caller).ok_or(RevertReason::NotRegistered)?;
        record.firmware_version = record.firmware_version.max(version);
        Ok(vec![Event::FirmwareUpdated {
            device: *caller,
            version: record.firmware_version,
        }])
    }
}

impl WorldState {
    pub fn update_permission(
        &mut self,
        caller: &Address,
        target: Address,
        allow: bool,
    ) -> Result<(), RevertReason> {
        if *caller != self.contract.admin {
            return Err(RevertReason::Unauthorized);
        }
        self.allowlist.set(target, allow);
        Ok(())
    }

    /// Penalizes `offender` if it is over quota in the window ending at `height`.
    /// The collected amount is capped by the offender's balance; the rest becomes
    /// debt. The reporter's share is owed, not paid, until the next distribution.
    pub fn report_malicious(
        &mut self,
        reporter: &Address,
        offender: &Address,
        height: u64,
    ) -> Result<Vec<Event>, RevertReason> {
        if reporter == offender {
            return Err(RevertReason::SelfReport);
        }
        let c = &self.contract;
        if !c.devices.contains_key(reporter) {
            return Err(RevertReason::NotRegistered);
        }
        let excess = match c.check_quota(offender, height)? {
            QuotaStatus::Within => return Err(RevertReason::NoViolation),
            QuotaStatus::Exceeded { excess_count } => excess_count,
        };
        if c.devices[offender].flagged {
            return Err(RevertReason::AlreadyFlagged);
        }
        let penalty = excess as u128 * c.quota.penalty_rate;
        let share_percent = c.quota.reporter_share_percent as u128;

        let acct = self.account_mut(offender);
        let collected = penalty.min(acct.balance);
        acct.balance -= collected;
        let shortfall = penalty - collected;
        let reporter_share = collected * share_percent / 100;

        let c = &mut self.contract;
        let record = c.devices.get_mut(offender).expect("checked above");
        record.flagged = true;
        record.penalty_debt += shortfall;
        c.penalty_pool += collected - reporter_share;
        *c.pending_reimbursements.entry(*reporter).or_insert(0) += reporter_share;
        Ok(vec![Event::PenaltyApplied {
            offender: *offender,
            amount: collected,
            shortfall,
            reporter_share,
        }])
    }

    /// Pays owed reimbursements, mints the epoch allowance into the pool and
    /// splits the pool evenly over unflagged devices. Integer dust stays in the
    /// pool and flags are cleared for the next epoch.
    pub fn distribute_resources(&mut self, height: u64) -> Result<Vec<Event>, RevertReason> {
        let c = &self.contract;
        if !c.epoch.is_boundary(height) {
            return Err(RevertReason::NotEpochBoundary);
        }
        if c.last_distribution == Some(height) {
            return Err(RevertReason::AlreadyDistributed);
        }
        let mut events = Vec::new();

        let pending = std::mem::take(&mut self.contract.pending_reimbursements);
        for (to, amount) in pending {
            if amount == 0 {
                continue;
            }
            self.account_mut(&to).balance += amount;
            events.push(Event::Reimbursed { to, amount });
        }

        let c = &mut self.contract;
        c.penalty_pool += c.epoch.mint;
        c.epochs_completed += 1;
        c.last_distribution = Some(height);

        let eligible: Vec<Address> = c
            .devices
            .values()
            .filter(|d| !d.flagged)
            .map(|d| d.address)
            .collect();
        if !eligible.is_empty() {
            let grant = c.penalty_pool / eligible.len() as u128;
            if grant > 0 {
                for to in eligible {
                    let record = self.contract.devices.get_mut(&to).expect("listed above");
                    let netted = grant.min(record.penalty_debt);
                    record.penalty_debt -= netted;
                    let paid = grant - netted;
                    self.contract.penalty_pool -= paid;
                    self.account_mut(&to).balance += paid;
                    events.push(Event::Granted {
                        to,
                        amount: paid,
                        netted,
                    });
                }
            }
        }
        for record in self.contract.devices.values_mut() {
            record.flagged = false;
        }
        Ok(events)
    }
}
