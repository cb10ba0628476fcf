//! Block-level state transitions: admission re-checks, execution, rewards and
//! stake aging.

use thiserror::Error;

use crate::ledger::{verify_transaction, Account, Address, Block, SignatureVerifier, Transaction, TxError};

use super::engine::{execute, ExecContext};
use super::gas::GasSchedule;
use super::receipt::Receipt;
use super::state::WorldState;

pub struct ExecEnv<'a> {
    pub schedule: &'a GasSchedule,
    pub block_reward: u128,
    pub keys: &'a dyn SignatureVerifier,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum TxRejection {
    #[error("sender is not on the allowlist")]
    NotAllowlisted,
    #[error(transparent)]
    Invalid(#[from] TxError),
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("transaction {index} in block {height} rejected: {rejection}")]
pub struct BlockExecError {
    pub height: u64,
    pub index: usize,
    pub rejection: TxRejection,
}

/// Allowlist and signature/nonce/funds checks followed by execution.
pub fn apply_tx(
    state: &mut WorldState,
    tx: &Transaction,
    env: &ExecEnv<'_>,
    ctx: &ExecContext,
) -> Result<Receipt, TxRejection> {
    if !state.permits(&tx.sender) {
        return Err(TxRejection::NotAllowlisted);
    }
    let fallback;
    let account = match state.account(&tx.sender) {
        Some(a) => a,
        None => {
            fallback = Account::new(tx.sender, 0);
            &fallback
        }
    };
    verify_transaction(tx, account, env.schedule, env.keys)?;
    Ok(execute(state, tx, env.schedule, ctx)?)
}

/// Credits the block reward and ages stakes. The producer's stake age resets.
pub fn finalize_block(state: &mut WorldState, producer: &Address, block_reward: u128) {
    state.account_mut(producer).balance += block_reward;
    for acct in state.accounts.values_mut() {
        if acct.stake > 0 {
            acct.stake_age = acct.stake_age.saturating_add(1);
        }
    }
    state.account_mut(producer).stake_age = 0;
}

/// Applies every transaction of `block` in order; any rejection invalidates the block.
pub fn apply_block(
    state: &mut WorldState,
    block: &Block,
    env: &ExecEnv<'_>,
) -> Result<Vec<Receipt>, BlockExecError> {
    let ctx = ExecContext {
        height: block.height(),
        producer: block.header.producer,
    };
    let mut receipts = Vec::with_capacity(block.transactions.len());
    for (index, tx) in block.transactions.iter().enumerate() {
        let receipt = apply_tx(state, tx, env, &ctx).map_err(|rejection| BlockExecError {
            height: ctx.height,
            index,
            rejection,
        })?;
        receipts.push(receipt);
    }
    finalize_block(state, &ctx.producer, env.block_reward);
    Ok(receipts)
}
