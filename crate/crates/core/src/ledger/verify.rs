use thiserror::Error;

use super::sig::SignatureVerifier;
use super::types::{Account, Transaction};
use crate::contract::GasSchedule;

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum TxError {
    #[error("signature does not verify for the sender")]
    BadSignature,
    #[error("nonce {got} does not match expected {expected}")]
    BadNonce { expected: u64, got: u64 },
    #[error("balance cannot cover gas escrow and value")]
    InsufficientFunds,
    #[error("gas limit below the base transaction cost")]
    GasLimitTooLow,
}

/// Stateless admission checks for `tx` against the sender's current account.
/// Errors name the first failed check in the order signature, nonce, funds, gas.
pub fn verify_transaction(
    tx: &Transaction,
    account: &Account,
    schedule: &GasSchedule,
    keys: &dyn SignatureVerifier,
) -> Result<(), TxError> {
    if account.address != tx.sender || !keys.verify(&tx.sender, &tx.signing_bytes(), &tx.signature) {
        return Err(TxError::BadSignature);
    }
    if tx.nonce != account.nonce {
        return Err(TxError::BadNonce {
            expected: account.nonce,
            got: tx.nonce,
        });
    }
    match tx.max_cost() {
        Some(cost) if cost <= account.balance => {}
        _ => return Err(TxError::InsufficientFunds),
    }
    if tx.gas_limit < schedule.base_tx {
        return Err(TxError::GasLimitTooLow);
    }
    Ok(())
}
