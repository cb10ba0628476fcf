use std::collections::BTreeSet;

use num_bigint::BigUint;
use thiserror::Error;

use crate::ledger::{hash, Address};

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum PosError {
    #[error("stake set has zero total weight")]
    EmptyStakeSet,
    #[error("address {0} appears twice in the stake set")]
    DuplicateStaker(Address),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Staker {
    pub address: Address,
    pub stake: u64,
    /// Blocks since the stake last changed.
    pub age: u64,
}

impl Staker {
    /// Selection weight `stake * (1 + age)`; zero-age stakes stay selectable.
    pub fn weight(&self) -> u128 {
        self.stake as u128 * (1 + self.age as u128)
    }
}

/// Ordered stakers with unique addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StakeSet {
    stakers: Vec<Staker>,
}

impl StakeSet {
    pub fn new(stakers: Vec<Staker>) -> Result<Self, PosError> {
        let mut seen = BTreeSet::new();
        for s in &stakers {
            if !seen.insert(s.address) {
                return Err(PosError::DuplicateStaker(s.address));
            }
        }
        Ok(StakeSet { stakers })
    }

    pub fn stakers(&self) -> &[Staker] {
        &self.stakers
    }

    pub fn total_weight(&self) -> BigUint {
        self.stakers.iter().map(|s| BigUint::from(s.weight())).sum()
    }
}

/// Picks the producer for `epoch`. The draw is `SHA-256(seed || epoch)` read
/// as a big-endian integer, reduced modulo the total weight, and the winner is
/// the first staker whose cumulative weight exceeds it.
pub fn pos_select(stakes: &StakeSet, seed: u64, epoch: u64) -> Result<Address, PosError> {
    let total = stakes.total_weight();
    if total == BigUint::ZERO {
        return Err(PosError::EmptyStakeSet);
    }
    let mut pre = [0u8; 16];
    pre[..8].copy_from_slice(&seed.to_be_bytes());
    pre[8..].copy_from_slice(&epoch.to_be_bytes());
    let draw = BigUint::from_bytes_be(&hash(&pre).0) % &total;
    let mut cumulative = BigUint::ZERO;
    for s in stakes.stakers() {
        cumulative += s.weight();
        if cumulative > draw {
            return Ok(s.address);
        }
    }
    unreachable!("draw is below the total weight")
}
