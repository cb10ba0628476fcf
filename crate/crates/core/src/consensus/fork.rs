use std::cmp::Ordering;

use thiserror::Error;

use crate::ledger::{Chain, Digest256};

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum ForkError {
    #[error("no candidate chains")]
    NoCandidates,
}

/// Anything that can be ranked by fork choice.
pub trait ChainTip {
    fn tip_height(&self) -> u64;
    fn tip_digest(&self) -> Digest256;
}

impl ChainTip for Chain {
    fn tip_height(&self) -> u64 {
        self.height()
    }

    fn tip_digest(&self) -> Digest256 {
        *self.tip_hash()
    }
}

impl ChainTip for (u64, Digest256) {
    fn tip_height(&self) -> u64 {
        self.0
    }

    fn tip_digest(&self) -> Digest256 {
        self.1
    }
}

/// `Greater` means `a` is preferred: longer wins, then the smaller tip digest.
pub fn compare_tips<A: ChainTip + ?Sized, B: ChainTip + ?Sized>(a: &A, b: &B) -> Ordering {
    a.tip_height()
        .cmp(&b.tip_height())
        .then_with(|| b.tip_digest().cmp(&a.tip_digest()))
}

pub fn fork_choice<C: ChainTip>(candidates: &[C]) -> Result<&C, ForkError> {
    candidates
        .iter()
        .reduce(|best, c| if compare_tips(c, best) == Ordering::Greater { c } else { best })
        .ok_or(ForkError::NoCandidates)
}
