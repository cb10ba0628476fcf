use num_bigint::BigUint;
use thiserror::Error;

use crate::ledger::{hash, BlockHeader, ConsensusProof, Digest256};

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum PowError {
    #[error("difficulty must be at least 1")]
    DifficultyZero,
    #[error("no nonce below the iteration bound meets the target")]
    NoSolution,
}

/// `floor(2^256 / difficulty)`. Difficulty 1 gives 2^256, which admits every digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowTarget {
    /// `None` stands for 2^256.
    threshold: Option<[u8; 32]>,
}

impl PowTarget {
    pub fn is_met(&self, digest: &Digest256) -> bool {
        match &self.threshold {
            None => true,
            Some(t) => digest.0 < *t,
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        match &self.threshold {
            None => BigUint::from(1u8) << 256u32,
            Some(t) => BigUint::from_bytes_be(t),
        }
    }
}

pub fn pow_target(difficulty: u64) -> Result<PowTarget, PowError> {
    if difficulty == 0 {
        return Err(PowError::DifficultyZero);
    }
    if difficulty == 1 {
        return Ok(PowTarget { threshold: None });
    }
    let q = (BigUint::from(1u8) << 256u32) / BigUint::from(difficulty);
    let bytes = q.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    Ok(PowTarget {
        threshold: Some(out),
    })
}

/// Scans nonces `0..max_iterations` and returns the first whose sealed header
/// digest meets the target.
pub fn pow_mine(
    template: &BlockHeader,
    difficulty: u64,
    max_iterations: u64,
) -> Result<(u64, Digest256), PowError> {
    let target = pow_target(difficulty)?;
    let mut header = template.clone();
    header.consensus_proof = ConsensusProof::Pow(0);
    let mut bytes = crate::ledger::canonical_encode(&header);
    let nonce_at = bytes.len() - 8;
    for nonce in 0..max_iterations {
        bytes[nonce_at..].copy_from_slice(&nonce.to_be_bytes());
        let digest = hash(&bytes);
        if target.is_met(&digest) {
            return Ok((nonce, digest));
        }
    }
    Err(PowError::NoSolution)
}

pub fn pow_verify(header: &BlockHeader, difficulty: u64) -> bool {
    match pow_target(difficulty) {
        Ok(target) => target.is_met(&header.hash()),
        Err(_) => false,
    }
}
