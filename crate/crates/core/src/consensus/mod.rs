//! Block-production legitimacy: proof-of-work, stake-weighted validator
//! selection, quorum finality and fork choice.

mod finality;
mod fork;
mod pos;
mod pow;

use serde::{Deserialize, Serialize};

use crate::ledger::{BlockHeader, ConsensusProof, ProofCheck, SignatureVerifier};

pub use finality::{finality_check, Finality, FinalityError};
pub use fork::{compare_tips, fork_choice, ChainTip, ForkError};
pub use pos::{pos_select, PosError, StakeSet, Staker};
pub use pow::{pow_mine, pow_target, pow_verify, PowError, PowTarget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusMode {
    Pow,
    Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    pub mode: ConsensusMode,
    #[serde(default = "default_difficulty")]
    pub difficulty: u64,
    #[serde(default = "default_block_reward")]
    pub block_reward: u128,
    #[serde(default = "default_interval")]
    pub target_block_interval: u64,
}

fn default_difficulty() -> u64 {
    16
}

fn default_block_reward() -> u128 {
    50
}

fn default_interval() -> u64 {
    10
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            mode: ConsensusMode::Pow,
            difficulty: default_difficulty(),
            block_reward: default_block_reward(),
            target_block_interval: default_interval(),
        }
    }
}

/// Proof checking for the configured mode. PoS headers must carry a producer
/// signature over the header signing bytes; validator eligibility is checked
/// against stake state by whoever holds it.
pub struct ConsensusRules<'a> {
    pub config: &'a ConsensusConfig,
    pub keys: &'a dyn SignatureVerifier,
}

impl ProofCheck for ConsensusRules<'_> {
    fn check_proof(&self, header: &BlockHeader) -> bool {
        match (self.config.mode, &header.consensus_proof) {
            (ConsensusMode::Pow, ConsensusProof::Pow(_)) => pow_verify(header, self.config.difficulty),
            (ConsensusMode::Pos, ConsensusProof::Pos(sig)) => {
                self.keys.verify(&header.producer, &header.signing_bytes(), sig)
            }
            _ => false,
        }
    }
}
