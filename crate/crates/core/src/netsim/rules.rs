//! Full block validation and execution shared by simulated nodes and replay.

use thiserror::Error;

use crate::consensus::{pos_select, ConsensusConfig, ConsensusMode, ConsensusRules};
use crate::contract::{
    apply_block, BlockExecError, ConservationError, ContractState, ExecEnv, GasSchedule, Receipt,
    WorldState,
};
use crate::ledger::{check_link, Address, Block, ChainError, Digest256, MockKeyring, SignatureVerifier};

use super::config::{ScenarioError, SimConfig};

/// A block together with the state it leads to.
#[derive(Clone, Debug)]
pub struct StoredBlock {
    pub block: Block,
    pub hash: Digest256,
    pub state: WorldState,
    pub receipts: Vec<Receipt>,
}

impl StoredBlock {
    pub fn height(&self) -> u64 {
        self.block.height()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum BlockError {
    #[error(transparent)]
    Link(#[from] ChainError),
    #[error("producer {producer} is not the selected validator {expected}")]
    NotSelected { expected: Address, producer: Address },
    #[error(transparent)]
    Exec(#[from] BlockExecError),
    #[error(transparent)]
    Conservation(#[from] ConservationError),
}

/// Everything needed to judge and execute blocks for one scenario.
#[derive(Clone, Debug)]
pub struct ChainRules {
    pub consensus: ConsensusConfig,
    pub schedule: GasSchedule,
    pub keyring: MockKeyring,
    pub seed: u64,
}

impl ChainRules {
    pub fn from_config(config: &SimConfig, seed: u64) -> Self {
        let mut keyring = MockKeyring::new();
        for n in &config.nodes {
            keyring.insert(&n.keypair());
        }
        ChainRules {
            consensus: config.consensus.clone(),
            schedule: config.gas_schedule.clone(),
            keyring,
            seed,
        }
    }

    pub fn proof_rules(&self) -> ConsensusRules<'_> {
        ConsensusRules {
            config: &self.consensus,
            keys: &self.keyring,
        }
    }

    pub fn env(&self) -> ExecEnv<'_> {
        ExecEnv {
            schedule: &self.schedule,
            block_reward: self.consensus.block_reward,
            keys: &self.keyring as &dyn SignatureVerifier,
        }
    }

    /// The validator entitled to produce on top of `parent`, in PoS mode.
    pub fn expected_producer(&self, parent: &StoredBlock) -> Option<Address> {
        match self.consensus.mode {
            ConsensusMode::Pow => None,
            ConsensusMode::Pos => {
                pos_select(&parent.state.stake_set(), self.seed, parent.height() + 1).ok()
            }
        }
    }

    /// Links, proofs, validator eligibility, execution and supply conservation.
    pub fn execute_block(&self, parent: &StoredBlock, block: Block) -> Result<StoredBlock, BlockError> {
        check_link(&parent.hash, parent.height(), &block, &self.proof_rules())?;
        if self.consensus.mode == ConsensusMode::Pos {
            let expected = self.expected_producer(parent).ok_or(ChainError::BadProof)?;
            if expected != block.header.producer {
                return Err(BlockError::NotSelected {
                    expected,
                    producer: block.header.producer,
                });
            }
        }
        let mut state = parent.state.clone();
        let receipts = apply_block(&mut state, &block, &self.env())?;
        state.check_conservation(block.height(), self.consensus.block_reward)?;
        Ok(StoredBlock {
            hash: block.hash(),
            block,
            state,
            receipts,
        })
    }
}

pub fn genesis_state(config: &SimConfig) -> Result<WorldState, ScenarioError> {
    let admin = config
        .admin_address()
        .ok_or_else(|| ScenarioError::Invalid("no admin node".into()))?;
    let contract = ContractState::new(
        admin,
        config.quota(),
        config.epoch(),
        config.consensus.target_block_interval,
    );
    let allocations = config
        .nodes
        .iter()
        .map(|n| (n.address(), n.balance, n.stake));
    Ok(WorldState::genesis(allocations, contract, config.allowlist()?))
}

pub fn genesis_block(config: &SimConfig) -> Result<StoredBlock, ScenarioError> {
    let block = Block::genesis();
    Ok(StoredBlock {
        hash: block.hash(),
        block,
        state: genesis_state(config)?,
        receipts: Vec::new(),
    })
}
