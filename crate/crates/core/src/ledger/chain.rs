//! The hash-linked chain and its structural validation.

use thiserror::Error;

use super::types::{Block, BlockHeader, Digest256};

/// Consensus-level acceptance of a sealed header, supplied by the consensus rules.
pub trait ProofCheck {
    fn check_proof(&self, header: &BlockHeader) -> bool;
}

/// Accepts every proof. Useful for structural checks only.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnyProof;

impl ProofCheck for AnyProof {
    fn check_proof(&self, _header: &BlockHeader) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("previous-hash link does not match the tip")]
    BrokenLink,
    #[error("block height does not follow the tip")]
    BadHeight,
    #[error("transaction root does not match the transactions")]
    BadTxRoot,
    #[error("consensus proof rejected")]
    BadProof,
    #[error("chain has no genesis block")]
    MissingGenesis,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("invalid block at height {height}: {error}")]
pub struct InvalidBlock {
    pub height: u64,
    pub error: ChainError,
}

fn check_genesis(block: &Block) -> Result<(), ChainError> {
    let h = &block.header;
    if h.height != 0 {
        return Err(ChainError::BadHeight);
    }
    if h.prev_hash != Digest256::ZERO {
        return Err(ChainError::BrokenLink);
    }
    if h.tx_root != block.computed_tx_root() || !block.transactions.is_empty() {
        return Err(ChainError::BadTxRoot);
    }
    if *h != BlockHeader::genesis() {
        return Err(ChainError::BadProof);
    }
    Ok(())
}

/// Checks that `block` may extend a tip with the given header digest and height.
pub fn check_link(
    tip_hash: &Digest256,
    tip_height: u64,
    block: &Block,
    rules: &dyn ProofCheck,
) -> Result<(), ChainError> {
    let h = &block.header;
    if h.prev_hash != *tip_hash {
        return Err(ChainError::BrokenLink);
    }
    if Some(h.height) != tip_height.checked_add(1) {
        return Err(ChainError::BadHeight);
    }
    if h.tx_root != block.computed_tx_root() {
        return Err(ChainError::BadTxRoot);
    }
    if !rules.check_proof(h) {
        return Err(ChainError::BadProof);
    }
    Ok(())
}

/// A validated sequence of blocks starting at genesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
    hashes: Vec<Digest256>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    pub fn new() -> Self {
        let genesis = Block::genesis();
        let hash = genesis.hash();
        Chain {
            blocks: vec![genesis],
            hashes: vec![hash],
        }
    }

    /// Rebuilds a chain from blocks, validating every link.
    pub fn from_blocks(blocks: Vec<Block>, rules: &dyn ProofCheck) -> Result<Self, InvalidBlock> {
        validate_chain(&blocks, rules)?;
        let hashes = blocks.iter().map(Block::hash).collect();
        Ok(Chain { blocks, hashes })
    }

    pub fn append(&mut self, block: Block, rules: &dyn ProofCheck) -> Result<(), ChainError> {
        check_link(self.tip_hash(), self.height(), &block, rules)?;
        self.hashes.push(block.hash());
        self.blocks.push(block);
        Ok(())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn tip_hash(&self) -> &Digest256 {
        self.hashes.last().expect("chain always holds genesis")
    }

    pub fn hash_at(&self, height: u64) -> Option<&Digest256> {
        self.hashes.get(height as usize)
    }

    pub fn height(&self) -> u64 {
        self.tip().height()
    }

    /// Number of blocks including genesis.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Replays the append checks from genesis and reports the first failure.
pub fn validate_chain(blocks: &[Block], rules: &dyn ProofCheck) -> Result<(), InvalidBlock> {
    let Some(genesis) = blocks.first() else {
        return Err(InvalidBlock {
            height: 0,
            error: ChainError::MissingGenesis,
        });
    };
    check_genesis(genesis).map_err(|error| InvalidBlock { height: 0, error })?;
    let mut tip_hash = genesis.hash();
    let mut tip_height = 0u64;
    for block in &blocks[1..] {
        check_link(&tip_hash, tip_height, block, rules).map_err(|error| InvalidBlock {
            height: block.height(),
            error,
        })?;
        tip_hash = block.hash();
        tip_height = block.height();
    }
    Ok(())
}
