//! Blocks, transactions, accounts and the hash-linked chain.

mod chain;
mod codec;
pub(crate) mod hexser;
mod sig;
mod types;
mod verify;

use sha2::{Digest, Sha256};

pub use chain::{check_link, validate_chain, AnyProof, Chain, ChainError, InvalidBlock, ProofCheck};
pub use codec::{canonical_encode, CanonicalEncode};
pub use sig::{Keypair, MockKeyring, MockScheme, SignatureScheme, SignatureVerifier};
pub use types::{
    method, tx_root, Account, Address, Block, BlockHeader, ConsensusProof, Digest256, Transaction,
    TxKind,
};
pub use verify::{verify_transaction, TxError};

pub(crate) use codec::put_bytes;

pub fn hash(bytes: &[u8]) -> Digest256 {
    Digest256(Sha256::digest(bytes).into())
}

/// SHA-256 of the header's canonical encoding.
pub fn hash_block(header: &BlockHeader) -> Digest256 {
    hash(&canonical_encode(header))
}
