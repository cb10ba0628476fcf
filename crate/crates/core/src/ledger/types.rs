use std::fmt;

use serde::{Deserialize, Serialize};

use super::codec;
use super::hexser;

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest256(pub [u8; 32]);

impl Digest256 {
    pub const ZERO: Digest256 = Digest256([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest256(out))
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256({})", self.to_hex())
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Account identifier: the first 20 bytes of SHA-256 of the account public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub fn from_public_key(public_key: &[u8]) -> Self {
        let digest = super::hash(public_key);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest.0[..20]);
        Address(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Address(out))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$ty>::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_serde!(Digest256);
hex_serde!(Address);

/// Contract method selectors carried by [`TxKind::ContractCall`].
pub mod method {
    pub const REGISTER: u8 = 1;
    pub const SUBMIT_DATA: u8 = 2;
    pub const APPLY_UPDATE: u8 = 3;
    pub const REPORT_MALICIOUS: u8 = 4;
    pub const DISTRIBUTE: u8 = 5;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TxKind {
    Transfer {
        to: Address,
        amount: u128,
    },
    ContractCall {
        method: u8,
        #[serde(with = "hexser")]
        args: Vec<u8>,
    },
    Migrate {
        #[serde(with = "hexser")]
        params: Vec<u8>,
    },
    PermissionUpdate {
        target: Address,
        allow: bool,
    },
}

impl TxKind {
    pub fn tag(&self) -> u8 {
        match self {
            TxKind::Transfer { .. } => 0,
            TxKind::ContractCall { .. } => 1,
            TxKind::Migrate { .. } => 2,
            TxKind::PermissionUpdate { .. } => 3,
        }
    }

    /// Amount moved out of the sender's balance on success, on top of gas.
    pub fn value(&self) -> u128 {
        match self {
            TxKind::Transfer { amount, .. } => *amount,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub sender: Address,
    pub nonce: u64,
    pub kind: TxKind,
    #[serde(with = "hexser")]
    pub payload: Vec<u8>,
    pub gas_limit: u64,
    pub gas_price: u64,
    #[serde(with = "hexser")]
    pub signature: Vec<u8>,
}

impl Transaction {
    /// Bytes covered by the sender's signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode_tx(self, false)
    }

    /// Digest of the sealed transaction, signature included.
    pub fn hash(&self) -> Digest256 {
        super::hash(&codec::encode_tx(self, true))
    }

    /// Worst-case debit: full gas escrow plus any transferred value.
    pub fn max_cost(&self) -> Option<u128> {
        (self.gas_limit as u128)
            .checked_mul(self.gas_price as u128)?
            .checked_add(self.kind.value())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConsensusProof {
    /// Proof-of-work nonce.
    Pow(u64),
    /// Producer signature over the header signing bytes.
    Pos(#[serde(with = "hexser")] Vec<u8>),
}

impl Default for ConsensusProof {
    fn default() -> Self {
        ConsensusProof::Pow(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest256,
    pub tx_root: Digest256,
    pub timestamp: u64,
    pub producer: Address,
    pub consensus_proof: ConsensusProof,
}

impl BlockHeader {
    pub fn genesis() -> Self {
        BlockHeader {
            height: 0,
            prev_hash: Digest256::ZERO,
            tx_root: tx_root(&[]),
            timestamp: 0,
            producer: Address::ZERO,
            consensus_proof: ConsensusProof::Pow(0),
        }
    }

    /// Header bytes without the consensus proof (what a PoS producer signs).
    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode_header(self, false)
    }

    pub fn hash(&self) -> Digest256 {
        super::hash_block(self)
    }
}

/// A sealed block. Serialized flat so the JSON form carries exactly the header
/// fields plus `transactions`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    #[serde(flatten)]
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn genesis() -> Self {
        Block {
            header: BlockHeader::genesis(),
            transactions: Vec::new(),
        }
    }

    pub fn hash(&self) -> Digest256 {
        self.header.hash()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn computed_tx_root(&self) -> Digest256 {
        tx_root(&self.transactions)
    }
}

/// Flat root: SHA-256 over the concatenated sealed transaction digests.
pub fn tx_root(txs: &[Transaction]) -> Digest256 {
    let mut buf = Vec::with_capacity(txs.len() * 32);
    for tx in txs {
        buf.extend_from_slice(&tx.hash().0);
    }
    super::hash(&buf)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Account {
    pub address: Address,
    pub balance: u128,
    pub nonce: u64,
    pub stake: u64,
    /// Blocks since the stake last changed or was used to produce a block.
    pub stake_age: u64,
}

impl Account {
    pub fn new(address: Address, balance: u128) -> Self {
        Account {
            address,
            balance,
            nonce: 0,
            stake: 0,
            stake_age: 0,
        }
    }

    pub fn set_stake(&mut self, stake: u64) {
        if stake != self.stake {
            self.stake = stake;
            self.stake_age = 0;
        }
    }
}
