//! In-process client API: accounts, transaction submission, receipts and
//! read-only queries against the edge server a client is bound to.

use serde::Serialize;
use thiserror::Error;

use crate::contract::{ActivityEntry, DeviceRecord, QuotaStatus, Receipt};
use crate::ledger::{Address, Digest256, Keypair, MockScheme, Transaction, TxError, TxKind};
use crate::netsim::{DropReason, Sim};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("account seed must be non-empty")]
    EmptySeed,
    #[error("transaction dropped at admission: {0}")]
    Dropped(DropReason),
    #[error("no device registered at {0}")]
    UnknownAddress(Address),
    #[error("node {0} is not an edge server")]
    NotEdgeServer(String),
}

impl ClientError {
    /// The admission failure as a plain transaction error, when it is one.
    pub fn tx_error(&self) -> Option<TxError> {
        match self {
            ClientError::Dropped(DropReason::Invalid(e)) => Some(*e),
            _ => None,
        }
    }
}

/// Deterministic keypair and address for `seed` under the mock scheme.
pub fn create_account(seed: &[u8]) -> Result<(Keypair, Address), ClientError> {
    if seed.is_empty() {
        return Err(ClientError::EmptySeed);
    }
    let keys = Keypair::mock(seed);
    let address = keys.address();
    Ok((keys, address))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReceiptStatus {
    Confirmed { receipt: Receipt, height: u64 },
    Pending,
    Unknown,
}

impl ReceiptStatus {
    pub fn receipt(&self) -> Option<&Receipt> {
        match self {
            ReceiptStatus::Confirmed { receipt, .. } => Some(receipt),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    Balance(Address),
    Device(Address),
    Activity(Address),
    ContractMeta,
    /// Quota standing in the window ending at the node's best height.
    Quota(Address),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContractMeta {
    pub version: u32,
    pub update_url: String,
    pub block_interval: u64,
    pub initialized: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryValue {
    Balance(u128),
    Device(DeviceRecord),
    Activity(Vec<ActivityEntry>),
    ContractMeta(ContractMeta),
    Quota(QuotaStatus),
}

/// A client bound to one edge server, with a local nonce cache.
#[derive(Debug)]
pub struct ClientHandle {
    node: usize,
    keys: Keypair,
    nonce: u64,
}

impl ClientHandle {
    pub fn new(keys: Keypair, node: usize) -> Self {
        ClientHandle { node, keys, nonce: 0 }
    }

    /// Binds to the edge server called `node_name`.
    pub fn bind(sim: &Sim, keys: Keypair, node_name: &str) -> Result<Self, ClientError> {
        match sim.node_id(node_name) {
            Some(id) if sim.edge(id).is_some() => Ok(Self::new(keys, id)),
            _ => Err(ClientError::NotEdgeServer(node_name.into())),
        }
    }

    pub fn address(&self) -> Address {
        self.keys.address()
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn cached_nonce(&self) -> u64 {
        self.nonce
    }

    /// Signs and submits a transaction, filling the nonce from the cache. A
    /// `BadNonce` rejection repairs the cache from the node and retries once.
    pub fn submit(
        &mut self,
        sim: &mut Sim,
        kind: TxKind,
        payload: Vec<u8>,
        gas_limit: u64,
        gas_price: u64,
    ) -> Result<Digest256, ClientError> {
        let confirmed = sim.best_state(self.node).nonce(&self.address());
        self.nonce = self.nonce.max(confirmed);
        let mut tx = Transaction {
            sender: self.address(),
            nonce: self.nonce,
            kind,
            payload,
            gas_limit,
            gas_price,
            signature: Vec::new(),
        };
        for attempt in 0..2 {
            tx.signature = self.keys.sign(&MockScheme, &tx.signing_bytes());
            let hash = tx.hash();
            match sim.submit_tx(self.node, tx.clone()) {
                Ok(()) => {
                    self.nonce = tx.nonce + 1;
                    return Ok(hash);
                }
                Err(DropReason::Invalid(TxError::BadNonce { expected, .. })) if attempt == 0 => {
                    self.nonce = expected;
                    tx.nonce = expected;
                }
                Err(reason) => return Err(ClientError::Dropped(reason)),
            }
        }
        unreachable!("second attempt always returns")
    }

    pub fn get_receipt(&self, sim: &Sim, tx_hash: &Digest256) -> ReceiptStatus {
        sim.receipt_status(self.node, tx_hash)
    }

    pub fn query(&self, sim: &Sim, what: Query) -> Result<QueryValue, ClientError> {
        let state = sim.best_state(self.node);
        let contract = &state.contract;
        Ok(match what {
            Query::Balance(a) => QueryValue::Balance(state.balance(&a)),
            Query::Device(a) => QueryValue::Device(
                contract
                    .devices
                    .get(&a)
                    .cloned()
                    .ok_or(ClientError::UnknownAddress(a))?,
            ),
            Query::Activity(a) => QueryValue::Activity(contract.get_activity(&a)),
            Query::ContractMeta => QueryValue::ContractMeta(ContractMeta {
                version: contract.current_version,
                update_url: contract.update_url.clone(),
                block_interval: contract.block_interval,
                initialized: contract.initialized,
            }),
            Query::Quota(a) => QueryValue::Quota(
                contract
                    .check_quota(&a, sim.height(self.node))
                    .map_err(|_| ClientError::UnknownAddress(a))?,
            ),
        })
    }
}
