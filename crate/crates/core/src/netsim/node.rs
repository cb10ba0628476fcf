use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::contract::WorldState;
use crate::ledger::{method, verify_transaction, Account, Address, Digest256, Transaction, TxError, TxKind};

use super::rules::{ChainRules, StoredBlock};

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum DropReason {
    #[error("sender not on the allowlist")]
    NotAllowlisted,
    #[error("duplicate (sender, nonce)")]
    Duplicate,
    #[error(transparent)]
    Invalid(#[from] TxError),
}

impl DropReason {
    pub fn label(&self) -> &'static str {
        match self {
            DropReason::NotAllowlisted => "NotAllowlisted",
            DropReason::Duplicate => "Duplicate",
            DropReason::Invalid(TxError::BadSignature) => "BadSignature",
            DropReason::Invalid(TxError::BadNonce { .. }) => "BadNonce",
            DropReason::Invalid(TxError::InsufficientFunds) => "InsufficientFunds",
            DropReason::Invalid(TxError::GasLimitTooLow) => "GasLimitTooLow",
        }
    }
}

/// Admitted, unsealed transactions in admission order.
#[derive(Clone, Debug, Default)]
pub struct Mempool {
    txs: Vec<(Digest256, Transaction)>,
    keys: HashSet<(Address, u64)>,
}

impl Mempool {
    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn contains(&self, hash: &Digest256) -> bool {
        self.txs.iter().any(|(h, _)| h == hash)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.txs.iter().map(|(_, tx)| tx)
    }

    /// Count and worst-case cost of pending transactions from `sender`.
    fn pending_from(&self, sender: &Address) -> (u64, u128) {
        self.txs
            .iter()
            .filter(|(_, tx)| tx.sender == *sender)
            .fold((0, 0), |(n, c), (_, tx)| {
                (n + 1, c.saturating_add(tx.max_cost().unwrap_or(u128::MAX)))
            })
    }

    fn push(&mut self, tx: Transaction) {
        self.keys.insert((tx.sender, tx.nonce));
        self.txs.push((tx.hash(), tx));
    }

    fn retain(&mut self, mut keep: impl FnMut(&Digest256, &Transaction) -> bool) {
        let keys = &mut self.keys;
        self.txs.retain(|(h, tx)| {
            let k = keep(h, tx);
            if !k {
                keys.remove(&(tx.sender, tx.nonce));
            }
            k
        });
    }

    /// Admission against the node's best state, accounting for transactions
    /// from the same sender that are already pending.
    pub fn admit(&mut self, tx: Transaction, state: &WorldState, rules: &ChainRules) -> Result<(), DropReason> {
        if !state.permits(&tx.sender) {
            return Err(DropReason::NotAllowlisted);
        }
        if self.keys.contains(&(tx.sender, tx.nonce)) {
            return Err(DropReason::Duplicate);
        }
        let base = state
            .account(&tx.sender)
            .cloned()
            .unwrap_or_else(|| Account::new(tx.sender, 0));
        let (count, cost) = self.pending_from(&tx.sender);
        let view = Account {
            nonce: base.nonce + count,
            balance: base.balance.saturating_sub(cost),
            ..base
        };
        verify_transaction(&tx, &view, &rules.schedule, &rules.keyring)?;
        self.push(tx);
        Ok(())
    }
}

/// One edge server's view of the block tree.
#[derive(Debug)]
pub struct EdgeNode {
    pub id: usize,
    pub address: Address,
    pub mining: bool,
    pub offset: u64,
    known: HashSet<Digest256>,
    best: Digest256,
    canonical: Vec<Digest256>,
    tx_index: HashMap<Digest256, (u64, usize)>,
    pub mempool: Mempool,
    orphans: Vec<Digest256>,
    pub sync_outstanding: BTreeSet<usize>,
}

pub type BlockStore = HashMap<Digest256, Arc<StoredBlock>>;

impl EdgeNode {
    pub fn new(id: usize, address: Address, mining: bool, offset: u64, genesis: Digest256) -> Self {
        EdgeNode {
            id,
            address,
            mining,
            offset,
            known: HashSet::from([genesis]),
            best: genesis,
            canonical: vec![genesis],
            tx_index: HashMap::new(),
            mempool: Mempool::default(),
            orphans: Vec::new(),
            sync_outstanding: BTreeSet::new(),
        }
    }

    pub fn best(&self) -> Digest256 {
        self.best
    }

    pub fn height(&self) -> u64 {
        (self.canonical.len() - 1) as u64
    }

    pub fn canonical(&self) -> &[Digest256] {
        &self.canonical
    }

    pub fn knows(&self, hash: &Digest256) -> bool {
        self.known.contains(hash)
    }

    /// Where a transaction sits on this node's best chain.
    pub fn locate_tx(&self, tx_hash: &Digest256) -> Option<(u64, usize)> {
        self.tx_index.get(tx_hash).copied()
    }

    pub fn add_orphan(&mut self, hash: Digest256) {
        if !self.orphans.contains(&hash) {
            self.orphans.push(hash);
        }
    }

    /// Marks `hash` known and connects any orphans that now have a known
    /// parent. Returns the newly connected hashes in connection order.
    pub fn connect(&mut self, hash: Digest256, store: &BlockStore) -> Vec<Digest256> {
        let mut connected = vec![hash];
        self.known.insert(hash);
        loop {
            let ready = self.orphans.iter().position(|h| {
                store
                    .get(h)
                    .is_some_and(|sb| self.known.contains(&sb.block.header.prev_hash))
            });
            match ready {
                Some(i) => {
                    let h = self.orphans.remove(i);
                    if self.known.insert(h) {
                        connected.push(h);
                    }
                }
                None => break,
            }
        }
        connected
    }

    /// Switches the best tip, rewiring the canonical index and the mempool.
    pub fn set_best(&mut self, new_tip: Digest256, store: &BlockStore) {
        if new_tip == self.best {
            return;
        }
        let mut branch = Vec::new();
        let mut cursor = new_tip;
        loop {
            let sb = &store[&cursor];
            let h = sb.height() as usize;
            if h < self.canonical.len() && self.canonical[h] == cursor {
                break;
            }
            branch.push(cursor);
            cursor = sb.block.header.prev_hash;
        }
        branch.reverse();
        let fork_height = store[&cursor].height() as usize;

        let mut abandoned = Vec::new();
        for h in self.canonical.drain(fork_height + 1..) {
            for tx in &store[&h].block.transactions {
                let th = tx.hash();
                self.tx_index.remove(&th);
                abandoned.push((th, tx.clone()));
            }
        }
        let mut included = HashSet::new();
        for h in &branch {
            let sb = &store[h];
            for (i, tx) in sb.block.transactions.iter().enumerate() {
                let th = tx.hash();
                self.tx_index.insert(th, (sb.height(), i));
                included.insert(th);
            }
            self.canonical.push(*h);
        }
        self.best = new_tip;

        let state = &store[&new_tip].state;
        for (th, tx) in abandoned {
            // Distribution calls are tied to the block that carried them.
            let distribute = matches!(
                tx.kind,
                TxKind::ContractCall { method: m, .. } if m == method::DISTRIBUTE
            );
            if !distribute
                && !included.contains(&th)
                && !self.mempool.keys.contains(&(tx.sender, tx.nonce))
            {
                self.mempool.push(tx);
            }
        }
        self.mempool
            .retain(|h, tx| !included.contains(h) && tx.nonce >= state.nonce(&tx.sender));
    }

    pub fn remove_from_mempool(&mut self, drop: &HashSet<Digest256>) {
        self.mempool.retain(|h, _| !drop.contains(h));
    }
}
