use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::client::{ClientHandle, ReceiptStatus};
use crate::consensus::{compare_tips, pow_mine, ConsensusMode};
use crate::contract::{apply_tx, finalize_block, ExecContext, WorldState};
use crate::ledger::{
    method, tx_root, Address, Block, BlockHeader, ConsensusProof, Digest256, Keypair, MockScheme,
    Transaction, TxKind,
};

use super::agents::{AdminAction, AdminAgent, CustomerAgent};
use super::config::{NodeKind, ScenarioError, SimConfig};
use super::metrics::{MetricRow, SimStats};
use super::node::{BlockStore, DropReason, EdgeNode};
use super::rules::{genesis_block, ChainRules, StoredBlock};

/// Upper bound on nonces tried per block before mining gives up.
const MAX_POW_ITERATIONS: u64 = 1 << 40;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    /// A block this simulator produced failed its own validation. Always a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    /// Process every event scheduled at or before this tick.
    Tick(u64),
    /// Stop as soon as some edge server's best chain reaches this height.
    Height(u64),
}

#[derive(Clone, Debug)]
enum EventKind {
    CustomerStep(usize),
    AdminStep(usize),
    ProduceBlock(usize),
    DeliverBlock { to: usize, from: usize, hash: Digest256 },
    DeliverTx { to: usize, tx: Box<Transaction> },
    BeginDownload { customer: usize, repo: usize, version: u32 },
    FinishDownload { customer: usize, version: u32 },
    SyncRequest { to: usize, from: usize },
    DeliverChain { to: usize, from: usize, hashes: Vec<Digest256> },
}

#[derive(Debug)]
struct Scheduled {
    fire_at: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.seq) == (other.fire_at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the earliest (fire_at, seq).
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// The whole simulated network.
pub struct Sim {
    config: SimConfig,
    rules: ChainRules,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    store: BlockStore,
    genesis: Digest256,
    names: Vec<String>,
    keys: Vec<Keypair>,
    by_address: BTreeMap<Address, usize>,
    edges: BTreeMap<usize, EdgeNode>,
    customers: BTreeMap<usize, CustomerAgent>,
    admin: Option<AdminAgent>,
    rows: Vec<MetricRow>,
    stats: SimStats,
}

/// Validates `config` and builds the network at tick 0 with genesis, the
/// admin's initial migration and every periodic event scheduled.
pub fn init_sim(config: SimConfig, seed: u64) -> Result<Sim, ScenarioError> {
    config.validate()?;
    let rules = ChainRules::from_config(&config, seed);
    let genesis = genesis_block(&config)?;
    let genesis_hash = genesis.hash;

    let names: Vec<String> = config.nodes.iter().map(|n| n.name.clone()).collect();
    let keys: Vec<Keypair> = config.nodes.iter().map(|n| n.keypair()).collect();
    let by_address = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.address(), i))
        .collect();

    let mut edges = BTreeMap::new();
    for i in config.edge_servers() {
        let params = config.nodes[i].edge.clone().unwrap_or_default();
        edges.insert(
            i,
            EdgeNode::new(i, keys[i].address(), params.mining, params.offset, genesis_hash),
        );
    }

    let mut sim = Sim {
        rules,
        now: 0,
        seq: 0,
        queue: BinaryHeap::new(),
        store: BlockStore::from([(genesis_hash, Arc::new(genesis))]),
        genesis: genesis_hash,
        names,
        keys,
        by_address,
        edges,
        customers: BTreeMap::new(),
        admin: None,
        rows: Vec::new(),
        stats: SimStats::default(),
        config,
    };

    let config = &sim.config;
    if let Some(a) = config.admin_index() {
        let params = config.nodes[a].admin.clone().unwrap_or_default();
        let node = config.bound_server(params.bind_to.as_deref())?;
        let mut actions = vec![(0, AdminAction::Migrate(config.initial_migration()))];
        for m in &params.migrations {
            actions.push((
                m.at_tick,
                AdminAction::Migrate(crate::contract::MigrateParams {
                    version: m.version,
                    update_url: m.update_url.clone(),
                    block_interval: m.block_interval.unwrap_or(config.contract.block_interval),
                }),
            ));
        }
        for p in &params.permissions {
            actions.push((
                p.at_tick,
                AdminAction::Permission {
                    target: config.resolve_address(&p.target)?,
                    allow: p.allow,
                },
            ));
        }
        actions.sort_by_key(|(t, _)| *t);
        sim.admin = Some(AdminAgent {
            handle: ClientHandle::new(sim.keys[a].clone(), node),
            gas_limit: params.gas_limit,
            gas_price: params.gas_price,
            actions,
        });
    }

    let repository = config.repository_index();
    let mut customers = BTreeMap::new();
    for (i, n) in config.nodes.iter().enumerate() {
        if n.kind != NodeKind::Customer {
            continue;
        }
        let params = n.customer.clone().unwrap_or_default();
        let node = config.bound_server(params.bind_to.as_deref())?;
        let offender = params
            .report_against
            .as_deref()
            .map(|t| config.resolve_address(t))
            .transpose()?;
        let firmware = params.firmware_version.unwrap_or(config.contract.version);
        let handle = ClientHandle::new(sim.keys[i].clone(), node);
        customers.insert(
            i,
            CustomerAgent::new(i, handle, params, firmware, offender, repository),
        );
    }
    sim.customers = customers;

    let admin_times: Vec<u64> = sim
        .admin
        .as_ref()
        .map(|a| a.actions.iter().map(|(t, _)| *t).collect())
        .unwrap_or_default();
    for (i, t) in admin_times.into_iter().enumerate() {
        sim.schedule(t, EventKind::AdminStep(i));
    }
    let starts: Vec<(usize, u64)> = sim
        .customers
        .keys()
        .map(|&i| {
            let start = sim.config.nodes[i]
                .customer
                .as_ref()
                .map_or(0, |c| c.start_tick);
            (i, start)
        })
        .collect();
    for (i, start) in starts {
        sim.schedule(start, EventKind::CustomerStep(i));
    }
    let interval = sim.config.consensus.target_block_interval;
    let producers: Vec<(usize, u64)> = sim
        .edges
        .values()
        .filter(|e| e.mining)
        .map(|e| (e.id, e.offset))
        .collect();
    for (i, offset) in producers {
        sim.schedule(interval + offset, EventKind::ProduceBlock(i));
    }
    Ok(sim)
}

impl Sim {
    fn schedule(&mut self, fire_at: u64, kind: EventKind) {
        self.queue.push(Scheduled {
            fire_at,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    /// Sends a message from `from` to `to`, or loses it if a partition
    /// currently separates them.
    fn send(&mut self, from: usize, to: usize, kind: EventKind) {
        if self.config.connected(from, to, self.now) {
            let delay = self.config.link_delay(from, to);
            self.schedule(self.now + delay, kind);
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn rules(&self) -> &ChainRules {
        &self.rules
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn node_id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn node_name(&self, id: usize) -> &str {
        &self.names[id]
    }

    /// Scenario name of the node holding `address`, or its hex form.
    pub fn address_label(&self, address: &Address) -> String {
        match self.by_address.get(address) {
            Some(&i) => self.names[i].clone(),
            None => address.to_hex(),
        }
    }

    pub fn edge(&self, id: usize) -> Option<&EdgeNode> {
        self.edges.get(&id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeNode> {
        self.edges.values()
    }

    pub fn block(&self, hash: &Digest256) -> Option<&Arc<StoredBlock>> {
        self.store.get(hash)
    }

    pub fn genesis(&self) -> &Arc<StoredBlock> {
        &self.store[&self.genesis]
    }

    /// State at the tip of `node`'s best chain. Panics if `node` is not an edge server.
    pub fn best_state(&self, node: usize) -> &WorldState {
        &self.store[&self.edges[&node].best()].state
    }

    pub fn height(&self, node: usize) -> u64 {
        self.edges[&node].height()
    }

    /// The edge server whose best tip wins fork choice across the network.
    pub fn reference_node(&self) -> usize {
        self.edges
            .values()
            .max_by(|a, b| {
                compare_tips(&(a.height(), a.best()), &(b.height(), b.best()))
                    .then(b.id.cmp(&a.id))
            })
            .map(|e| e.id)
            .expect("validated scenarios have an edge server")
    }

    /// Blocks of the reference node's best chain, genesis first.
    pub fn canonical_chain(&self) -> Vec<Arc<StoredBlock>> {
        self.edges[&self.reference_node()]
            .canonical()
            .iter()
            .map(|h| Arc::clone(&self.store[h]))
            .collect()
    }

    /// Distinct best tips across edge servers.
    pub fn tips(&self) -> HashSet<Digest256> {
        self.edges.values().map(|e| e.best()).collect()
    }

    /// Rows recorded off-chain: admission drops and download progress.
    pub fn sim_rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn submit_tx(&mut self, node: usize, tx: Transaction) -> Result<(), DropReason> {
        let edge = self.edges.get_mut(&node).expect("clients bind to edge servers");
        let state = &self.store[&edge.best()].state;
        let hash = tx.hash();
        match edge.mempool.admit(tx.clone(), state, &self.rules) {
            Ok(()) => {
                let peers: Vec<usize> = self.edges.keys().copied().filter(|&p| p != node).collect();
                for p in peers {
                    self.send(
                        node,
                        p,
                        EventKind::DeliverTx {
                            to: p,
                            tx: Box::new(tx.clone()),
                        },
                    );
                }
                Ok(())
            }
            Err(reason) => {
                let sender = self.address_label(&tx.sender);
                *self.stats.drops_by_node.entry(sender.clone()).or_default() += 1;
                *self
                    .stats
                    .drops_by_reason
                    .entry(reason.label().to_string())
                    .or_default() += 1;
                self.rows.push(MetricRow {
                    tick: self.now,
                    height: self.edges[&node].height(),
                    node: sender,
                    event: "Dropped".into(),
                    tx_hash: hash.to_hex(),
                    gas_used: 0,
                    fee: 0,
                    balance_after: self.best_state(node).balance(&tx.sender),
                    detail: reason.label().into(),
                });
                Err(reason)
            }
        }
    }

    pub fn receipt_status(&self, node: usize, tx_hash: &Digest256) -> ReceiptStatus {
        let edge = &self.edges[&node];
        if let Some((height, index)) = edge.locate_tx(tx_hash) {
            let sb = &self.store[&edge.canonical()[height as usize]];
            return ReceiptStatus::Confirmed {
                receipt: sb.receipts[index].clone(),
                height,
            };
        }
        if edge.mempool.contains(tx_hash) {
            ReceiptStatus::Pending
        } else {
            ReceiptStatus::Unknown
        }
    }

    /// Records an off-chain row for `node`.
    pub fn note(&mut self, node: usize, event: &str, detail: String) {
        let reference = self.reference_node();
        self.rows.push(MetricRow {
            tick: self.now,
            height: self.height(reference),
            node: self.names[node].clone(),
            event: event.into(),
            tx_hash: String::new(),
            gas_used: 0,
            fee: 0,
            balance_after: self.best_state(reference).balance(&self.keys[node].address()),
            detail,
        });
    }

    /// Sends a download request for `version` to the repository and returns
    /// the round-trip time a successful download takes.
    pub fn request_download(&mut self, customer: usize, repo: usize, version: u32, url: &str) -> u64 {
        self.note(customer, "BeginDownload", format!("version={version} url={url}"));
        self.send(customer, repo, EventKind::BeginDownload { customer, repo, version });
        self.config.link_delay(customer, repo) * 2
    }

    /// Processes the next event. Returns `false` once the queue is empty.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        self.now = ev.fire_at;
        match ev.kind {
            EventKind::CustomerStep(id) => {
                let mut agent = self.customers.remove(&id).expect("customer exists");
                agent.step(self);
                let period = agent.period();
                self.customers.insert(id, agent);
                self.schedule(self.now + period, EventKind::CustomerStep(id));
            }
            EventKind::AdminStep(index) => {
                let mut admin = self.admin.take().expect("admin exists");
                admin.act(self, index);
                self.admin = Some(admin);
            }
            EventKind::ProduceBlock(id) => self.produce(id)?,
            EventKind::DeliverBlock { to, from, hash } => self.receive_block(to, from, hash),
            EventKind::DeliverTx { to, tx } => {
                let edge = self.edges.get_mut(&to).expect("edge exists");
                let state = &self.store[&edge.best()].state;
                if edge.mempool.admit(*tx, state, &self.rules).is_err() {
                    self.stats.gossip_drops += 1;
                }
            }
            EventKind::BeginDownload { customer, repo, version } => {
                self.send(repo, customer, EventKind::FinishDownload { customer, version });
            }
            EventKind::FinishDownload { customer, version } => {
                self.note(customer, "FinishDownload", format!("version={version}"));
                let mut agent = self.customers.remove(&customer).expect("customer exists");
                agent.finish_download(self, version);
                self.customers.insert(customer, agent);
            }
            EventKind::SyncRequest { to, from } => {
                let hashes = self.edges[&to].canonical().to_vec();
                self.send(to, from, EventKind::DeliverChain { to: from, from: to, hashes });
            }
            EventKind::DeliverChain { to, from, hashes } => self.receive_chain(to, from, hashes),
        }
        Ok(true)
    }

    /// Default tick cap for a run of `blocks` blocks.
    fn tick_cap(&self, blocks: u64) -> u64 {
        if let Some(t) = self.config.run.max_ticks {
            return t;
        }
        let admin = self.config.admin_index().and_then(|a| self.config.nodes[a].admin.as_ref());
        let interval = admin
            .into_iter()
            .flat_map(|a| a.migrations.iter().filter_map(|m| m.block_interval))
            .chain([
                self.config.contract.block_interval,
                self.config.consensus.target_block_interval,
            ])
            .max()
            .unwrap_or(1);
        let offset = self.edges.values().map(|e| e.offset).max().unwrap_or(0);
        // PoS slots can go unfilled, so leave generous headroom.
        blocks.saturating_add(1).saturating_mul(interval).saturating_mul(4) + offset + 100
    }

    pub fn run_until(&mut self, stop: Stop) -> Result<(), SimError> {
        let limit = match stop {
            Stop::Tick(t) => t,
            Stop::Height(h) => self.tick_cap(h),
        };
        loop {
            if let Stop::Height(h) = stop {
                if self.edges.values().any(|e| e.height() >= h) {
                    return Ok(());
                }
            }
            match self.queue.peek() {
                Some(ev) if ev.fire_at <= limit => {
                    self.step()?;
                }
                _ => return Ok(()),
            }
        }
    }

    fn produce(&mut self, id: usize) -> Result<(), SimError> {
        let edge = &self.edges[&id];
        let producer = edge.address;
        let parent = Arc::clone(&self.store[&edge.best()]);
        let interval = parent.state.contract.block_interval.max(1);
        self.schedule(self.now + interval, EventKind::ProduceBlock(id));

        if self.rules.consensus.mode == ConsensusMode::Pos
            && self.rules.expected_producer(&parent) != Some(producer)
        {
            self.stats.not_selected += 1;
            return Ok(());
        }

        let height = parent.height() + 1;
        let env = self.rules.env();
        let ctx = ExecContext { height, producer };
        let mut state = parent.state.clone();
        let boundary = state.contract.epoch.is_boundary(height);
        let cap = self.config.run.max_block_txs;
        let room = if boundary { cap.saturating_sub(1).max(1) } else { cap };

        let mut chosen: Vec<Transaction> = Vec::new();
        let mut evicted = HashSet::new();
        let mut remaining: Vec<Transaction> = self.edges[&id].mempool.iter().cloned().collect();
        loop {
            let mut progressed = false;
            let mut deferred = Vec::new();
            for tx in remaining {
                if chosen.len() >= room || tx.nonce > state.nonce(&tx.sender) {
                    deferred.push(tx);
                    continue;
                }
                match apply_tx(&mut state, &tx, &env, &ctx) {
                    Ok(_) => {
                        chosen.push(tx);
                        progressed = true;
                    }
                    Err(_) => {
                        evicted.insert(tx.hash());
                    }
                }
            }
            remaining = deferred;
            if !progressed || chosen.len() >= room {
                break;
            }
        }

        if boundary && state.contract.last_distribution != Some(height) {
            let keys = &self.keys[self.by_address[&producer]];
            let mut tx = Transaction {
                sender: producer,
                nonce: state.nonce(&producer),
                kind: TxKind::ContractCall {
                    method: method::DISTRIBUTE,
                    args: Vec::new(),
                },
                payload: Vec::new(),
                gas_limit: self.rules.schedule.intrinsic(0) + self.rules.schedule.distribute,
                gas_price: 1,
                signature: Vec::new(),
            };
            tx.signature = keys.sign(&MockScheme, &tx.signing_bytes());
            if apply_tx(&mut state, &tx, &env, &ctx).is_ok() {
                chosen.push(tx);
            }
        }

        let mut header = BlockHeader {
            height,
            prev_hash: parent.hash,
            tx_root: tx_root(&chosen),
            timestamp: self.now,
            producer,
            consensus_proof: ConsensusProof::Pow(0),
        };
        match self.rules.consensus.mode {
            ConsensusMode::Pow => {
                let (nonce, _) = pow_mine(&header, self.rules.consensus.difficulty, MAX_POW_ITERATIONS)
                    .map_err(|e| SimError::Invariant(format!("mining block {height}: {e}")))?;
                header.consensus_proof = ConsensusProof::Pow(nonce);
            }
            ConsensusMode::Pos => {
                let keys = &self.keys[self.by_address[&producer]];
                header.consensus_proof = ConsensusProof::Pos(keys.sign(&MockScheme, &header.signing_bytes()));
            }
        }
        let block = Block {
            header,
            transactions: chosen,
        };
        let stored = self
            .rules
            .execute_block(&parent, block)
            .map_err(|e| SimError::Invariant(format!("block {height} by {}: {e}", self.names[id])))?;
        finalize_block(&mut state, &producer, self.rules.consensus.block_reward);
        if stored.state.digest() != state.digest() {
            return Err(SimError::Invariant(format!(
                "block {height}: re-execution diverged from assembly"
            )));
        }

        let hash = stored.hash;
        self.store.insert(hash, Arc::new(stored));
        self.stats.blocks_produced += 1;
        self.stats.evicted += evicted.len() as u64;
        let edge = self.edges.get_mut(&id).expect("edge exists");
        edge.remove_from_mempool(&evicted);
        edge.connect(hash, &self.store);
        edge.set_best(hash, &self.store);
        self.broadcast(id, hash, None);
        Ok(())
    }

    fn broadcast(&mut self, from: usize, hash: Digest256, except: Option<usize>) {
        let peers: Vec<usize> = self
            .edges
            .keys()
            .copied()
            .filter(|&p| p != from && Some(p) != except)
            .collect();
        for to in peers {
            self.send(from, to, EventKind::DeliverBlock { to, from, hash });
        }
    }

    /// Moves `node` to the best tip among its current one and `candidates`.
    fn adopt_best(&mut self, node: usize, candidates: &[Digest256]) {
        let edge = &self.edges[&node];
        let current = edge.best();
        let mut best = (edge.height(), current);
        for h in candidates {
            let tip = (self.store[h].height(), *h);
            if compare_tips(&tip, &best) == Ordering::Greater {
                best = tip;
            }
        }
        if best.1 != current {
            if self.store[&best.1].block.header.prev_hash != current {
                self.stats.reorgs += 1;
            }
            let edge = self.edges.get_mut(&node).expect("edge exists");
            edge.set_best(best.1, &self.store);
        }
    }

    fn receive_block(&mut self, to: usize, from: usize, hash: Digest256) {
        let edge = self.edges.get_mut(&to).expect("edge exists");
        if edge.knows(&hash) {
            return;
        }
        let parent = self.store[&hash].block.header.prev_hash;
        if !edge.knows(&parent) {
            edge.add_orphan(hash);
            if edge.sync_outstanding.insert(from) {
                self.send(to, from, EventKind::SyncRequest { to: from, from: to });
            }
            return;
        }
        let connected = edge.connect(hash, &self.store);
        self.adopt_best(to, &connected);
        for h in connected {
            self.broadcast(to, h, Some(from));
        }
    }

    fn receive_chain(&mut self, to: usize, from: usize, hashes: Vec<Digest256>) {
        let edge = self.edges.get_mut(&to).expect("edge exists");
        edge.sync_outstanding.remove(&from);
        let mut connected = Vec::new();
        for h in hashes {
            if edge.knows(&h) {
                continue;
            }
            if edge.knows(&self.store[&h].block.header.prev_hash) {
                connected.extend(edge.connect(h, &self.store));
            } else {
                edge.add_orphan(h);
            }
        }
        self.adopt_best(to, &connected);
    }
}
