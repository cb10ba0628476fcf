//! Scenario files.
//!
//! Parsing is strict: unknown keys anywhere are errors. Everything except
//! `consensus.mode` and `nodes` has a default.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusConfig, ConsensusMode};
use crate::contract::{Allowlist, EpochConfig, GasSchedule, MigrateParams, QuotaConfig};
use crate::ledger::{Address, Keypair};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub contract: ContractConfig,
    #[serde(default)]
    pub gas_schedule: GasSchedule,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub allowlist: AllowlistSpec,
    #[serde(default)]
    pub latency: LatencySpec,
    #[serde(default)]
    pub run: RunSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    /// Version installed by the admin's initial migration.
    pub version: u32,
    pub update_url: String,
    pub block_interval: u64,
    pub epoch_length: u64,
    pub epoch_mint: u128,
    pub quota: QuotaSpec,
}

impl Default for ContractConfig {
    fn default() -> Self {
        ContractConfig {
            version: 1,
            update_url: "repo://firmware/v1".into(),
            block_interval: 10,
            epoch_length: 20,
            epoch_mint: 200,
            quota: QuotaSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuotaSpec {
    pub window_blocks: u64,
    pub max_share_percent: u64,
    pub min_active_senders: u64,
    /// Defaults to two base transactions' worth of gas at unit price.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_rate: Option<u128>,
    pub reporter_share_percent: u64,
}

impl Default for QuotaSpec {
    fn default() -> Self {
        let q = QuotaConfig::default();
        QuotaSpec {
            window_blocks: q.window_blocks,
            max_share_percent: q.max_share_percent,
            min_active_senders: q.min_active_senders,
            penalty_rate: None,
            reporter_share_percent: q.reporter_share_percent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Customer,
    EdgeServer,
    UpdateRepository,
    Admin,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    /// Key seed; the node name is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<String>,
    pub kind: NodeKind,
    #[serde(default)]
    pub balance: u128,
    #[serde(default)]
    pub stake: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub customer: Option<CustomerParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin: Option<AdminParams>,
}

impl NodeSpec {
    pub fn new(name: &str, kind: NodeKind) -> Self {
        NodeSpec {
            name: name.into(),
            seed: None,
            kind,
            balance: 0,
            stake: 0,
            customer: None,
            edge: None,
            admin: None,
        }
    }

    pub fn seed_bytes(&self) -> &[u8] {
        self.seed.as_deref().unwrap_or(&self.name).as_bytes()
    }

    pub fn keypair(&self) -> Keypair {
        Keypair::mock(self.seed_bytes())
    }

    pub fn address(&self) -> Address {
        self.keypair().address()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomerParams {
    pub submit_period: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_submits: Option<u64>,
    pub start_tick: u64,
    /// Firmware the device ships with; the contract's initial version when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub firmware_version: Option<u32>,
    /// Edge server this client talks to; the first edge server when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bind_to: Option<String>,
    pub payload_size: usize,
    pub gas_limit: u64,
    pub gas_price: u64,
    /// Customer this one watches and reports when it exceeds its quota.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_against: Option<String>,
}

impl Default for CustomerParams {
    fn default() -> Self {
        CustomerParams {
            submit_period: 10,
            max_submits: None,
            start_tick: 0,
            firmware_version: None,
            bind_to: None,
            payload_size: 4,
            gas_limit: 100,
            gas_price: 1,
            report_against: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeParams {
    pub mining: bool,
    /// Production phase shift in ticks relative to the block interval.
    pub offset: u64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            mining: true,
            offset: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdminParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bind_to: Option<String>,
    pub gas_limit: u64,
    pub gas_price: u64,
    pub migrations: Vec<MigrationStep>,
    pub permissions: Vec<PermissionStep>,
}

impl Default for AdminParams {
    fn default() -> Self {
        AdminParams {
            bind_to: None,
            gas_limit: 1000,
            gas_price: 1,
            migrations: Vec::new(),
            permissions: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigrationStep {
    pub at_tick: u64,
    pub version: u32,
    pub update_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_interval: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermissionStep {
    pub at_tick: u64,
    /// Node name or hex address.
    pub target: String,
    pub allow: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AllowlistSpec {
    /// The literal string `"all"`.
    All(String),
    /// Node names or hex addresses.
    Only(Vec<String>),
}

impl Default for AllowlistSpec {
    fn default() -> Self {
        AllowlistSpec::All("all".into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySpec {
    pub default: u64,
    pub links: Vec<LinkSpec>,
    pub partitions: Vec<PartitionSpec>,
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec {
            default: 1,
            links: Vec::new(),
            partitions: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub delay: u64,
}

/// Between `from_tick` (inclusive) and `to_tick` (exclusive) messages between
/// nodes in different groups are lost. Nodes in no group are unaffected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub from_tick: u64,
    pub to_tick: u64,
    pub groups: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub max_blocks: u64,
    pub seed: u64,
    pub max_block_txs: usize,
    /// Hard stop in ticks; derived from `max_blocks` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ticks: Option<u64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            max_blocks: 60,
            seed: 7,
            max_block_txs: 100,
            max_ticks: None,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn quota(&self) -> QuotaConfig {
        let q = &self.contract.quota;
        QuotaConfig {
            window_blocks: q.window_blocks,
            max_share_percent: q.max_share_percent,
            min_active_senders: q.min_active_senders,
            penalty_rate: q
                .penalty_rate
                .unwrap_or(2 * self.gas_schedule.base_tx as u128),
            reporter_share_percent: q.reporter_share_percent,
        }
    }

    pub fn epoch(&self) -> EpochConfig {
        EpochConfig {
            length: self.contract.epoch_length,
            mint: self.contract.epoch_mint,
        }
    }

    pub fn initial_migration(&self) -> MigrateParams {
        MigrateParams {
            version: self.contract.version,
            update_url: self.contract.update_url.clone(),
            block_interval: self.contract.block_interval,
        }
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn admin_index(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Admin)
    }

    pub fn admin_address(&self) -> Option<Address> {
        self.admin_index().map(|i| self.nodes[i].address())
    }

    pub fn edge_servers(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::EdgeServer)
            .map(|(i, _)| i)
    }

    pub fn repository_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.kind == NodeKind::UpdateRepository)
    }

    /// Resolves a node name, or failing that a 40-digit hex address.
    pub fn resolve_address(&self, name_or_hex: &str) -> Result<Address, ScenarioError> {
        if let Some(i) = self.node_index(name_or_hex) {
            return Ok(self.nodes[i].address());
        }
        Address::from_hex(name_or_hex)
            .map_err(|_| ScenarioError::Invalid(format!("unknown node or address {name_or_hex:?}")))
    }

    pub fn allowlist(&self) -> Result<Allowlist, ScenarioError> {
        match &self.allowlist {
            AllowlistSpec::All(s) if s == "all" => Ok(Allowlist::open()),
            AllowlistSpec::All(s) => invalid(format!("allowlist must be \"all\" or a list, got {s:?}")),
            AllowlistSpec::Only(entries) => {
                let addrs = entries
                    .iter()
                    .map(|e| self.resolve_address(e))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Allowlist::only(addrs))
            }
        }
    }

    fn mining_servers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| {
            n.kind == NodeKind::EdgeServer && n.edge.as_ref().is_none_or(|e| e.mining)
        })
    }

    pub fn bound_server(&self, bind_to: Option<&str>) -> Result<usize, ScenarioError> {
        match bind_to {
            Some(name) => match self.node_index(name) {
                Some(i) if self.nodes[i].kind == NodeKind::EdgeServer => Ok(i),
                _ => invalid(format!("bind_to {name:?} is not an edge server")),
            },
            None => match self.edge_servers().next() {
                Some(i) => Ok(i),
                None => invalid("clients need at least one edge server to bind to"),
            },
        }
    }

    /// Checks every cross-field rule and returns the first violation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.consensus.difficulty == 0 {
            return invalid("consensus.difficulty must be at least 1");
        }
        if self.consensus.target_block_interval == 0 || self.contract.block_interval == 0 {
            return invalid("block intervals must be at least 1 tick");
        }
        if self.gas_schedule.base_tx == 0 {
            return invalid("gas_schedule.base_tx must be at least 1");
        }
        if self.contract.epoch_length == 0 {
            return invalid("contract.epoch_length must be at least 1");
        }
        self.quota().validate().map_err(ScenarioError::Invalid)?;
        if self.run.max_block_txs == 0 {
            return invalid("run.max_block_txs must be at least 1");
        }

        let mut names = BTreeSet::new();
        let mut addresses = BTreeMap::new();
        for n in &self.nodes {
            if n.name.is_empty() {
                return invalid("node names must be non-empty");
            }
            if n.seed.as_deref() == Some("") {
                return invalid(format!("node {:?} has an empty seed", n.name));
            }
            if !names.insert(n.name.as_str()) {
                return invalid(format!("duplicate node name {:?}", n.name));
            }
            if let Some(other) = addresses.insert(n.address(), n.name.as_str()) {
                return invalid(format!("nodes {other:?} and {:?} share an address", n.name));
            }
            let kind_ok = match n.kind {
                NodeKind::Customer => n.edge.is_none() && n.admin.is_none(),
                NodeKind::EdgeServer => n.customer.is_none() && n.admin.is_none(),
                NodeKind::Admin => n.customer.is_none() && n.edge.is_none(),
                NodeKind::UpdateRepository => {
                    n.customer.is_none() && n.edge.is_none() && n.admin.is_none()
                }
            };
            if !kind_ok {
                return invalid(format!("node {:?} carries parameters for another kind", n.name));
            }
        }

        let admins = self.nodes.iter().filter(|n| n.kind == NodeKind::Admin).count();
        if admins != 1 {
            return invalid(format!("exactly one admin node required, found {admins}"));
        }
        if self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::UpdateRepository)
            .count()
            > 1
        {
            return invalid("at most one update repository");
        }
        if self.mining_servers().next().is_none() {
            return invalid("no mining edge server: no block would ever be produced");
        }
        if self.consensus.mode == ConsensusMode::Pos
            && self.mining_servers().all(|n| n.stake == 0)
        {
            return invalid("proof-of-stake needs at least one mining edge server with stake");
        }
        if self.consensus.mode == ConsensusMode::Pos {
            let idle = self.nodes.iter().find(|n| {
                n.stake > 0
                    && !(n.kind == NodeKind::EdgeServer && n.edge.as_ref().is_none_or(|e| e.mining))
            });
            if let Some(n) = idle {
                return invalid(format!(
                    "node {:?} holds stake but does not mine; its slots would stall the chain",
                    n.name
                ));
            }
        }

        for n in &self.nodes {
            if let Some(c) = &n.customer {
                if c.submit_period == 0 {
                    return invalid(format!("customer {:?} submit_period must be at least 1", n.name));
                }
                self.bound_server(c.bind_to.as_deref())?;
                if let Some(target) = &c.report_against {
                    match self.node_index(target) {
                        Some(i) if self.nodes[i].kind == NodeKind::Customer && *target != n.name => {}
                        _ => {
                            return invalid(format!(
                                "customer {:?} reports against {target:?}, which is not another customer",
                                n.name
                            ))
                        }
                    }
                }
            }
            if let Some(a) = &n.admin {
                self.bound_server(a.bind_to.as_deref())?;
                for p in &a.permissions {
                    self.resolve_address(&p.target)?;
                }
                if a.migrations.iter().any(|m| m.block_interval == Some(0)) {
                    return invalid("migration block_interval must be at least 1");
                }
            }
        }
        self.allowlist()?;
        for l in &self.latency.links {
            for end in [&l.a, &l.b] {
                if self.node_index(end).is_none() {
                    return invalid(format!("latency link names unknown node {end:?}"));
                }
            }
        }
        for p in &self.latency.partitions {
            if p.from_tick >= p.to_tick {
                return invalid("partition from_tick must be before to_tick");
            }
            let mut seen = BTreeSet::new();
            for name in p.groups.iter().flatten() {
                if self.node_index(name).is_none() {
                    return invalid(format!("partition names unknown node {name:?}"));
                }
                if !seen.insert(name) {
                    return invalid(format!("node {name:?} appears in two partition groups"));
                }
            }
        }
        Ok(())
    }

    pub fn link_delay(&self, a: usize, b: usize) -> u64 {
        let (na, nb) = (&self.nodes[a].name, &self.nodes[b].name);
        self.latency
            .links
            .iter()
            .find(|l| (&l.a == na && &l.b == nb) || (&l.a == nb && &l.b == na))
            .map_or(self.latency.default, |l| l.delay)
    }

    pub fn connected(&self, a: usize, b: usize, tick: u64) -> bool {
        let (na, nb) = (&self.nodes[a].name, &self.nodes[b].name);
        self.latency
            .partitions
            .iter()
            .filter(|p| p.from_tick <= tick && tick < p.to_tick)
            .all(|p| {
                let ga = p.groups.iter().position(|g| g.contains(na));
                let gb = p.groups.iter().position(|g| g.contains(nb));
                match (ga, gb) {
                    (Some(x), Some(y)) => x == y,
                    _ => true,
                }
            })
    }
}
