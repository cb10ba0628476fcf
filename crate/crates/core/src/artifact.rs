//! Run outputs: `chain.json`, `summary.json`, `metrics.csv`, and the
//! validation and replay of a saved chain.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::Event;
use crate::ledger::{validate_chain, Block, Digest256, InvalidBlock, TxKind};
use crate::netsim::{
    genesis_block, init_sim, metric_rows, ChainRules, MetricRow, ScenarioError, Sim, SimConfig,
    SimError, Stop, CSV_HEADER,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footer {
    pub height: u64,
    pub tip: Digest256,
    pub state_digest: Digest256,
    pub contract_digest: Digest256,
}

/// A sealed chain with everything needed to re-execute it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub name: String,
    pub seed: u64,
    pub scenario: SimConfig,
    pub blocks: Vec<Block>,
    pub footer: Footer,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltySummary {
    pub count: u64,
    /// Excess times rate, before clamping to the offender's balance.
    pub assessed: u128,
    pub collected: u128,
    pub shortfall: u128,
    pub by_offender: BTreeMap<String, u128>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReimbursementSummary {
    /// Reporter shares credited when penalties were applied.
    pub accrued: u128,
    pub paid: u128,
    pub pending: u128,
    pub by_reporter: BTreeMap<String, u128>,
    pub paid_at_heights: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantSummary {
    pub paid: u128,
    pub netted: u128,
    pub by_device: BTreeMap<String, u128>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSummary {
    pub total: u64,
    pub by_node: BTreeMap<String, u64>,
    pub by_reason: BTreeMap<String, u64>,
    pub gossip: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationSummary {
    pub genesis_supply: u128,
    pub block_rewards: u128,
    pub epoch_mint: u128,
    pub expected: u128,
    pub actual: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub height: u64,
    pub ticks: u64,
    pub tip: Digest256,
    pub state_digest: Digest256,
    pub contract_digest: Digest256,
    pub balances: BTreeMap<String, u128>,
    /// Fees paid per sender over the chain.
    pub fees: BTreeMap<String, u128>,
    pub penalties: PenaltySummary,
    pub reimbursements: ReimbursementSummary,
    pub grants: GrantSummary,
    pub drops: DropSummary,
    pub penalty_pool: u128,
    pub epochs_completed: u64,
    pub conservation: ConservationSummary,
    pub blocks_produced: u64,
    pub reorgs: u64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub chain: ChainFile,
    pub summary: Summary,
    pub rows: Vec<MetricRow>,
}

/// Runs `config` until `blocks` blocks (the scenario's `max_blocks` when
/// `None`) and collects every artifact.
pub fn run_scenario(
    name: &str,
    config: SimConfig,
    seed: u64,
    blocks: Option<u64>,
) -> Result<RunOutput, SimError> {
    let target = blocks.unwrap_or(config.run.max_blocks);
    let mut sim = init_sim(config, seed)?;
    sim.run_until(Stop::Height(target))?;
    collect(name, seed, &sim)
}

/// Artifacts for the current state of `sim`.
pub fn collect(name: &str, seed: u64, sim: &Sim) -> Result<RunOutput, SimError> {
    let chain = sim.canonical_chain();
    let tip = chain.last().expect("chain has genesis");
    let state = &tip.state;
    let label = |a: &crate::ledger::Address| sim.address_label(a);

    let mut fees = BTreeMap::new();
    let mut penalties = PenaltySummary::default();
    let mut reimbursements = ReimbursementSummary::default();
    let mut grants = GrantSummary::default();
    for sb in &chain[1..] {
        for (tx, receipt) in sb.block.transactions.iter().zip(&sb.receipts) {
            *fees.entry(label(&tx.sender)).or_insert(0) += receipt.fee;
            for ev in &receipt.events {
                match ev {
                    Event::PenaltyApplied {
                        offender,
                        amount,
                        shortfall,
                        reporter_share,
                    } => {
                        penalties.count += 1;
                        penalties.assessed += amount + shortfall;
                        penalties.collected += amount;
                        penalties.shortfall += shortfall;
                        *penalties.by_offender.entry(label(offender)).or_insert(0) += amount;
                        reimbursements.accrued += reporter_share;
                    }
                    Event::Reimbursed { to, amount } => {
                        reimbursements.paid += amount;
                        *reimbursements.by_reporter.entry(label(to)).or_insert(0) += amount;
                        reimbursements.paid_at_heights.push(sb.height());
                    }
                    Event::Granted { to, amount, netted } => {
                        grants.paid += amount;
                        grants.netted += netted;
                        *grants.by_device.entry(label(to)).or_insert(0) += amount;
                    }
                    _ => {}
                }
            }
        }
    }
    reimbursements.pending = state.contract.pending_total();

    let stats = sim.stats();
    let reward = sim.rules().consensus.block_reward;
    let conservation = ConservationSummary {
        genesis_supply: state.genesis_supply,
        block_rewards: reward * tip.height() as u128,
        epoch_mint: state.contract.epoch.mint * state.contract.epochs_completed as u128,
        expected: state.expected_supply(tip.height(), reward),
        actual: state.circulating(),
    };
    let footer = Footer {
        height: tip.height(),
        tip: tip.hash,
        state_digest: state.digest(),
        contract_digest: state.contract.digest(),
    };
    let summary = Summary {
        name: name.into(),
        seed,
        height: footer.height,
        ticks: sim.now(),
        tip: footer.tip,
        state_digest: footer.state_digest,
        contract_digest: footer.contract_digest,
        balances: state
            .accounts
            .values()
            .map(|a| (label(&a.address), a.balance))
            .collect(),
        fees,
        penalties,
        reimbursements,
        grants,
        drops: DropSummary {
            total: stats.drop_count(),
            by_node: stats.drops_by_node.clone(),
            by_reason: stats.drops_by_reason.clone(),
            gossip: stats.gossip_drops,
        },
        penalty_pool: state.contract.penalty_pool,
        epochs_completed: state.contract.epochs_completed,
        conservation,
        blocks_produced: stats.blocks_produced,
        reorgs: stats.reorgs,
    };
    let chain_file = ChainFile {
        name: name.into(),
        seed,
        scenario: sim.config().clone(),
        blocks: chain.iter().map(|sb| sb.block.clone()).collect(),
        footer,
    };
    Ok(RunOutput {
        chain: chain_file,
        summary,
        rows: metric_rows(sim)?,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
    s.push('\n');
    s
}

pub fn write_csv<W: io::Write>(out: W, rows: &[MetricRow]) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

pub fn write_outputs(dir: &Path, out: &RunOutput) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(fs::File::create(dir.join("metrics.csv"))?, &out.rows)?;
    fs::write(dir.join("chain.json"), to_json(&out.chain))?;
    fs::write(dir.join("summary.json"), to_json(&out.summary))?;
    Ok(())
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ArtifactError {
    #[error("chain file does not parse: {0}")]
    Parse(String),
    #[error("embedded scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Invalid(#[from] InvalidBlock),
    #[error("footer does not describe the chain (tip at height {height})")]
    Footer { height: u64 },
    #[error("re-execution failed at height {height}: {message}")]
    Execution { height: u64, message: String },
    #[error("{what} digest mismatch: recorded {recorded}, replayed {replayed}")]
    DigestMismatch {
        what: &'static str,
        recorded: Digest256,
        replayed: Digest256,
    },
}

impl ArtifactError {
    /// Process exit status the CLI reports for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ArtifactError::Parse(_) | ArtifactError::Scenario(_) => 2,
            ArtifactError::Invalid(_) | ArtifactError::Footer { .. } => 4,
            ArtifactError::Execution { .. } | ArtifactError::DigestMismatch { .. } => 5,
        }
    }
}

pub fn parse_chain(text: &str) -> Result<ChainFile, ArtifactError> {
    let file: ChainFile =
        serde_json::from_str(text).map_err(|e| ArtifactError::Parse(e.to_string()))?;
    file.scenario.validate()?;
    Ok(file)
}

/// Links, roots and consensus proofs of every block, then the footer's tip.
pub fn validate_file(file: &ChainFile) -> Result<(), ArtifactError> {
    let rules = ChainRules::from_config(&file.scenario, file.seed);
    validate_chain(&file.blocks, &rules.proof_rules())?;
    let tip = file.blocks.last().expect("validated chains have genesis");
    if tip.height() != file.footer.height || tip.hash() != file.footer.tip {
        return Err(ArtifactError::Footer {
            height: tip.height(),
        });
    }
    Ok(())
}

/// Validates, re-executes from genesis and compares against the footer.
/// Returns the replayed contract-state digest.
pub fn replay(file: &ChainFile) -> Result<Digest256, ArtifactError> {
    validate_file(file)?;
    let rules = ChainRules::from_config(&file.scenario, file.seed);
    let mut parent = genesis_block(&file.scenario)?;
    for block in &file.blocks[1..] {
        let height = block.height();
        parent = rules
            .execute_block(&parent, block.clone())
            .map_err(|e| ArtifactError::Execution {
                height,
                message: e.to_string(),
            })?;
    }
    let state = &parent.state;
    let contract = state.contract.digest();
    if contract != file.footer.contract_digest {
        return Err(ArtifactError::DigestMismatch {
            what: "contract-state",
            recorded: file.footer.contract_digest,
            replayed: contract,
        });
    }
    let world = state.digest();
    if world != file.footer.state_digest {
        return Err(ArtifactError::DigestMismatch {
            what: "world-state",
            recorded: file.footer.state_digest,
            replayed: world,
        });
    }
    Ok(contract)
}

/// Number of transactions of each kind in a chain, for quick inspection.
pub fn tx_mix(blocks: &[Block]) -> BTreeMap<&'static str, u64> {
    let mut mix = BTreeMap::new();
    for tx in blocks.iter().flat_map(|b| &b.transactions) {
        let name = match tx.kind {
            TxKind::Transfer { .. } => "transfer",
            TxKind::ContractCall { .. } => "contract_call",
            TxKind::Migrate { .. } => "migrate",
            TxKind::PermissionUpdate { .. } => "permission_update",
        };
        *mix.entry(name).or_insert(0) += 1;
    }
    mix
}
