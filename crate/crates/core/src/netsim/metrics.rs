use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contract::{apply_tx, finalize_block, Event, ExecContext, Receipt, TxStatus};
use crate::ledger::{method, Address, TxKind};

use super::rules::{ChainRules, StoredBlock};
use super::sim::{Sim, SimError};

/// Column order of `metrics.csv`.
pub const CSV_HEADER: &str = "tick,height,node,event,tx_hash,gas_used,fee,balance_after,detail";

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricRow {
    pub tick: u64,
    pub height: u64,
    pub node: String,
    pub event: String,
    pub tx_hash: String,
    pub gas_used: u64,
    pub fee: u128,
    pub balance_after: u128,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SimStats {
    /// Client submissions rejected at admission, by sender name.
    pub drops_by_node: std::collections::BTreeMap<String, u64>,
    pub drops_by_reason: std::collections::BTreeMap<String, u64>,
    /// Gossiped copies another edge server refused.
    pub gossip_drops: u64,
    /// Mempool entries that failed re-validation while building a block.
    pub evicted: u64,
    pub blocks_produced: u64,
    /// PoS slots a miner skipped because another validator was selected.
    pub not_selected: u64,
    pub reorgs: u64,
}

impl SimStats {
    pub fn drop_count(&self) -> u64 {
        self.drops_by_node.values().sum()
    }
}

/// Event name used for a transaction's row.
pub fn tx_event_name(kind: &TxKind) -> &'static str {
    match kind {
        TxKind::Transfer { .. } => "Transfer",
        TxKind::Migrate { .. } => "Migrate",
        TxKind::PermissionUpdate { .. } => "PermissionUpdate",
        TxKind::ContractCall { method: m, .. } => match *m {
            method::REGISTER => "Register",
            method::SUBMIT_DATA => "SubmitData",
            method::APPLY_UPDATE => "ApplyUpdate",
            method::REPORT_MALICIOUS => "ReportMalicious",
            method::DISTRIBUTE => "TriggerDistribution",
            _ => "ContractCall",
        },
    }
}

fn status_detail(receipt: &Receipt) -> String {
    match &receipt.status {
        TxStatus::Success => "success".into(),
        TxStatus::Reverted(reason) => match receipt.update_url() {
            Some(url) => format!("reverted:{reason:?} url={url}"),
            None => format!("reverted:{reason:?}"),
        },
    }
}

fn credit(ev: &Event) -> Option<(Address, u128)> {
    match ev {
        Event::Reimbursed { to, amount } => Some((*to, *amount)),
        Event::Granted { to, amount, .. } => Some((*to, *amount)),
        _ => None,
    }
}

/// Rows for every gas- or balance-affecting effect on `chain` (genesis
/// first), obtained by re-executing each block transaction by transaction.
pub fn chain_rows(
    chain: &[Arc<StoredBlock>],
    rules: &ChainRules,
    label: impl Fn(&Address) -> String,
) -> Result<Vec<MetricRow>, SimError> {
    let env = rules.env();
    let mut rows = Vec::new();
    for pair in chain.windows(2) {
        let (parent, sb) = (&pair[0], &pair[1]);
        let header = &sb.block.header;
        let (tick, height) = (header.timestamp, header.height);
        let ctx = ExecContext {
            height,
            producer: header.producer,
        };
        let mut state = parent.state.clone();
        for tx in &sb.block.transactions {
            let receipt = apply_tx(&mut state, tx, &env, &ctx)
                .map_err(|e| SimError::Invariant(format!("replaying block {height}: {e}")))?;
            rows.push(MetricRow {
                tick,
                height,
                node: label(&tx.sender),
                event: tx_event_name(&tx.kind).into(),
                tx_hash: receipt.tx_hash.to_hex(),
                gas_used: receipt.gas_used,
                fee: receipt.fee,
                balance_after: state.balance(&tx.sender),
                detail: status_detail(&receipt),
            });
            // Credits from events not yet reported, so each row shows the
            // balance right after its own event.
            let mut later: Vec<(Address, u128)> = receipt.events.iter().filter_map(credit).collect();
            for ev in &receipt.events {
                if credit(ev).is_some() {
                    later.remove(0);
                }
                let (who, event, fee, detail) = match ev {
                    Event::PenaltyApplied {
                        offender,
                        amount,
                        shortfall,
                        reporter_share,
                    } => (
                        offender,
                        "Penalty",
                        *amount,
                        format!("shortfall={shortfall} reporter_share={reporter_share}"),
                    ),
                    Event::Reimbursed { to, amount } => (to, "Reimbursed", 0, format!("amount={amount}")),
                    Event::Granted { to, amount, netted } => (
                        to,
                        "Distribute",
                        0,
                        format!("amount={amount} netted={netted}"),
                    ),
                    _ => continue,
                };
                rows.push(MetricRow {
                    tick,
                    height,
                    node: label(who),
                    event: event.into(),
                    tx_hash: receipt.tx_hash.to_hex(),
                    gas_used: 0,
                    fee,
                    balance_after: state.balance(who)
                        - later.iter().filter(|(a, _)| a == who).map(|(_, n)| n).sum::<u128>(),
                    detail,
                });
            }
        }
        finalize_block(&mut state, &header.producer, rules.consensus.block_reward);
        if state.digest() != sb.state.digest() {
            return Err(SimError::Invariant(format!("replay of block {height} diverged")));
        }
        rows.push(MetricRow {
            tick,
            height,
            node: label(&header.producer),
            event: "BlockReward".into(),
            tx_hash: String::new(),
            gas_used: 0,
            fee: 0,
            balance_after: state.balance(&header.producer),
            detail: format!("amount={}", rules.consensus.block_reward),
        });
    }
    Ok(rows)
}

/// All rows of a run: the reference chain's rows merged with off-chain rows
/// by tick. Off-chain rows come first within a tick.
pub fn metric_rows(sim: &Sim) -> Result<Vec<MetricRow>, SimError> {
    let chain = sim.canonical_chain();
    let on_chain = chain_rows(&chain, sim.rules(), |a| sim.address_label(a))?;
    let mut off_chain = sim.sim_rows().iter().peekable();
    let mut rows = Vec::with_capacity(on_chain.len() + sim.sim_rows().len());
    for row in on_chain {
        while let Some(r) = off_chain.next_if(|r| r.tick <= row.tick) {
            rows.push(r.clone());
        }
        rows.push(row);
    }
    rows.extend(off_chain.cloned());
    Ok(rows)
}
