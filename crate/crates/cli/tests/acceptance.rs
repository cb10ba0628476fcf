//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use edgechain::artifact::collect;
use edgechain::consensus::{finality_check, pos_select, Finality, StakeSet, Staker};
use edgechain::contract::{
    apply_tx, Allowlist, ContractState, EpochConfig, ExecContext, ExecEnv, GasSchedule,
    QuotaConfig, RevertReason, TxStatus, WorldState,
};
use edgechain::ledger::{method, Address, Keypair, MockKeyring, MockScheme, Transaction, TxKind};
use edgechain::netsim::{init_sim, MetricRow, NodeKind, Sim, SimConfig, Stop};
use edgechain::scenarios::load_builtin;
use num_bigint::BigUint;
use num_rational::Ratio;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn builtin(name: &str) -> SimConfig {
    load_builtin(name).expect("builtin exists").expect("builtin valid")
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_edgechain"))
        .args(args)
        .env_remove("EDGECHAIN_SEED")
        .output()
        .expect("binary runs")
}

fn exit_code(args: &[&str]) -> i32 {
    cli(args).status.code().unwrap_or(-1)
}

/// Runs a built-in scenario through the binary and returns its output
/// directory and wall time.
fn run(dir: &Path, scenario: &str) -> Result<(PathBuf, Duration), String> {
    let out = dir.join(scenario);
    let start = Instant::now();
    let o = cli(&["run", "--scenario", scenario, "--out", out.to_str().unwrap()]);
    let took = start.elapsed();
    ensure!(
        o.status.success(),
        "run {scenario} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    Ok((out, took))
}

fn rows(dir: &Path) -> Vec<MetricRow> {
    csv::Reader::from_path(dir.join("metrics.csv"))
        .expect("metrics.csv readable")
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("metrics.csv parses")
}

fn amount(detail: &str) -> u128 {
    detail
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("amount="))
        .and_then(|v| v.parse().ok())
        .expect("row carries an amount")
}

fn fig3_shape(tmp: &Path) -> Outcome {
    let (dir, took) = run(tmp, "fig3")?;
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    let epoch = builtin("fig3").contract.epoch_length;
    let device: Vec<MetricRow> = rows(&dir).into_iter().filter(|r| r.node == "device").collect();
    let submits = device.iter().filter(|r| r.event == "SubmitData").count();
    ensure!(submits == 50, "{submits} submits, expected 50");

    let mut prev: Option<u128> = None;
    let mut distributions = Vec::new();
    for r in &device {
        if let Some(p) = prev {
            if r.event == "Distribute" {
                ensure!(r.balance_after > p, "no increase at height {}", r.height);
                distributions.push(r.height);
            } else {
                ensure!(
                    r.balance_after <= p,
                    "balance rose outside a distribution at height {} ({})",
                    r.height,
                    r.event
                );
            }
        }
        prev = Some(r.balance_after);
    }
    let height = device.last().map_or(0, |r| r.height).max(60);
    let boundaries: Vec<u64> = (1..=height / epoch).map(|k| k * epoch).collect();
    ensure!(
        distributions == boundaries,
        "distributions at {distributions:?}, boundaries {boundaries:?}"
    );
    Ok(format!(
        "{submits} submits, increases at heights {distributions:?}, {:.2}s",
        took.as_secs_f64()
    ))
}

fn fig4_reimbursement(tmp: &Path) -> Outcome {
    let (dir, _) = run(tmp, "fig4")?;
    let cfg = builtin("fig4");
    let epoch = cfg.contract.epoch_length;
    let share = cfg.quota().reporter_share_percent as u128;
    let all = rows(&dir);

    let penalties: Vec<&MetricRow> = all.iter().filter(|r| r.event == "Penalty").collect();
    let collected: u128 = penalties.iter().map(|r| r.fee).sum();
    ensure!(collected >= 1, "no penalty collected");
    ensure!(
        penalties.iter().all(|r| r.node == "offender"),
        "penalty charged to someone other than the offender"
    );

    let reimbursed: Vec<&MetricRow> = all.iter().filter(|r| r.event == "Reimbursed").collect();
    let paid: u128 = reimbursed.iter().map(|r| amount(&r.detail)).sum();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let pending = summary["reimbursements"]["pending"].as_u64().unwrap() as u128;
    ensure!(pending == 0, "{pending} still pending at the end of the run");
    ensure!(
        paid * 100 == collected * share,
        "reimbursed {paid} of {collected} collected, expected {share}%"
    );
    ensure!(
        reimbursed.iter().all(|r| r.node == "reporter"),
        "reimbursement paid to someone other than the reporter"
    );
    let heights: Vec<u64> = reimbursed.iter().map(|r| r.height).collect();
    ensure!(
        heights.iter().all(|h| h % epoch == 0),
        "reimbursed off-boundary at {heights:?}"
    );
    Ok(format!(
        "collected {collected}, reimbursed {paid} ({share}%), at heights {heights:?}"
    ))
}

fn surcharge(tmp: &Path) -> Outcome {
    let (dir, _) = run(tmp, "upgrade")?;
    let migrations: Vec<MetricRow> = rows(&dir)
        .into_iter()
        .filter(|r| r.event == "Migrate")
        .collect();
    ensure!(migrations.len() == 2, "{} migrations", migrations.len());
    ensure!(
        migrations.iter().all(|r| r.detail == "success"),
        "a migration reverted"
    );
    // Both migrations carry parameters of the same encoded size.
    let cfg = builtin("upgrade");
    let first_url = &cfg.contract.update_url;
    let second_url = &cfg.nodes[cfg.admin_index().unwrap()].admin.as_ref().unwrap().migrations[0].update_url;
    ensure!(first_url.len() == second_url.len(), "parameter sizes differ");
    let diff = migrations[0].gas_used as i64 - migrations[1].gas_used as i64;
    ensure!(
        diff == cfg.gas_schedule.init_surcharge as i64 && diff == 200,
        "difference {diff}"
    );
    Ok(format!(
        "first {} gas, second {} gas, difference {diff}",
        migrations[0].gas_used, migrations[1].gas_used
    ))
}

fn version_gating(tmp: &Path) -> Outcome {
    let (dir, _) = run(tmp, "upgrade")?;
    let cfg = builtin("upgrade");
    let url = cfg.nodes[cfg.admin_index().unwrap()].admin.as_ref().unwrap().migrations[0]
        .update_url
        .clone();
    let expected = format!("reverted:OutdatedVersion url={url}");
    let all = rows(&dir);
    let start = all
        .iter()
        .enumerate()
        .filter(|(_, r)| r.event == "Migrate")
        .nth(1)
        .map(|(i, _)| i)
        .ok_or("no mid-run migration")?;

    #[derive(Default)]
    struct Track {
        updated: bool,
        gated: u32,
        first_after: Option<String>,
    }
    let devices: Vec<String> = cfg
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Customer)
        .map(|n| n.name.clone())
        .collect();
    let mut track: BTreeMap<&str, Track> = devices.iter().map(|d| (d.as_str(), Track::default())).collect();
    for r in &all[start + 1..] {
        let Some(t) = track.get_mut(r.node.as_str()) else {
            continue;
        };
        match r.event.as_str() {
            "ApplyUpdate" if r.detail == "success" => t.updated = true,
            "SubmitData" if !t.updated => {
                ensure!(
                    r.detail == expected,
                    "{} submit at height {} not gated: {}",
                    r.node,
                    r.height,
                    r.detail
                );
                t.gated += 1;
            }
            "SubmitData" if t.first_after.is_none() => t.first_after = Some(r.detail.clone()),
            _ => {}
        }
    }
    let mut summary = Vec::new();
    for (name, t) in &track {
        ensure!(t.gated > 0, "{name} never hit the gate");
        ensure!(t.updated, "{name} never applied the update");
        ensure!(
            t.first_after.as_deref() == Some("success"),
            "{name} first post-update submit: {:?}",
            t.first_after
        );
        summary.push(format!("{name} gated {}x", t.gated));
    }
    Ok(format!("{}, all then succeeded ({url})", summary.join(", ")))
}

fn out_of_gas() -> Outcome {
    let admin = Keypair::mock(b"admin");
    let device = Keypair::mock(b"device");
    let producer = Address([0x99; 20]);
    let mut keys = MockKeyring::new();
    keys.insert(&admin);
    keys.insert(&device);
    let schedule = GasSchedule::default();
    let contract = ContractState::new(admin.address(), QuotaConfig::default(), EpochConfig::default(), 10);
    let mut state = WorldState::genesis(
        [(admin.address(), 10_000, 0), (device.address(), 1_000, 0)],
        contract,
        Allowlist::open(),
    );
    let env = ExecEnv {
        schedule: &schedule,
        block_reward: 0,
        keys: &keys,
    };
    let ctx = ExecContext { height: 1, producer };
    let sealed = |kp: &Keypair, nonce: u64, kind: TxKind, gas_limit: u64, gas_price: u64| {
        let mut tx = Transaction {
            sender: kp.address(),
            nonce,
            kind,
            payload: vec![0; 4],
            gas_limit,
            gas_price,
            signature: vec![],
        };
        tx.signature = kp.sign(&MockScheme, &tx.signing_bytes());
        tx
    };
    let register = sealed(
        &device,
        0,
        TxKind::ContractCall {
            method: method::REGISTER,
            args: 1u32.to_be_bytes().to_vec(),
        },
        200,
        1,
    );
    apply_tx(&mut state, &register, &env, &ctx).map_err(|e| e.to_string())?;

    // Submit needs 21 + 4 + 10 = 35 gas; allow only 30 at price 3.
    let (limit, price) = (30u64, 3u64);
    let call = sealed(
        &device,
        1,
        TxKind::ContractCall {
            method: method::SUBMIT_DATA,
            args: vec![],
        },
        limit,
        price,
    );
    let digest = state.contract.digest();
    let credited = state.balance(&producer);
    let r = apply_tx(&mut state, &call, &env, &ctx).map_err(|e| e.to_string())?;
    ensure!(
        r.status == TxStatus::Reverted(RevertReason::OutOfGas),
        "status {:?}",
        r.status
    );
    ensure!(state.contract.digest() == digest, "contract state changed");
    let gain = state.balance(&producer) - credited;
    ensure!(
        gain == (limit * price) as u128,
        "producer gained {gain}, expected {}",
        limit * price
    );
    Ok(format!(
        "contract digest unchanged, producer credited {gain} = {limit} x {price}"
    ))
}

fn conservation() -> Outcome {
    let mut report = Vec::new();
    for name in ["conservation-pow", "conservation-pos"] {
        let cfg = builtin(name);
        let reward = cfg.consensus.block_reward;
        let seed = cfg.run.seed;
        let start = Instant::now();
        let mut sim = init_sim(cfg, seed).map_err(|e| e.to_string())?;
        sim.run_until(Stop::Height(200)).map_err(|e| e.to_string())?;
        let out = collect(name, seed, &sim).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        ensure!(took < Duration::from_secs(10), "{name} took {took:?}");
        ensure!(out.summary.height == 200, "{name} reached {}", out.summary.height);

        let chain = sim.canonical_chain();
        for sb in &chain {
            let s = &sb.state;
            let lhs: u128 = s.accounts.values().map(|a| a.balance).sum::<u128>()
                + s.contract.penalty_pool
                + s.contract.pending_reimbursements.values().sum::<u128>();
            let rhs = s.genesis_supply
                + reward * sb.height() as u128
                + s.contract.epoch.mint * s.contract.epochs_completed as u128;
            ensure!(lhs == rhs, "{name} height {}: {lhs} != {rhs}", sb.height());
        }
        report.push(format!(
            "{name} {} heights, {} penalties, {:.2}s",
            chain.len(),
            out.summary.penalties.count,
            took.as_secs_f64()
        ));
    }
    Ok(report.join("; "))
}

fn pos_distribution() -> Outcome {
    let stakers = [(Address([1; 20]), 1u64), (Address([2; 20]), 3u64)];
    let set = StakeSet::new(
        stakers
            .iter()
            .map(|&(address, stake)| Staker { address, stake, age: 0 })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let seed = 20_240_601u64;
    let total = BigUint::from(4u8);
    let mut low = 0u64;
    for epoch in 0..10_000u64 {
        let mut pre = seed.to_be_bytes().to_vec();
        pre.extend_from_slice(&epoch.to_be_bytes());
        let r = BigUint::from_bytes_be(&Sha256::digest(&pre)) % &total;
        let oracle = if r < BigUint::from(1u8) { stakers[0].0 } else { stakers[1].0 };
        let got = pos_select(&set, seed, epoch).map_err(|e| e.to_string())?;
        ensure!(got == oracle, "epoch {epoch}: selection differs from oracle");
        low += u64::from(got == stakers[0].0);
    }
    let p_low = low as f64 / 100.0;
    let p_high = 100.0 - p_low;
    ensure!((p_low - 25.0).abs() <= 3.0, "stake 1 selected {p_low:.2}%");
    ensure!((p_high - 75.0).abs() <= 3.0, "stake 3 selected {p_high:.2}%");
    Ok(format!("{p_low:.2}% / {p_high:.2}% over 10000 epochs"))
}

fn quorum() -> Outcome {
    let mut checked = 0;
    for n in 1..=30u64 {
        for votes in 0..=n {
            let expect = Ratio::from_integer(votes) > Ratio::new(2 * n, 3);
            let got = finality_check(votes, n).map_err(|e| e.to_string())? == Finality::Final;
            ensure!(got == expect, "votes {votes} of {n}: got {got}");
            checked += 1;
        }
    }
    Ok(format!("{checked} (votes, n) pairs agree"))
}

fn determinism(tmp: &Path) -> Outcome {
    let a = run(&tmp.join("a"), "fig4")?.0.join("chain.json");
    let b = run(&tmp.join("b"), "fig4")?.0.join("chain.json");
    let bytes = fs::read(&a).unwrap();
    ensure!(bytes == fs::read(&b).unwrap(), "chain.json differs between runs");
    let chain = a.to_str().unwrap();
    ensure!(exit_code(&["replay", "--chain", chain]) == 0, "replay failed");
    ensure!(exit_code(&["validate", "--chain", chain]) == 0, "validate failed");

    // One hex digit in a header field, a link and a signature.
    let text = String::from_utf8(bytes.clone()).unwrap();
    let targets = [("\"tx_root\": \"", 5), ("\"prev_hash\": \"", 7), ("\"signature\": \"", 3)];
    for (key, nth) in targets {
        let at = text.match_indices(key).nth(nth).ok_or("field not found")?.0 + key.len() + 3;
        let mut mutated = bytes.clone();
        mutated[at] = if mutated[at] == b'a' { b'b' } else { b'a' };
        let path = tmp.join("mutated.json");
        fs::write(&path, &mutated).unwrap();
        let code = exit_code(&["validate", "--chain", path.to_str().unwrap()]);
        ensure!(code == 4, "mutating {key} #{nth} gave exit {code}");
    }
    Ok(format!("{} identical bytes, replay 0, mutations exit 4", bytes.len()))
}

fn partition() -> Outcome {
    let cfg = builtin("partition");
    let heal = cfg.latency.partitions[0].to_tick;
    let seed = cfg.run.seed;
    let mut sim = init_sim(cfg, seed).map_err(|e| e.to_string())?;
    while sim.now() < heal {
        ensure!(sim.step().map_err(|e| e.to_string())?, "queue ran dry");
    }
    let top = |sim: &Sim| sim.edges().map(|e| e.height()).max().unwrap_or(0);
    let at_heal = top(&sim);
    let common = sim.edges().map(|e| e.height()).min().unwrap_or(0);
    let branches: HashSet<_> = sim.edges().map(|e| e.canonical()[common as usize]).collect();
    ensure!(branches.len() > 1, "no fork at the heal: the partition did not split the miners");
    while sim.tips().len() > 1 {
        ensure!(sim.step().map_err(|e| e.to_string())?, "queue ran dry");
    }
    let (at_join, joined_tick) = (top(&sim), sim.now());
    ensure!(at_join - at_heal <= 2, "converged {} blocks after heal", at_join - at_heal);
    let agreed = sim.canonical_chain();
    sim.run_until(Stop::Height(30)).map_err(|e| e.to_string())?;
    for e in sim.edges() {
        for sb in &agreed {
            ensure!(e.canonical()[sb.height() as usize] == sb.hash, "agreed history rewritten");
        }
    }
    Ok(format!(
        "forked at height {common}, healed at tick {heal} (height {at_heal}), single tip at tick {joined_tick} (height {at_join})"
    ))
}

fn main() -> ExitCode {
    let tmp = TempDir::new().expect("temp dir");
    let t = tmp.path();
    let criteria: [(&str, Check); 10] = [
        ("fig3 gas shape", Box::new(|| fig3_shape(&t.join("c1")))),
        ("fig4 penalty and reimbursement", Box::new(|| fig4_reimbursement(&t.join("c2")))),
        ("first-migration surcharge", Box::new(|| surcharge(&t.join("c3")))),
        ("version gating", Box::new(|| version_gating(&t.join("c4")))),
        ("out-of-gas semantics", Box::new(out_of_gas)),
        ("conservation pow/pos", Box::new(conservation)),
        ("pos 1:3 distribution", Box::new(pos_distribution)),
        ("finality quorum", Box::new(quorum)),
        ("determinism and replay", Box::new(|| determinism(&t.join("c9")))),
        ("partition convergence", Box::new(partition)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>())));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
