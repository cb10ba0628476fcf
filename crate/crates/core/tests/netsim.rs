use std::collections::BTreeMap;

use edgechain::artifact::{run_scenario, to_json};
use edgechain::client::{create_account, ClientHandle};
use edgechain::ledger::{method, Address, TxError, TxKind};
use edgechain::netsim::{init_sim, DropReason, ScenarioError, Sim, SimConfig, Stop};
use edgechain::scenarios::load_builtin;

fn config(json: &str) -> SimConfig {
    SimConfig::from_json(json).expect("test scenario parses")
}

fn builtin(name: &str) -> SimConfig {
    load_builtin(name).expect("builtin exists").expect("builtin valid")
}

/// Admin, one miner and nothing else.
const QUIET: &str = r#"{
  "consensus": { "mode": "pow", "difficulty": 4 },
  "nodes": [
    { "name": "admin", "kind": "admin", "balance": 10000 },
    { "name": "edge", "kind": "edge_server" },
    { "name": "client", "kind": "update_repository", "balance": 1000 }
  ],
  "run": { "max_blocks": 20 }
}"#;

mod init {
    use super::*;

    #[test]
    fn minimal_starts_at_genesis_with_three_accounts() {
        let sim = init_sim(builtin("minimal"), 7).unwrap();
        let edge = sim.node_id("edge").unwrap();
        assert_eq!(sim.height(edge), 0);
        assert_eq!(sim.now(), 0);
        let state = sim.best_state(edge);
        assert_eq!(state.accounts.len(), 3);
        assert_eq!(state.genesis_supply, 10_500);
        assert!(!state.contract.initialized);
        assert_eq!(sim.tips().len(), 1);
    }

    #[test]
    fn shared_address_is_rejected() {
        let cfg = config(
            r#"{
              "consensus": { "mode": "pow" },
              "nodes": [
                { "name": "admin", "kind": "admin" },
                { "name": "edge", "kind": "edge_server" },
                { "name": "d1", "kind": "customer", "seed": "same" },
                { "name": "d2", "kind": "customer", "seed": "same" }
              ]
            }"#,
        );
        assert!(matches!(init_sim(cfg, 1), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn no_miner_is_rejected() {
        let cfg = config(
            r#"{
              "consensus": { "mode": "pow" },
              "nodes": [
                { "name": "admin", "kind": "admin" },
                { "name": "edge", "kind": "edge_server", "edge": { "mining": false } }
              ]
            }"#,
        );
        let err = init_sim(cfg, 1).err().unwrap();
        assert!(err.to_string().contains("no mining edge server"), "{err}");
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let err = SimConfig::from_json(r#"{"consensus":{"mode":"pow"},"nodes":[],"extra":1}"#);
        assert!(matches!(err, Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn stake_without_mining_is_rejected_under_pos() {
        let cfg = config(
            r#"{
              "consensus": { "mode": "pos" },
              "nodes": [
                { "name": "admin", "kind": "admin", "stake": 5 },
                { "name": "edge", "kind": "edge_server", "stake": 5 }
              ]
            }"#,
        );
        assert!(init_sim(cfg, 1).is_err());
    }
}

mod runs {
    use super::*;

    #[test]
    fn identical_seeds_give_identical_artifacts() {
        for name in ["fig4", "partition"] {
            let a = run_scenario(name, builtin(name), 7, None).unwrap();
            let b = run_scenario(name, builtin(name), 7, None).unwrap();
            assert_eq!(to_json(&a.chain), to_json(&b.chain));
            assert_eq!(to_json(&a.summary), to_json(&b.summary));
            assert_eq!(a.rows, b.rows);
        }
    }

    #[test]
    fn zero_blocks_is_just_genesis() {
        let out = run_scenario("minimal", builtin("minimal"), 7, Some(0)).unwrap();
        assert_eq!(out.chain.blocks.len(), 1);
        assert_eq!(out.summary.height, 0);
        assert_eq!(out.summary.ticks, 0);
        assert_eq!(out.summary.conservation.expected, out.summary.conservation.actual);
    }

    #[test]
    fn one_block_per_interval_with_a_single_miner() {
        let mut sim = init_sim(config(QUIET), 1).unwrap();
        let edge = sim.node_id("edge").unwrap();
        for k in 1..=15u64 {
            sim.run_until(Stop::Tick(10 * k + 5)).unwrap();
            assert_eq!(sim.height(edge), k);
        }
    }

    #[test]
    fn empty_blocks_pay_only_the_reward() {
        let mut sim = init_sim(config(QUIET), 1).unwrap();
        let edge = sim.node_id("edge").unwrap();
        sim.run_until(Stop::Height(6)).unwrap();
        let chain = sim.canonical_chain();
        let miner = chain[1].block.header.producer;
        // Block 1 carries the admin's initial migration; the rest are empty.
        assert_eq!(chain[1].block.transactions.len(), 1);
        for pair in chain[1..].windows(2) {
            assert!(pair[1].block.transactions.is_empty());
            assert_eq!(
                pair[1].state.balance(&miner),
                pair[0].state.balance(&miner) + 50
            );
        }
        assert_eq!(sim.best_state(edge).balance(&miner), 50 * 6 + 721);
    }

    #[test]
    fn pos_with_one_staker_always_selects_it() {
        let cfg = config(
            r#"{
              "consensus": { "mode": "pos" },
              "nodes": [
                { "name": "admin", "kind": "admin", "balance": 10000 },
                { "name": "edge", "kind": "edge_server", "stake": 10 },
                { "name": "device", "kind": "customer", "balance": 3000 }
              ],
              "run": { "max_blocks": 25 }
            }"#,
        );
        let mut sim = init_sim(cfg, 3).unwrap();
        let edge = sim.node_id("edge").unwrap();
        sim.run_until(Stop::Height(25)).unwrap();
        assert_eq!(sim.height(edge), 25);
        assert_eq!(sim.stats().not_selected, 0);
        let addr = sim.edge(edge).unwrap().address;
        assert!(sim.canonical_chain()[1..]
            .iter()
            .all(|b| b.block.header.producer == addr));
    }

    #[test]
    fn pos_miners_skip_slots_they_do_not_hold() {
        let mut sim = init_sim(builtin("conservation-pos"), 7).unwrap();
        sim.run_until(Stop::Height(40)).unwrap();
        assert!(sim.stats().not_selected > 0);
        // Let the last block propagate.
        sim.run_until(Stop::Tick(sim.now() + 3)).unwrap();
        assert_eq!(sim.tips().len(), 1);
    }
}

mod invariants {
    use super::*;

    fn conservation_everywhere(name: &str) {
        let cfg = builtin(name);
        let reward = cfg.consensus.block_reward;
        let out = run_scenario(name, cfg.clone(), 7, Some(200)).unwrap();
        assert_eq!(out.summary.height, 200);
        let mut sim = init_sim(cfg, 7).unwrap();
        sim.run_until(Stop::Height(200)).unwrap();
        let chain = sim.canonical_chain();
        assert_eq!(chain.len(), 201);
        for sb in &chain {
            let s = &sb.state;
            // Independent sum over accounts rather than the state's own helper.
            let balances: u128 = s.accounts.values().map(|a| a.balance).sum();
            let pending: u128 = s.contract.pending_reimbursements.values().sum();
            let expected = s.genesis_supply
                + reward * sb.height() as u128
                + s.contract.epoch.mint * s.contract.epochs_completed as u128;
            assert_eq!(
                balances + s.contract.penalty_pool + pending,
                expected,
                "{name} at height {}",
                sb.height()
            );
        }
        assert!(out.summary.penalties.count > 0);
        assert!(out.summary.epochs_completed >= 9);
    }

    #[test]
    fn conservation_at_every_height_pow() {
        conservation_everywhere("conservation-pow");
    }

    #[test]
    fn conservation_at_every_height_pos() {
        conservation_everywhere("conservation-pos");
    }

    #[test]
    fn nonces_are_consecutive_and_senders_permitted() {
        let mut sim = init_sim(builtin("conservation-pow"), 7).unwrap();
        sim.run_until(Stop::Height(200)).unwrap();
        let chain = sim.canonical_chain();
        let mut next: BTreeMap<Address, u64> = BTreeMap::new();
        for pair in chain.windows(2) {
            let parent = &pair[0].state;
            for tx in &pair[1].block.transactions {
                let n = next.entry(tx.sender).or_insert(0);
                assert_eq!(tx.nonce, *n);
                *n += 1;
                assert!(
                    tx.sender == parent.contract.admin || parent.allowlist.permits(&tx.sender),
                    "unpermitted sender at height {}",
                    pair[1].height()
                );
            }
        }
        // The revoked sensor did get dropped at admission after revocation.
        assert!(sim.stats().drops_by_reason.get("NotAllowlisted").copied().unwrap_or(0) > 0);
    }
}

mod admission {
    use super::*;

    fn quiet() -> (Sim, ClientHandle) {
        let mut sim = init_sim(config(QUIET), 1).unwrap();
        sim.run_until(Stop::Height(1)).unwrap();
        let (keys, _) = create_account(b"client").unwrap();
        let handle = ClientHandle::bind(&sim, keys, "edge").unwrap();
        (sim, handle)
    }

    fn register() -> TxKind {
        TxKind::ContractCall {
            method: method::REGISTER,
            args: 1u32.to_be_bytes().to_vec(),
        }
    }

    #[test]
    fn valid_submission_is_pending_then_confirmed() {
        let (mut sim, mut client) = quiet();
        let hash = client.submit(&mut sim, register(), vec![], 100, 1).unwrap();
        assert!(matches!(
            client.get_receipt(&sim, &hash),
            edgechain::client::ReceiptStatus::Pending
        ));
        sim.run_until(Stop::Height(2)).unwrap();
        let status = client.get_receipt(&sim, &hash);
        assert!(status.receipt().unwrap().status.is_success());
        assert_eq!(sim.stats().drop_count(), 0);
    }

    #[test]
    fn revoked_sender_is_dropped_and_counted() {
        let cfg = config(
            r#"{
              "consensus": { "mode": "pow", "difficulty": 4 },
              "nodes": [
                { "name": "admin", "kind": "admin", "balance": 10000,
                  "admin": { "permissions": [{ "at_tick": 12, "target": "client", "allow": false }] } },
                { "name": "edge", "kind": "edge_server" },
                { "name": "client", "kind": "update_repository", "balance": 1000 }
              ]
            }"#,
        );
        let mut sim = init_sim(cfg, 1).unwrap();
        sim.run_until(Stop::Height(3)).unwrap();
        let (keys, addr) = create_account(b"client").unwrap();
        assert!(!sim.best_state(sim.node_id("edge").unwrap()).permits(&addr));
        let mut client = ClientHandle::bind(&sim, keys, "edge").unwrap();
        let before = sim.stats().drop_count();
        let err = client.submit(&mut sim, register(), vec![], 100, 1).unwrap_err();
        assert_eq!(err, edgechain::client::ClientError::Dropped(DropReason::NotAllowlisted));
        assert_eq!(sim.stats().drop_count(), before + 1);
        assert_eq!(sim.stats().drops_by_node["client"], 1);
        let row = sim.sim_rows().last().unwrap();
        assert_eq!((row.event.as_str(), row.detail.as_str()), ("Dropped", "NotAllowlisted"));
    }

    #[test]
    fn duplicate_sender_nonce_is_dropped() {
        let (mut sim, client) = quiet();
        let (keys, addr) = create_account(b"client").unwrap();
        let edge = client.node();
        let mut tx = edgechain::ledger::Transaction {
            sender: addr,
            nonce: 0,
            kind: register(),
            payload: vec![],
            gas_limit: 100,
            gas_price: 1,
            signature: vec![],
        };
        tx.signature = keys.sign(&edgechain::ledger::MockScheme, &tx.signing_bytes());
        sim.submit_tx(edge, tx.clone()).unwrap();
        assert_eq!(sim.submit_tx(edge, tx.clone()), Err(DropReason::Duplicate));
        // Same (sender, nonce) with a different body is still a duplicate.
        tx.gas_limit = 90;
        tx.signature = keys.sign(&edgechain::ledger::MockScheme, &tx.signing_bytes());
        assert_eq!(sim.submit_tx(edge, tx), Err(DropReason::Duplicate));
        assert_eq!(sim.stats().drops_by_reason["Duplicate"], 2);
    }

    #[test]
    fn unfunded_customer_is_dropped_for_funds() {
        let cfg = config(
            r#"{
              "consensus": { "mode": "pow", "difficulty": 4 },
              "nodes": [
                { "name": "admin", "kind": "admin", "balance": 10000 },
                { "name": "edge", "kind": "edge_server" },
                { "name": "pauper", "kind": "customer", "customer": { "max_submits": 2 } }
              ]
            }"#,
        );
        let mut sim = init_sim(cfg, 1).unwrap();
        sim.run_until(Stop::Height(5)).unwrap();
        assert!(sim.stats().drops_by_reason["InsufficientFunds"] > 0);
        assert!(sim.sim_rows().iter().all(|r| r.node == "pauper"));
        let chain = sim.canonical_chain();
        let pauper = create_account(b"pauper").unwrap().1;
        assert!(chain
            .iter()
            .flat_map(|b| &b.block.transactions)
            .all(|tx| tx.sender != pauper));
        assert_eq!(
            client_error_of(&mut sim, "pauper"),
            Some(TxError::InsufficientFunds)
        );
    }

    fn client_error_of(sim: &mut Sim, seed: &str) -> Option<TxError> {
        let (keys, _) = create_account(seed.as_bytes()).unwrap();
        let mut c = ClientHandle::bind(sim, keys, "edge").unwrap();
        c.submit(sim, register(), vec![], 100, 1).err()?.tx_error()
    }
}

mod partition {
    use super::*;

    #[test]
    fn forks_during_split_and_converges_after_heal() {
        let mut sim = init_sim(builtin("partition"), 7).unwrap();
        let mut split = false;
        while sim.now() < 125 {
            assert!(sim.step().unwrap());
            if sim.now() > 60 && sim.tips().len() > 1 {
                split = true;
            }
        }
        assert!(split, "partition never produced divergent tips");
        let a = sim.node_id("edge-a").unwrap();
        let b = sim.node_id("edge-b").unwrap();
        assert_ne!(sim.edge(a).unwrap().best(), sim.edge(b).unwrap().best());

        // Tips agree again within two block intervals of the heal.
        while sim.tips().len() > 1 {
            assert!(sim.step().unwrap());
        }
        let healed_at = sim.now();
        assert!(healed_at <= 125 + 20, "converged only at tick {healed_at}");
        assert!(sim.stats().reorgs >= 1);
        let agreed = sim.canonical_chain();

        // Later tips only extend the agreed history.
        sim.run_until(Stop::Height(30)).unwrap();
        for id in [a, b] {
            let edge = sim.edge(id).unwrap();
            for sb in &agreed {
                assert_eq!(edge.canonical()[sb.height() as usize], sb.hash);
            }
        }
    }
}
