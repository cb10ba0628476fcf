use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgechain::artifact::{self, ArtifactError};
use edgechain::netsim::{SimConfig, SimError};
use edgechain::scenarios;

const SCENARIO_HELP: &str = "\
Scenario file (JSON, strict: unknown keys are errors). Defaults:
  consensus      mode (required: pow | pos), difficulty 16, block_reward 50,
                 target_block_interval 10
  contract       version 1, update_url \"repo://firmware/v1\", block_interval 10,
                 epoch_length 20, epoch_mint 200,
                 quota {window_blocks 10, max_share_percent 40,
                        min_active_senders 2, penalty_rate 2*base_tx,
                        reporter_share_percent 50}
  gas_schedule   base_tx 21, per_payload_byte 1, register 50, submit_data 10,
                 report_malicious 30, distribute 100, migrate 500,
                 init_surcharge 200, permission_update 15
  nodes          (required) [{name, kind: customer | edge_server |
                 update_repository | admin, seed (= name), balance 0, stake 0,
                 customer {submit_period 10, max_submits unlimited, start_tick 0,
                   firmware_version = contract.version, bind_to first edge server,
                   payload_size 4, gas_limit 100, gas_price 1, report_against},
                 edge {mining true, offset 0},
                 admin {bind_to, gas_limit 1000, gas_price 1,
                   migrations [{at_tick, version, update_url, block_interval}],
                   permissions [{at_tick, target, allow}]}}]
  allowlist      \"all\" or a list of node names / hex addresses
  latency        default 1, links [{a, b, delay}],
                 partitions [{from_tick, to_tick, groups}]
  run            max_blocks 60, seed 7, max_block_txs 100, max_ticks derived

Exit codes: 0 ok, 2 invalid scenario or unreadable input, 3 internal
invariant violation, 4 chain validation failure, 5 replay digest mismatch.";

#[derive(Parser)]
#[command(name = "edgechain", version, about = "Edge-computing blockchain simulator", after_long_help = SCENARIO_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv, chain.json and summary.json.
    Run {
        /// Scenario file, or the name of a built-in scenario.
        #[arg(long)]
        scenario: String,
        /// Simulation seed. Falls back to EDGECHAIN_SEED, then to the scenario's run.seed.
        #[arg(long, env = "EDGECHAIN_SEED")]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Stop at this height instead of the scenario's run.max_blocks.
        #[arg(long)]
        blocks: Option<u64>,
    },
    /// Check links, transaction roots and consensus proofs of a chain.json.
    Validate {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Re-execute a chain.json from genesis and compare state digests.
    Replay {
        #[arg(long)]
        chain: PathBuf,
    },
    /// Print the built-in scenarios.
    ListScenarios,
}

fn load_scenario(arg: &str) -> Result<(String, SimConfig), String> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(loaded) = scenarios::load_builtin(arg) {
            return loaded.map(|c| (arg.to_string(), c)).map_err(|e| e.to_string());
        }
    }
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {arg}: {e}"))?;
    let config = SimConfig::from_json(&text).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    let name = path
        .file_stem()
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, config))
}

fn run(scenario: &str, seed: Option<u64>, out: &Path, blocks: Option<u64>) -> ExitCode {
    let (name, config) = match load_scenario(scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let seed = seed.unwrap_or(config.run.seed);
    let output = match artifact::run_scenario(&name, config, seed, blocks) {
        Ok(o) => o,
        Err(SimError::Scenario(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = artifact::write_outputs(out, &output) {
        eprintln!("error: writing {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    let s = &output.summary;
    println!(
        "{name}: height {} at tick {}, tip {}, {} rows, {} drops",
        s.height,
        s.ticks,
        s.tip,
        output.rows.len(),
        s.drops.total
    );
    ExitCode::SUCCESS
}

fn read_chain(path: &Path) -> Result<artifact::ChainFile, ArtifactError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ArtifactError::Parse(format!("cannot read {}: {e}", path.display())))?;
    artifact::parse_chain(&text)
}

fn check(path: &Path, replay: bool) -> ExitCode {
    let result = read_chain(path).and_then(|file| {
        if replay {
            artifact::replay(&file).map(|d| format!("replay ok: contract digest {d}"))
        } else {
            artifact::validate_file(&file).map(|()| {
                let mix = artifact::tx_mix(&file.blocks);
                format!("valid: height {} {mix:?}", file.footer.height)
            })
        }
    });
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            blocks,
        } => run(&scenario, seed, &out, blocks),
        Command::Validate { chain } => check(&chain, false),
        Command::Replay { chain } => check(&chain, true),
        Command::ListScenarios => {
            for b in scenarios::BUILTINS {
                println!("{:<18} {}", b.name, b.about);
            }
            ExitCode::SUCCESS
        }
    }
}
