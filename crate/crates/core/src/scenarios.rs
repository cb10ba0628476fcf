//! Scenarios shipped with the simulator.

use crate::netsim::{ScenarioError, SimConfig};

pub struct Builtin {
    pub name: &'static str,
    pub about: &'static str,
    pub json: &'static str,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "fig3",
        about: "one device, 50 submits, distribution every 20 blocks",
        json: include_str!("../scenarios/fig3.json"),
    },
    Builtin {
        name: "fig4",
        about: "an offender at 4x the reporter's rate, reported and penalized",
        json: include_str!("../scenarios/fig4.json"),
    },
    Builtin {
        name: "upgrade",
        about: "mid-run migration to firmware v2; devices download and re-apply",
        json: include_str!("../scenarios/upgrade.json"),
    },
    Builtin {
        name: "partition",
        about: "two PoW miners split between ticks 45 and 125, then heal",
        json: include_str!("../scenarios/partition.json"),
    },
    Builtin {
        name: "conservation-pow",
        about: "200 PoW blocks with penalties, an upgrade and a revocation",
        json: include_str!("../scenarios/conservation-pow.json"),
    },
    Builtin {
        name: "conservation-pos",
        about: "the same workload under PoS with stakes 100 and 300",
        json: include_str!("../scenarios/conservation-pos.json"),
    },
    Builtin {
        name: "minimal",
        about: "admin, one edge server, one device",
        json: include_str!("../scenarios/minimal.json"),
    },
];

pub fn builtin(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}

/// Parses and validates a built-in scenario.
pub fn load_builtin(name: &str) -> Option<Result<SimConfig, ScenarioError>> {
    builtin(name).map(|b| {
        let cfg = SimConfig::from_json(b.json)?;
        cfg.validate()?;
        Ok(cfg)
    })
}
