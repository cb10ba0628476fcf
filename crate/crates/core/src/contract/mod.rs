//! The device-management contract as a gas-metered state machine.

mod args;
mod block;
mod engine;
mod gas;
mod receipt;
mod state;

pub use args::{decode_register, decode_report, encode_register, encode_report, MigrateParams};
pub use block::{apply_block, apply_tx, finalize_block, BlockExecError, ExecEnv, TxRejection};
pub use engine::{execute, ExecContext};
pub use gas::{GasMeter, GasSchedule};
pub use receipt::{Event, Receipt, RevertReason, TxStatus};
pub use state::{
    Action, ActivityEntry, Allowlist, ConservationError, ContractState, DeviceRecord, EpochConfig,
    QuotaConfig, QuotaStatus, WorldState,
};
