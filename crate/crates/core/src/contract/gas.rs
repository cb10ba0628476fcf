use serde::{Deserialize, Serialize};

use super::RevertReason;

/// Gas units charged per operation. Every entry can be overridden from a
/// scenario file; missing keys keep these defaults.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasSchedule {
    pub base_tx: u64,
    pub per_payload_byte: u64,
    pub register: u64,
    pub submit_data: u64,
    pub report_malicious: u64,
    pub distribute: u64,
    pub migrate: u64,
    pub init_surcharge: u64,
    pub permission_update: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            base_tx: 21,
            per_payload_byte: 1,
            register: 50,
            submit_data: 10,
            report_malicious: 30,
            distribute: 100,
            migrate: 500,
            init_surcharge: 200,
            permission_update: 15,
        }
    }
}

impl GasSchedule {
    /// Base cost plus the per-byte payload charge.
    pub fn intrinsic(&self, payload_len: usize) -> u64 {
        self.base_tx
            .saturating_add(self.per_payload_byte.saturating_mul(payload_len as u64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GasMeter {
    limit: u64,
    used: u64,
}

impl GasMeter {
    pub fn new(limit: u64) -> Self {
        GasMeter { limit, used: 0 }
    }

    /// Fails without consuming anything when `amount` would exceed the limit.
    pub fn charge(&mut self, amount: u64) -> Result<(), RevertReason> {
        match self.used.checked_add(amount) {
            Some(total) if total <= self.limit => {
                self.used = total;
                Ok(())
            }
            _ => Err(RevertReason::OutOfGas),
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }
}
