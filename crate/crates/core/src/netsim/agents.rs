//! Scripted behaviour of customers and the admin.

use crate::client::{ClientHandle, Query, QueryValue};
use crate::contract::{encode_register, encode_report, MigrateParams, QuotaStatus, RevertReason, TxStatus};
use crate::ledger::{method, Address, Digest256, TxKind};

use super::config::CustomerParams;
use super::sim::Sim;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Unregistered,
    Registering,
    Active,
    Downloading { version: u32, retry_at: u64 },
    Downloaded { version: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Watch {
    Register,
    Submit,
    Update,
    Report,
}

#[derive(Debug)]
pub(crate) struct CustomerAgent {
    pub id: usize,
    handle: ClientHandle,
    params: CustomerParams,
    phase: Phase,
    firmware: u32,
    submits: u64,
    watched: Vec<(Digest256, Watch)>,
    offender: Option<Address>,
    report_pending: bool,
    repository: Option<usize>,
}

impl CustomerAgent {
    pub fn new(
        id: usize,
        handle: ClientHandle,
        params: CustomerParams,
        firmware: u32,
        offender: Option<Address>,
        repository: Option<usize>,
    ) -> Self {
        CustomerAgent {
            id,
            handle,
            params,
            phase: Phase::Unregistered,
            firmware,
            submits: 0,
            watched: Vec::new(),
            offender,
            report_pending: false,
            repository,
        }
    }

    pub fn period(&self) -> u64 {
        self.params.submit_period
    }

    fn send(&mut self, sim: &mut Sim, kind: TxKind, payload: Vec<u8>, watch: Watch) -> bool {
        let (gas_limit, gas_price) = (self.params.gas_limit, self.params.gas_price);
        match self.handle.submit(sim, kind, payload, gas_limit, gas_price) {
            Ok(hash) => {
                self.watched.push((hash, watch));
                true
            }
            Err(_) => false,
        }
    }

    fn poll(&mut self, sim: &mut Sim) {
        let watched = std::mem::take(&mut self.watched);
        for (hash, watch) in watched {
            let status = self.handle.get_receipt(sim, &hash);
            let Some(receipt) = status.receipt() else {
                if status == crate::client::ReceiptStatus::Pending {
                    self.watched.push((hash, watch));
                } else {
                    match watch {
                        Watch::Register => self.phase = Phase::Unregistered,
                        Watch::Report => self.report_pending = false,
                        Watch::Submit | Watch::Update => {}
                    }
                }
                continue;
            };
            match watch {
                Watch::Register => {
                    self.phase = match receipt.status {
                        TxStatus::Success | TxStatus::Reverted(RevertReason::AlreadyRegistered) => {
                            Phase::Active
                        }
                        TxStatus::Reverted(_) => Phase::Unregistered,
                    };
                }
                Watch::Submit => {
                    let required = receipt.events.iter().find_map(|e| match e {
                        crate::contract::Event::UpdateRequired { url, version } => {
                            Some((url.clone(), *version))
                        }
                        _ => None,
                    });
                    if let Some((url, version)) = required {
                        if version > self.firmware && self.phase == Phase::Active {
                            self.begin_download(sim, version, &url);
                        }
                    }
                }
                Watch::Update => {}
                Watch::Report => self.report_pending = false,
            }
        }
    }

    fn begin_download(&mut self, sim: &mut Sim, version: u32, url: &str) {
        let Some(repo) = self.repository else {
            sim.note(self.id, "DownloadUnavailable", format!("version={version} url={url}"));
            return;
        };
        let rtt = sim.request_download(self.id, repo, version, url);
        self.phase = Phase::Downloading {
            version,
            retry_at: sim.now() + rtt + self.params.submit_period,
        };
    }

    pub fn finish_download(&mut self, sim: &mut Sim, version: u32) {
        if matches!(self.phase, Phase::Downloading { version: v, .. } if v == version) {
            self.phase = Phase::Downloaded { version };
            self.try_apply_update(sim, version);
        }
    }

    fn try_apply_update(&mut self, sim: &mut Sim, version: u32) {
        let kind = TxKind::ContractCall {
            method: method::APPLY_UPDATE,
            args: Vec::new(),
        };
        if self.send(sim, kind, Vec::new(), Watch::Update) {
            self.firmware = version;
            self.phase = Phase::Active;
        }
    }

    fn payload(&self) -> Vec<u8> {
        let seed = self.submits.to_be_bytes();
        (0..self.params.payload_size).map(|i| seed[i % 8]).collect()
    }

    pub fn step(&mut self, sim: &mut Sim) {
        self.poll(sim);
        match self.phase {
            Phase::Unregistered => {
                let kind = TxKind::ContractCall {
                    method: method::REGISTER,
                    args: encode_register(self.firmware),
                };
                if self.send(sim, kind, Vec::new(), Watch::Register) {
                    self.phase = Phase::Registering;
                }
                return;
            }
            Phase::Registering => return,
            Phase::Active => {
                if self.params.max_submits.is_none_or(|max| self.submits < max) {
                    let kind = TxKind::ContractCall {
                        method: method::SUBMIT_DATA,
                        args: Vec::new(),
                    };
                    let payload = self.payload();
                    if self.send(sim, kind, payload, Watch::Submit) {
                        self.submits += 1;
                    }
                }
            }
            Phase::Downloading { version, retry_at } => {
                if sim.now() >= retry_at {
                    let url = sim.best_state(self.handle.node()).contract.update_url.clone();
                    self.begin_download(sim, version, &url);
                }
            }
            Phase::Downloaded { version } => self.try_apply_update(sim, version),
        }
        self.maybe_report(sim);
    }

    fn maybe_report(&mut self, sim: &mut Sim) {
        let Some(offender) = self.offender else { return };
        if self.report_pending {
            return;
        }
        let exceeded = matches!(
            self.handle.query(sim, Query::Quota(offender)),
            Ok(QueryValue::Quota(QuotaStatus::Exceeded { .. }))
        );
        let flagged = matches!(
            self.handle.query(sim, Query::Device(offender)),
            Ok(QueryValue::Device(d)) if d.flagged
        );
        if exceeded && !flagged {
            let kind = TxKind::ContractCall {
                method: method::REPORT_MALICIOUS,
                args: encode_report(&offender),
            };
            self.report_pending = self.send(sim, kind, Vec::new(), Watch::Report);
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum AdminAction {
    Migrate(MigrateParams),
    Permission { target: Address, allow: bool },
}

#[derive(Debug)]
pub(crate) struct AdminAgent {
    pub handle: ClientHandle,
    pub gas_limit: u64,
    pub gas_price: u64,
    /// `(tick, action)` sorted by tick.
    pub actions: Vec<(u64, AdminAction)>,
}

impl AdminAgent {
    pub fn act(&mut self, sim: &mut Sim, index: usize) {
        let kind = match &self.actions[index].1 {
            AdminAction::Migrate(params) => TxKind::Migrate {
                params: params.encode(),
            },
            AdminAction::Permission { target, allow } => TxKind::PermissionUpdate {
                target: *target,
                allow: *allow,
            },
        };
        // Drops are recorded by the simulator.
        let _ = self
            .handle
            .submit(sim, kind, Vec::new(), self.gas_limit, self.gas_price);
    }
}
