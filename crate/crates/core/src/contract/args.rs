//! Argument encodings for contract calls and migrations.

use serde::{Deserialize, Serialize};

use crate::ledger::{put_bytes, Address};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigrateParams {
    pub version: u32,
    pub update_url: String,
    pub block_interval: u64,
}

impl MigrateParams {
    /// `version (4) || len-prefixed url || block_interval (8)`.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + self.update_url.len());
        buf.extend_from_slice(&self.version.to_be_bytes());
        put_bytes(&mut buf, self.update_url.as_bytes());
        buf.extend_from_slice(&self.block_interval.to_be_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut r = Reader(bytes);
        let version = u32::from_be_bytes(r.take(4)?.try_into().ok()?);
        let len = u32::from_be_bytes(r.take(4)?.try_into().ok()?) as usize;
        let update_url = String::from_utf8(r.take(len)?.to_vec()).ok()?;
        let block_interval = u64::from_be_bytes(r.take(8)?.try_into().ok()?);
        r.0.is_empty().then_some(MigrateParams {
            version,
            update_url,
            block_interval,
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.0.len() < n {
            return None;
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Some(head)
    }
}

pub fn encode_register(firmware_version: u32) -> Vec<u8> {
    firmware_version.to_be_bytes().to_vec()
}

pub fn decode_register(args: &[u8]) -> Option<u32> {
    Some(u32::from_be_bytes(args.try_into().ok()?))
}

pub fn encode_report(offender: &Address) -> Vec<u8> {
    offender.0.to_vec()
}

pub fn decode_report(args: &[u8]) -> Option<Address> {
    Some(Address(args.try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn migrate_params_round_trip(version: u32, url in ".{0,40}", interval: u64) {
            let p = MigrateParams { version, update_url: url, block_interval: interval };
            prop_assert_eq!(MigrateParams::decode(&p.encode()), Some(p));
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = MigrateParams {
            version: 1,
            update_url: "x".into(),
            block_interval: 3,
        }
        .encode();
        bytes.push(0);
        assert_eq!(MigrateParams::decode(&bytes), None);
        assert_eq!(decode_register(&[0, 1]), None);
    }
}
