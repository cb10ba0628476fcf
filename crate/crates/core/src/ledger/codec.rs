//! Canonical byte encoding for transactions and block headers.
//!
//! Fields are written in declaration order. Integers are big-endian and
//! fixed width, byte strings carry a 4-byte big-endian length prefix, and enum
//! variants are introduced by a one-byte tag.

use super::types::{BlockHeader, ConsensusProof, Transaction, TxKind};

/// Types with a single canonical byte form.
pub trait CanonicalEncode {
    fn canonical_bytes(&self) -> Vec<u8>;
}

impl CanonicalEncode for Transaction {
    /// Sealed form, signature included.
    fn canonical_bytes(&self) -> Vec<u8> {
        encode_tx(self, true)
    }
}

impl CanonicalEncode for BlockHeader {
    fn canonical_bytes(&self) -> Vec<u8> {
        encode_header(self, true)
    }
}

pub fn canonical_encode<T: CanonicalEncode + ?Sized>(item: &T) -> Vec<u8> {
    item.canonical_bytes()
}

pub(crate) fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("byte field longer than u32::MAX");
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(bytes);
}

pub(crate) fn encode_tx(tx: &Transaction, with_signature: bool) -> Vec<u8> {
    let mut buf = Vec::with_capacity(96 + tx.payload.len() + tx.signature.len());
    buf.extend_from_slice(&tx.sender.0);
    buf.extend_from_slice(&tx.nonce.to_be_bytes());
    buf.push(tx.kind.tag());
    match &tx.kind {
        TxKind::Transfer { to, amount } => {
            buf.extend_from_slice(&to.0);
            buf.extend_from_slice(&amount.to_be_bytes());
        }
        TxKind::ContractCall { method, args } => {
            buf.push(*method);
            put_bytes(&mut buf, args);
        }
        TxKind::Migrate { params } => put_bytes(&mut buf, params),
        TxKind::PermissionUpdate { target, allow } => {
            buf.extend_from_slice(&target.0);
            buf.push(u8::from(*allow));
        }
    }
    put_bytes(&mut buf, &tx.payload);
    buf.extend_from_slice(&tx.gas_limit.to_be_bytes());
    buf.extend_from_slice(&tx.gas_price.to_be_bytes());
    if with_signature {
        put_bytes(&mut buf, &tx.signature);
    }
    buf
}

pub(crate) fn encode_header(header: &BlockHeader, with_proof: bool) -> Vec<u8> {
    let mut buf = Vec::with_capacity(112);
    buf.extend_from_slice(&header.height.to_be_bytes());
    buf.extend_from_slice(&header.prev_hash.0);
    buf.extend_from_slice(&header.tx_root.0);
    buf.extend_from_slice(&header.timestamp.to_be_bytes());
    buf.extend_from_slice(&header.producer.0);
    if with_proof {
        match &header.consensus_proof {
            ConsensusProof::Pow(nonce) => {
                buf.push(0);
                buf.extend_from_slice(&nonce.to_be_bytes());
            }
            ConsensusProof::Pos(sig) => {
                buf.push(1);
                put_bytes(&mut buf, sig);
            }
        }
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Address, Digest256};

    fn zero_tx() -> Transaction {
        Transaction {
            sender: Address::ZERO,
            nonce: 0,
            kind: TxKind::Transfer {
                to: Address::ZERO,
                amount: 0,
            },
            payload: vec![],
            gas_limit: 0,
            gas_price: 0,
            signature: vec![],
        }
    }

    #[test]
    fn zero_transfer_length_matches_field_widths() {
        // sender 20 + nonce 8 + tag 1 + to 20 + amount 16 + payload len 4
        // + gas_limit 8 + gas_price 8 = 85; sealed adds the 4-byte signature length.
        let tx = zero_tx();
        assert_eq!(tx.signing_bytes().len(), 85);
        assert_eq!(canonical_encode(&tx).len(), 89);
        assert!(canonical_encode(&tx).iter().all(|b| *b == 0));
    }

    #[test]
    fn nonce_changes_encoding() {
        let mut a = zero_tx();
        let mut b = zero_tx();
        a.nonce = 1;
        b.nonce = 2;
        assert_ne!(canonical_encode(&a), canonical_encode(&b));
    }

    #[test]
    fn encoding_is_deterministic() {
        let tx = zero_tx();
        assert_eq!(canonical_encode(&tx), canonical_encode(&tx));
    }

    #[test]
    fn signature_only_in_sealed_form() {
        let mut tx = zero_tx();
        let unsigned = tx.signing_bytes();
        tx.signature = vec![0xab; 32];
        assert_eq!(tx.signing_bytes(), unsigned);
        assert_ne!(canonical_encode(&tx), {
            let mut t = tx.clone();
            t.signature.clear();
            canonical_encode(&t)
        });
    }

    #[test]
    fn header_layout() {
        let h = BlockHeader {
            height: 0x0102,
            prev_hash: Digest256([7; 32]),
            tx_root: Digest256([9; 32]),
            timestamp: 5,
            producer: Address([3; 20]),
            consensus_proof: ConsensusProof::Pow(0xff),
        };
        let bytes = canonical_encode(&h);
        assert_eq!(bytes.len(), 8 + 32 + 32 + 8 + 20 + 1 + 8);
        assert_eq!(&bytes[..8], &[0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(bytes[100], 0);
        assert_eq!(bytes[108], 0xff);
        assert_eq!(h.signing_bytes(), bytes[..100].to_vec());
    }
}
