//! Pluggable signatures and the deterministic mock scheme used by the simulator.
//!
//! The mock scheme derives `public_key = SHA-256(secret)` and signs with
//! `SHA-256(secret || message)`. It cannot be verified from the public key
//! alone, so verification goes through a [`MockKeyring`] that re-derives the
//! signature from the registered secret. It offers no security.

use std::collections::BTreeMap;

use super::{hash, Address};

pub trait SignatureScheme {
    fn derive_public_key(&self, secret: &[u8]) -> Vec<u8>;
    fn sign(&self, secret: &[u8], message: &[u8]) -> Vec<u8>;
}

/// Verifier-side view of which key belongs to which address.
pub trait SignatureVerifier {
    fn verify(&self, signer: &Address, message: &[u8], signature: &[u8]) -> bool;
    fn public_key(&self, signer: &Address) -> Option<&[u8]>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MockScheme;

impl SignatureScheme for MockScheme {
    fn derive_public_key(&self, secret: &[u8]) -> Vec<u8> {
        hash(secret).0.to_vec()
    }

    fn sign(&self, secret: &[u8], message: &[u8]) -> Vec<u8> {
        let mut buf = Vec::with_capacity(secret.len() + message.len());
        buf.extend_from_slice(secret);
        buf.extend_from_slice(message);
        hash(&buf).0.to_vec()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Keypair {
    secret: Vec<u8>,
    public: Vec<u8>,
    address: Address,
}

impl Keypair {
    pub fn from_secret<S: SignatureScheme>(scheme: &S, secret: &[u8]) -> Self {
        let public = scheme.derive_public_key(secret);
        let address = Address::from_public_key(&public);
        Keypair {
            secret: secret.to_vec(),
            public,
            address,
        }
    }

    pub fn mock(secret: &[u8]) -> Self {
        Self::from_secret(&MockScheme, secret)
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn public_key(&self) -> &[u8] {
        &self.public
    }

    pub fn secret(&self) -> &[u8] {
        &self.secret
    }

    pub fn sign<S: SignatureScheme>(&self, scheme: &S, message: &[u8]) -> Vec<u8> {
        scheme.sign(&self.secret, message)
    }
}

impl std::fmt::Debug for Keypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keypair")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, Default)]
struct MockEntry {
    public: Vec<u8>,
    secret: Vec<u8>,
}

/// Address registry for the mock scheme.
#[derive(Clone, Debug, Default)]
pub struct MockKeyring {
    entries: BTreeMap<Address, MockEntry>,
}

impl MockKeyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, keypair: &Keypair) {
        self.entries.insert(
            keypair.address(),
            MockEntry {
                public: keypair.public_key().to_vec(),
                secret: keypair.secret().to_vec(),
            },
        );
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.entries.contains_key(address)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl SignatureVerifier for MockKeyring {
    fn verify(&self, signer: &Address, message: &[u8], signature: &[u8]) -> bool {
        let Some(entry) = self.entries.get(signer) else {
            return false;
        };
        if MockScheme.derive_public_key(&entry.secret) != entry.public
            || Address::from_public_key(&entry.public) != *signer
        {
            return false;
        }
        MockScheme.sign(&entry.secret, message) == signature
    }

    fn public_key(&self, signer: &Address) -> Option<&[u8]> {
        self.entries.get(signer).map(|e| e.public.as_slice())
    }
}
