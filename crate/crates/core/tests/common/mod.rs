#![allow(dead_code)]

use hashsig_core::lamport::{keygen_from_seed, LamportParams, LamportPrivateKey, LamportPublicKey};
use hashsig_core::primitives::{FamilyKey, FamilyKeys, Purpose, Seed};
use hashsig_core::session::{PeerKey, Role, SessionConfig, SigningKey};

pub fn family() -> FamilyKeys {
    FamilyKeys::from_label(b"integration tests")
}

pub fn seeded_pair(params: LamportParams, keys: &FamilyKeys, tag: u64) -> (LamportPrivateKey, LamportPublicKey) {
    let mut seed = vec![0x5a; 32];
    seed[..8].copy_from_slice(&tag.to_be_bytes());
    keygen_from_seed(params, keys, &Seed::new(seed).unwrap()).unwrap()
}

/// Initiator and responder configurations with fresh Lamport keys.
/// `tag` separates key material between sessions.
pub fn lamport_configs(
    params: LamportParams,
    keys: &FamilyKeys,
    tag: u64,
    mac: bool,
) -> (SessionConfig, SessionConfig) {
    let (isk, ipk) = seeded_pair(params, keys, 2 * tag);
    let (rsk, rpk) = seeded_pair(params, keys, 2 * tag + 1);
    configs_from(keys, (isk, ipk), (rsk, rpk), mac)
}

pub fn configs_from(
    keys: &FamilyKeys,
    initiator: (LamportPrivateKey, LamportPublicKey),
    responder: (LamportPrivateKey, LamportPublicKey),
    mac: bool,
) -> (SessionConfig, SessionConfig) {
    let mac_key = mac.then(|| FamilyKey::new(Purpose::Mac, [0x3c; 32]));
    let i = SessionConfig {
        role: Role::Initiator,
        keys: keys.clone(),
        signing_key: SigningKey::Lamport(initiator.0),
        peer_key: PeerKey::Lamport(responder.1),
        next_public_key: None,
        mac_key: mac_key.clone(),
    };
    let r = SessionConfig {
        role: Role::Responder,
        keys: keys.clone(),
        signing_key: SigningKey::Lamport(responder.0),
        peer_key: PeerKey::Lamport(initiator.1),
        next_public_key: None,
        mac_key,
    };
    (i, r)
}

/// `value` as a `bits`-wide big-endian octet string.
pub fn bits_of(value: u64, bits: usize) -> Vec<u8> {
    (0..bits / 8)
        .map(|k| (value >> (bits - 8 * (k + 1))) as u8)
        .collect()
}
