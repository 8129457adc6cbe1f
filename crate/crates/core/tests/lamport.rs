mod common;

use hashsig_core::lamport::{
    keygen, keygen_from_seed, seeded_string, LamportParams, LamportPrivateKey, LamportPublicKey, LamportSignature,
};
use hashsig_core::primitives::{call_counts, eval_f, eval_g, prng_expand, prng_range, FamilyKeys, Seed};
use hashsig_core::Error;
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn toy() -> LamportParams {
    LamportParams::new(16, 16).unwrap()
}

#[test]
fn public_key_is_image_of_private_strings() {
    let keys = common::family();
    let params = LamportParams::new(32, 24).unwrap();
    let seed = Seed::new(vec![9; 16]).unwrap();
    let (_, pk) = keygen_from_seed(params, &keys, &seed).unwrap();
    let expansion = prng_expand(&seed, params.private_key_bits()).unwrap();
    for i in 0..params.digest_bits() {
        for bit in 0..2u8 {
            let k = 2 * i + bit as usize;
            let x = &expansion[k * 4..(k + 1) * 4];
            assert_eq!(eval_f(keys.f(), x, 32).unwrap(), pk.y(i, bit));
        }
    }
}

#[test]
fn seeded_keygen_is_deterministic_and_consumes_exact_stream() {
    let keys = common::family();
    let params = LamportParams::new(128, 256).unwrap();
    let seed = Seed::new(vec![1; 32]).unwrap();
    let before = call_counts();
    let (a_sk, a_pk) = keygen_from_seed(params, &keys, &seed).unwrap();
    let used = call_counts().since(&before);
    assert_eq!(used.prng_blocks * 256, 65536);
    let (b_sk, b_pk) = keygen_from_seed(params, &keys, &seed).unwrap();
    assert_eq!(a_pk.to_bytes(), b_pk.to_bytes());
    assert_eq!(&a_sk.to_bytes()[..], &b_sk.to_bytes()[..]);
}

#[test]
fn random_access_string_matches_full_expansion() {
    let params = LamportParams::new(128, 256).unwrap();
    let seed = Seed::new(vec![3; 32]).unwrap();
    let full = prng_expand(&seed, params.private_key_bits()).unwrap();
    // x_1[0] is the third string in the layout.
    assert_eq!(&seeded_string(params, &seed, 1, 0)[..], &full[32..48]);
    assert_eq!(&prng_range(&seed, 32, 16)[..], &full[32..48]);
}

#[test]
fn toy_signature_reveals_seeded_strings() {
    let keys = common::family();
    let seed = Seed::new(vec![7; 8]).unwrap();
    let (mut sk, pk) = keygen_from_seed(toy(), &keys, &seed).unwrap();
    let sig = sk.sign(&keys, b"toy message").unwrap();
    let digest = eval_g(keys.g(), b"toy message", 16).unwrap();
    let expansion = prng_expand(&seed, toy().private_key_bits()).unwrap();
    for (i, bit) in digest.bits().enumerate() {
        let k = 2 * i + bit as usize;
        assert_eq!(sig.chunk(i), &expansion[2 * k..2 * k + 2]);
    }
    assert!(pk.verify(b"toy message", &sig).unwrap());
}

#[test]
fn sign_consumes_key() {
    let keys = common::family();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (mut sk, _) = keygen(toy(), &keys, &mut rng).unwrap();
    sk.sign(&keys, b"a").unwrap();
    assert!(sk.is_used());
    assert!(matches!(sk.sign(&keys, b"b"), Err(Error::KeyAlreadyUsed)));
    assert!(matches!(sk.public_key(&keys), Err(Error::KeyAlreadyUsed)));
    // A used key serializes with its material wiped and stays used.
    let reloaded = LamportPrivateKey::from_bytes(&sk.to_bytes()).unwrap();
    assert!(reloaded.is_used());
}

#[test]
fn replaced_chunk_is_rejected() {
    let keys = common::family();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let params = LamportParams::new(128, 256).unwrap();
    for _ in 0..100 {
        let (mut sk, pk) = keygen(params, &keys, &mut rng).unwrap();
        let sig = sk.sign(&keys, b"message").unwrap();
        let mut chunks: Vec<Vec<u8>> = sig.chunks().map(<[u8]>::to_vec).collect();
        let i = rng.random_range(0..chunks.len());
        rng.fill_bytes(&mut chunks[i]);
        let forged = LamportSignature::from_chunks(params, &chunks).unwrap();
        assert!(!pk.verify(b"message", &forged).unwrap());
    }
}

#[test]
fn fixed_signature_rejects_other_messages() {
    let keys = common::family();
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let params = LamportParams::new(128, 256).unwrap();
    let (mut sk, pk) = keygen(params, &keys, &mut rng).unwrap();
    let sig = sk.sign(&keys, b"the signed one").unwrap();
    for k in 0..100 {
        assert!(!pk.verify(format!("other {k}").as_bytes(), &sig).unwrap());
    }
}

#[test]
fn parameter_mismatch_is_an_error_not_false() {
    let keys = common::family();
    let (mut sk, _) = common::seeded_pair(toy(), &keys, 1);
    let (_, other) = common::seeded_pair(LamportParams::new(16, 24).unwrap(), &keys, 2);
    let sig = sk.sign(&keys, b"m").unwrap();
    assert!(matches!(other.verify(b"m", &sig), Err(Error::ParamMismatch(_))));
}

#[test]
fn streaming_exhausts_after_l_chunks() {
    let keys = common::family();
    let (mut sk, pk) = common::seeded_pair(toy(), &keys, 3);
    let digest = pk.digest(b"stream").unwrap();
    let mut signer = sk.start_streaming(&digest).unwrap();
    let chunks: Vec<Vec<u8>> = (0..16).map(|_| signer.next_chunk().unwrap()).collect();
    assert!(matches!(signer.next_chunk(), Err(Error::StreamExhausted)));
    let sig = LamportSignature::from_chunks(toy(), &chunks).unwrap();
    assert!(pk.verify(b"stream", &sig).unwrap());
}

#[test]
fn serialized_sizes() {
    let keys = common::family();
    let params = LamportParams::new(128, 256).unwrap();
    let (mut sk, pk) = common::seeded_pair(params, &keys, 4);
    assert_eq!(pk.to_bytes().len(), 8 + 8192);
    let sig = sk.sign(&keys, b"x").unwrap();
    assert_eq!(sig.to_bytes().len(), 8 + 256 * 16);
    assert_eq!(&pk.to_bytes()[..4], b"LPK1");
    assert_eq!(&sig.to_bytes()[..4], b"LSG1");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn serialization_roundtrips(seed in proptest::collection::vec(any::<u8>(), 2..40), msg in proptest::collection::vec(any::<u8>(), 0..64)) {
        let keys = FamilyKeys::from_label(b"proptest");
        let (mut sk, pk) = keygen_from_seed(toy(), &keys, &Seed::new(seed).unwrap()).unwrap();
        let sk2 = LamportPrivateKey::from_bytes(&sk.to_bytes()).unwrap();
        prop_assert_eq!(&sk2.to_bytes()[..], &sk.to_bytes()[..]);
        let pk2 = LamportPublicKey::from_bytes(&pk.to_bytes(), &keys).unwrap();
        let sig = sk.sign(&keys, &msg).unwrap();
        let sig2 = LamportSignature::from_bytes(&sig.to_bytes()).unwrap();
        prop_assert!(pk2.verify(&msg, &sig2).unwrap());
    }

    #[test]
    fn truncated_encodings_are_malformed(cut in 0usize..40) {
        let keys = FamilyKeys::from_label(b"proptest");
        let (mut sk, pk) = common::seeded_pair(toy(), &keys, 5);
        let sig = sk.sign(&keys, b"m").unwrap().to_bytes();
        let pkb = pk.to_bytes();
        prop_assert!(LamportSignature::from_bytes(&sig[..cut.min(sig.len() - 1)]).is_err());
        prop_assert!(LamportPublicKey::from_bytes(&pkb[..cut], &keys).is_err());
    }
}
