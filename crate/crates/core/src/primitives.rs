//! Keyed function families built from a single extendable-output hash.
//!
//! Every family (one-way `f`, collision-resistant `g`, tree hash `T`, the
//! seed expander and the MAC) hashes `tag ‖ key ‖ ...` with SHAKE256 and
//! takes the leading octets of the output. The one-octet tag keeps the
//! families apart even when key bytes and inputs coincide.

use std::cell::Cell;
use std::fmt;

use rand::TryRngCore;
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;
use zeroize::{Zeroize, Zeroizing};

use crate::error::{Error, Result};

/// Length of every family key, in octets.
pub const FAMILY_KEY_BYTES: usize = 32;
/// Length of one seed-expansion block, in octets.
pub const PRNG_BLOCK_BYTES: usize = 32;
/// Length of a MAC tag, in octets.
pub const MAC_TAG_BYTES: usize = 16;

/// Domain-separation tag of a function family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    F,
    G,
    T,
    Prng,
    Mac,
}

impl Purpose {
    pub fn tag(self) -> u8 {
        match self {
            Purpose::F => 0x01,
            Purpose::G => 0x02,
            Purpose::T => 0x03,
            Purpose::Prng => 0x04,
            Purpose::Mac => 0x05,
        }
    }
}

/// Index selecting one member of a keyed function family.
///
/// The purpose is fixed at construction; evaluating a family with a key
/// minted for another family fails with [`Error::PurposeMismatch`].
#[derive(Clone, PartialEq, Eq)]
pub struct FamilyKey {
    purpose: Purpose,
    bytes: [u8; FAMILY_KEY_BYTES],
}

impl FamilyKey {
    pub fn new(purpose: Purpose, bytes: [u8; FAMILY_KEY_BYTES]) -> Self {
        FamilyKey { purpose, bytes }
    }

    pub fn from_slice(purpose: Purpose, bytes: &[u8]) -> Result<Self> {
        let bytes: [u8; FAMILY_KEY_BYTES] = bytes.try_into().map_err(|_| {
            Error::InvalidParameter(format!(
                "family key must be {FAMILY_KEY_BYTES} octets, got {}",
                bytes.len()
            ))
        })?;
        Ok(FamilyKey { purpose, bytes })
    }

    pub fn random<R: TryRngCore + ?Sized>(purpose: Purpose, rng: &mut R) -> Result<Self> {
        let mut bytes = [0u8; FAMILY_KEY_BYTES];
        rng.try_fill_bytes(&mut bytes)
            .map_err(|_| Error::EntropyUnavailable)?;
        Ok(FamilyKey { purpose, bytes })
    }

    /// Derives a key from a public label, for deployments that fix the
    /// family members system-wide.
    pub fn from_label(purpose: Purpose, label: &[u8]) -> Self {
        let mut bytes = [0u8; FAMILY_KEY_BYTES];
        shake(
            &[b"hashsig family key", &[purpose.tag()], label],
            &mut bytes,
        );
        FamilyKey { purpose, bytes }
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    pub fn as_bytes(&self) -> &[u8; FAMILY_KEY_BYTES] {
        &self.bytes
    }

    fn expect(&self, purpose: Purpose) -> Result<()> {
        if self.purpose == purpose {
            Ok(())
        } else {
            Err(Error::PurposeMismatch {
                expected: purpose,
                found: self.purpose,
            })
        }
    }
}

impl fmt::Debug for FamilyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.purpose == Purpose::Mac {
            write!(f, "FamilyKey({:?}, <redacted>)", self.purpose)
        } else {
            write!(f, "FamilyKey({:?}, {})", self.purpose, hex::encode(self.bytes))
        }
    }
}

/// The public family members `f`, `g` and `T` shared by signer and verifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyKeys {
    f: FamilyKey,
    g: FamilyKey,
    t: FamilyKey,
}

impl FamilyKeys {
    pub fn new(f: FamilyKey, g: FamilyKey, t: FamilyKey) -> Result<Self> {
        f.expect(Purpose::F)?;
        g.expect(Purpose::G)?;
        t.expect(Purpose::T)?;
        Ok(FamilyKeys { f, g, t })
    }

    pub fn random<R: TryRngCore + ?Sized>(rng: &mut R) -> Result<Self> {
        Ok(FamilyKeys {
            f: FamilyKey::random(Purpose::F, rng)?,
            g: FamilyKey::random(Purpose::G, rng)?,
            t: FamilyKey::random(Purpose::T, rng)?,
        })
    }

    pub fn from_label(label: &[u8]) -> Self {
        FamilyKeys {
            f: FamilyKey::from_label(Purpose::F, label),
            g: FamilyKey::from_label(Purpose::G, label),
            t: FamilyKey::from_label(Purpose::T, label),
        }
    }

    pub fn f(&self) -> &FamilyKey {
        &self.f
    }

    pub fn g(&self) -> &FamilyKey {
        &self.g
    }

    pub fn t(&self) -> &FamilyKey {
        &self.t
    }
}

/// Secret input of the seed expander.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed {
    bytes: Zeroizing<Vec<u8>>,
}

impl Seed {
    pub fn new(bytes: Vec<u8>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::InvalidParameter("seed must not be empty".into()));
        }
        if bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidParameter("seed longer than 65535 octets".into()));
        }
        Ok(Seed {
            bytes: Zeroizing::new(bytes),
        })
    }

    pub fn random<R: TryRngCore + ?Sized>(bits: usize, rng: &mut R) -> Result<Self> {
        if bits == 0 || bits % 8 != 0 {
            return Err(Error::InvalidParameter(format!(
                "seed bits must be a positive multiple of 8, got {bits}"
            )));
        }
        let mut bytes = vec![0u8; bits / 8];
        rng.try_fill_bytes(&mut bytes)
            .map_err(|_| Error::EntropyUnavailable)?;
        Seed::new(bytes)
    }

    pub fn bits(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Zeroes the seed in place, keeping its length.
    pub(crate) fn wipe(&mut self) {
        self.bytes.as_mut_slice().zeroize();
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({} bits)", self.bits())
    }
}

/// An ℓ-bit digest. Bit 0 is the most significant bit of octet 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DigestBits {
    bytes: Vec<u8>,
}

impl DigestBits {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::InvalidParameter("digest must not be empty".into()));
        }
        Ok(DigestBits { bytes })
    }

    /// Builds a digest of `bits` bits from the low bits of `value`, most
    /// significant first. Convenient for exhaustive enumeration at toy sizes.
    pub fn from_u64(value: u64, bits: usize) -> Result<Self> {
        if bits == 0 || bits % 8 != 0 || bits > 64 {
            return Err(Error::InvalidParameter(format!("unsupported digest width {bits}")));
        }
        let bytes = value.to_be_bytes()[8 - bits / 8..].to_vec();
        Ok(DigestBits { bytes })
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn bit(&self, i: usize) -> u8 {
        (self.bytes[i / 8] >> (7 - (i % 8))) & 1
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.bit_len()).map(move |i| self.bit(i))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn hamming_distance(&self, other: &DigestBits) -> Option<u32> {
        if self.bytes.len() != other.bytes.len() {
            return None;
        }
        Some(
            self.bytes
                .iter()
                .zip(&other.bytes)
                .map(|(a, b)| (a ^ b).count_ones())
                .sum(),
        )
    }
}

/// Per-thread evaluation counters, used to check the call counts of the
/// tree and key-generation algorithms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub f: u64,
    pub g: u64,
    pub t: u64,
    pub prng_blocks: u64,
    pub mac: u64,
}

impl CallCounts {
    pub fn since(&self, earlier: &CallCounts) -> CallCounts {
        CallCounts {
            f: self.f - earlier.f,
            g: self.g - earlier.g,
            t: self.t - earlier.t,
            prng_blocks: self.prng_blocks - earlier.prng_blocks,
            mac: self.mac - earlier.mac,
        }
    }
}

thread_local! {
    static COUNTS: Cell<CallCounts> = Cell::new(CallCounts::default());
}

/// Snapshot of this thread's evaluation counters.
pub fn call_counts() -> CallCounts {
    COUNTS.with(Cell::get)
}

fn bump(update: impl FnOnce(&mut CallCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        update(&mut v);
        c.set(v);
    });
}

fn shake(parts: &[&[u8]], out: &mut [u8]) {
    let mut h = Shake256::default();
    for p in parts {
        h.update(p);
    }
    h.finalize_xof().read(out);
}

fn check_bits(bits: usize) -> Result<usize> {
    if bits == 0 || bits % 8 != 0 || bits > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "bit length must be a positive multiple of 8 below 65536, got {bits}"
        )));
    }
    Ok(bits / 8)
}

/// One-way family `f_k : {0,1}^n -> {0,1}^n`.
pub fn eval_f(key: &FamilyKey, x: &[u8], n_bits: usize) -> Result<Vec<u8>> {
    key.expect(Purpose::F)?;
    let len = check_bits(n_bits)?;
    if x.len() != len {
        return Err(Error::InvalidParameter(format!(
            "f input must be {len} octets, got {}",
            x.len()
        )));
    }
    bump(|c| c.f += 1);
    let mut out = vec![0u8; len];
    shake(
        &[&[Purpose::F.tag()], &key.bytes, &(n_bits as u16).to_be_bytes(), x],
        &mut out,
    );
    Ok(out)
}

/// Collision-resistant digest family `g_k : {0,1}* -> {0,1}^ℓ`.
pub fn eval_g(key: &FamilyKey, message: &[u8], digest_bits: usize) -> Result<DigestBits> {
    key.expect(Purpose::G)?;
    let len = check_bits(digest_bits)?;
    bump(|c| c.g += 1);
    let mut out = vec![0u8; len];
    shake(
        &[
            &[Purpose::G.tag()],
            &key.bytes,
            &(digest_bits as u16).to_be_bytes(),
            message,
        ],
        &mut out,
    );
    Ok(DigestBits { bytes: out })
}

/// Tree node hash `T_k : {0,1}* -> {0,1}^m`.
pub fn eval_t(key: &FamilyKey, input: &[u8], m_bits: usize) -> Result<Vec<u8>> {
    key.expect(Purpose::T)?;
    let len = check_bits(m_bits)?;
    bump(|c| c.t += 1);
    let mut out = vec![0u8; len];
    shake(
        &[&[Purpose::T.tag()], &key.bytes, &(m_bits as u16).to_be_bytes(), input],
        &mut out,
    );
    Ok(out)
}

/// Block `index` of the counter-mode seed expansion.
pub fn prng_block(seed: &Seed, index: u32) -> [u8; PRNG_BLOCK_BYTES] {
    bump(|c| c.prng_blocks += 1);
    let mut out = [0u8; PRNG_BLOCK_BYTES];
    shake(
        &[&[Purpose::Prng.tag()], seed.as_bytes(), &index.to_be_bytes()],
        &mut out,
    );
    out
}

/// Octets `[offset, offset + len)` of the expansion of `seed`, computed
/// from the covering blocks only.
pub fn prng_range(seed: &Seed, offset: usize, len: usize) -> Zeroizing<Vec<u8>> {
    let mut out = Zeroizing::new(Vec::with_capacity(len));
    if len == 0 {
        return out;
    }
    let first = offset / PRNG_BLOCK_BYTES;
    let last = (offset + len - 1) / PRNG_BLOCK_BYTES;
    for j in first..=last {
        let block = Zeroizing::new(prng_block(seed, j as u32));
        let start = if j == first { offset % PRNG_BLOCK_BYTES } else { 0 };
        let remaining = len - out.len();
        let end = (start + remaining).min(PRNG_BLOCK_BYTES);
        out.extend_from_slice(&block[start..end]);
    }
    out
}

/// Expands `seed` to `out_bits` pseudo-random bits.
pub fn prng_expand(seed: &Seed, out_bits: usize) -> Result<Zeroizing<Vec<u8>>> {
    if out_bits == 0 || out_bits % 8 != 0 {
        return Err(Error::InvalidParameter(format!(
            "output bits must be a positive multiple of 8, got {out_bits}"
        )));
    }
    let blocks = (out_bits / 8).div_ceil(PRNG_BLOCK_BYTES);
    if blocks > u32::MAX as usize {
        return Err(Error::InvalidParameter("expansion too long".into()));
    }
    Ok(prng_range(seed, 0, out_bits / 8))
}

/// 128-bit keyed tag.
pub fn mac_tag(key: &FamilyKey, message: &[u8]) -> Result<[u8; MAC_TAG_BYTES]> {
    key.expect(Purpose::Mac)?;
    bump(|c| c.mac += 1);
    let mut out = [0u8; MAC_TAG_BYTES];
    shake(&[&[Purpose::Mac.tag()], &key.bytes, message], &mut out);
    Ok(out)
}

pub fn mac_verify(key: &FamilyKey, message: &[u8], tag: &[u8]) -> Result<bool> {
    let expected = mac_tag(key, message)?;
    if tag.len() != MAC_TAG_BYTES {
        return Ok(false);
    }
    Ok(ct_eq(&expected, tag))
}

pub(crate) fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(0x5eed)
    }

    #[test]
    fn f_is_deterministic() {
        let key = FamilyKey::new(Purpose::F, [7; 32]);
        let x = [3u8; 16];
        assert_eq!(eval_f(&key, &x, 128).unwrap(), eval_f(&key, &x, 128).unwrap());
    }

    #[test]
    fn f_rejects_wrong_purpose_and_bad_lengths() {
        let g = FamilyKey::new(Purpose::G, [0; 32]);
        assert!(matches!(
            eval_f(&g, &[0; 16], 128),
            Err(Error::PurposeMismatch { expected: Purpose::F, found: Purpose::G })
        ));
        let f = FamilyKey::new(Purpose::F, [0; 32]);
        assert!(matches!(eval_g(&f, b"", 256), Err(Error::PurposeMismatch { .. })));
        assert!(matches!(eval_f(&f, &[0; 16], 129), Err(Error::InvalidParameter(_))));
        assert!(matches!(eval_f(&f, &[0; 15], 128), Err(Error::InvalidParameter(_))));
        assert!(matches!(eval_g(&g, b"", 0), Err(Error::InvalidParameter(_))));
        let t = FamilyKey::new(Purpose::T, [0; 32]);
        assert!(matches!(eval_t(&t, b"", 12), Err(Error::InvalidParameter(_))));
        assert!(matches!(mac_tag(&t, b""), Err(Error::PurposeMismatch { .. })));
    }

    #[test]
    fn f_differs_across_keys() {
        let mut rng = rng();
        let mut x = [0u8; 32];
        rng.fill_bytes(&mut x);
        for _ in 0..100 {
            let k0 = FamilyKey::random(Purpose::F, &mut rng).unwrap();
            let k1 = FamilyKey::random(Purpose::F, &mut rng).unwrap();
            assert_ne!(k0, k1);
            assert_ne!(eval_f(&k0, &x, 256).unwrap(), eval_f(&k1, &x, 256).unwrap());
        }
    }

    #[test]
    fn g_distinct_messages_distinct_digests() {
        let mut rng = rng();
        let key = FamilyKey::random(Purpose::G, &mut rng).unwrap();
        let mut a = vec![0u8; 1024];
        let mut b = vec![0u8; 1024];
        for _ in 0..1000 {
            rng.fill_bytes(&mut a);
            rng.fill_bytes(&mut b);
            assert_ne!(a, b);
            assert_ne!(eval_g(&key, &a, 256).unwrap(), eval_g(&key, &b, 256).unwrap());
        }
    }

    #[test]
    fn t_is_order_sensitive() {
        let mut rng = rng();
        let key = FamilyKey::random(Purpose::T, &mut rng).unwrap();
        for _ in 0..100 {
            let mut left = [0u8; 32];
            let mut right = [0u8; 32];
            rng.fill_bytes(&mut left);
            rng.fill_bytes(&mut right);
            let lr = [left, right].concat();
            let rl = [right, left].concat();
            assert_eq!(eval_t(&key, &lr, 256).unwrap(), eval_t(&key, &lr, 256).unwrap());
            assert_ne!(eval_t(&key, &lr, 256).unwrap(), eval_t(&key, &rl, 256).unwrap());
        }
    }

    #[test]
    fn prng_prefix_and_random_access() {
        let seed = Seed::new(vec![9; 32]).unwrap();
        let long = prng_expand(&seed, 4096).unwrap();
        let short = prng_expand(&seed, 256).unwrap();
        assert_eq!(&long[..32], &short[..]);
        assert_eq!(&prng_expand(&seed, 512).unwrap()[..32], &short[..]);
        for j in 0..16u32 {
            let b = prng_block(&seed, j);
            assert_eq!(&long[j as usize * 32..(j as usize + 1) * 32], &b[..]);
        }
        for (off, len) in [(0, 1), (5, 40), (31, 2), (100, 200), (480, 32)] {
            assert_eq!(&prng_range(&seed, off, len)[..], &long[off..off + len]);
        }
        assert!(matches!(prng_expand(&seed, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(prng_expand(&seed, 12), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn prng_distinct_seeds() {
        let mut rng = rng();
        for _ in 0..100 {
            let a = Seed::random(256, &mut rng).unwrap();
            let b = Seed::random(256, &mut rng).unwrap();
            assert_ne!(&prng_expand(&a, 512).unwrap()[..], &prng_expand(&b, 512).unwrap()[..]);
        }
    }

    #[test]
    fn mac_roundtrip_and_rejections() {
        let mut rng = rng();
        for _ in 0..100 {
            let k = FamilyKey::random(Purpose::Mac, &mut rng).unwrap();
            let k2 = FamilyKey::random(Purpose::Mac, &mut rng).unwrap();
            let mut msg = vec![0u8; 64];
            rng.fill_bytes(&mut msg);
            let tag = mac_tag(&k, &msg).unwrap();
            assert!(mac_verify(&k, &msg, &tag).unwrap());
            assert!(!mac_verify(&k2, &msg, &tag).unwrap());
            let bit = rng.random_range(0..msg.len() * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!mac_verify(&k, &msg, &tag).unwrap());
            assert!(!mac_verify(&k, &msg, &tag[..8]).unwrap());
        }
    }

    #[test]
    fn families_are_domain_separated() {
        let mut rng = rng();
        for _ in 0..100 {
            let mut kb = [0u8; 32];
            rng.fill_bytes(&mut kb);
            let mut input = [0u8; 32];
            rng.fill_bytes(&mut input);
            let f = eval_f(&FamilyKey::new(Purpose::F, kb), &input, 256).unwrap();
            let g = eval_g(&FamilyKey::new(Purpose::G, kb), &input, 256).unwrap();
            let t = eval_t(&FamilyKey::new(Purpose::T, kb), &input, 256).unwrap();
            let p = prng_expand(&Seed::new(input.to_vec()).unwrap(), 256).unwrap();
            let m = mac_tag(&FamilyKey::new(Purpose::Mac, kb), &input).unwrap();
            let outs: [&[u8]; 5] = [&f[..16], &g.as_bytes()[..16], &t[..16], &p[..16], &m];
            for i in 0..5 {
                for j in i + 1..5 {
                    assert_ne!(outs[i], outs[j], "families {i} and {j} coincide");
                }
            }
        }
    }

    #[test]
    fn digest_bits_are_msb_first() {
        let d = DigestBits::from_bytes(vec![0b1000_0001, 0b0100_0000]).unwrap();
        let bits: Vec<u8> = d.bits().collect();
        assert_eq!(bits, vec![1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0]);
        let e = DigestBits::from_u64(0x8140, 16).unwrap();
        assert_eq!(d, e);
        assert_eq!(d.hamming_distance(&DigestBits::from_u64(0, 16).unwrap()), Some(3));
    }

    #[test]
    fn counters_track_evaluations() {
        let before = call_counts();
        let key = FamilyKey::new(Purpose::F, [0; 32]);
        for _ in 0..5 {
            eval_f(&key, &[0; 2], 16).unwrap();
        }
        let seed = Seed::new(vec![1; 4]).unwrap();
        prng_expand(&seed, 8 * 65).unwrap();
        let d = call_counts().since(&before);
        assert_eq!(d.f, 5);
        assert_eq!(d.prng_blocks, 3);
    }

    #[test]
    fn seed_validation() {
        assert!(Seed::new(vec![]).is_err());
        let mut rng = rng();
        assert!(Seed::random(0, &mut rng).is_err());
        assert!(Seed::random(12, &mut rng).is_err());
        assert_eq!(Seed::random(136, &mut rng).unwrap().bits(), 136);
        let _ = rng.random::<u8>();
    }
}
