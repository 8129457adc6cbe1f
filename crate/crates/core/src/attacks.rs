//! Forging Lamport signatures from several signatures under one key.
//!
//! Each signature reveals `x[i][m_i]` for every position. After `k`
//! signatures, any digest `m'` with `m'_i ∈ {m_i^j : j < k}` at every
//! position can be signed from the revealed strings alone.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::lamport::{LamportParams, LamportPublicKey, LamportSignature};
use crate::primitives::DigestBits;

/// Strings revealed per position and bit value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealedMaterial {
    params: LamportParams,
    public_key: LamportPublicKey,
    positions: Vec<[Option<Vec<u8>>; 2]>,
    sources: usize,
}

/// Gathers the revealed strings from verified `(message, signature)` pairs.
pub fn collect(
    public_key: &LamportPublicKey,
    observations: &[(Vec<u8>, LamportSignature)],
) -> Result<RevealedMaterial> {
    let params = public_key.params();
    let mut positions = vec![[None, None]; params.digest_bits()];
    for (idx, (message, sig)) in observations.iter().enumerate() {
        if sig.params() != params || !public_key.verify(message, sig)? {
            return Err(Error::InvalidObservation(idx));
        }
        let digest = public_key.digest(message)?;
        for (i, bit) in digest.bits().enumerate() {
            positions[i][bit as usize].get_or_insert_with(|| sig.chunk(i).to_vec());
        }
    }
    Ok(RevealedMaterial {
        params,
        public_key: public_key.clone(),
        positions,
        sources: observations.len(),
    })
}

impl RevealedMaterial {
    pub fn params(&self) -> LamportParams {
        self.params
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    /// The set of bit values revealed at position `i`.
    pub fn revealed_bits(&self, i: usize) -> Vec<u8> {
        (0..2u8)
            .filter(|&b| self.positions[i][b as usize].is_some())
            .collect()
    }

    /// Number of positions where both strings are known. The forgeable
    /// digest set has `2^free_positions` elements.
    pub fn free_positions(&self) -> usize {
        self.positions
            .iter()
            .filter(|p| p[0].is_some() && p[1].is_some())
            .count()
    }

    pub fn forgeable_digest(&self, digest: &DigestBits) -> bool {
        digest.bit_len() == self.params.digest_bits()
            && digest
                .bits()
                .enumerate()
                .all(|(i, bit)| self.positions[i][bit as usize].is_some())
    }

    pub fn forgeable(&self, target: &[u8]) -> Result<bool> {
        Ok(self.forgeable_digest(&self.public_key.digest(target)?))
    }

    pub fn forge_digest(&self, digest: &DigestBits) -> Result<LamportSignature> {
        if !self.forgeable_digest(digest) {
            return Err(Error::NotForgeable);
        }
        let chunks: Vec<Vec<u8>> = digest
            .bits()
            .enumerate()
            .map(|(i, bit)| self.positions[i][bit as usize].clone().expect("checked forgeable"))
            .collect();
        LamportSignature::from_chunks(self.params, &chunks)
    }

    pub fn forge(&self, target: &[u8]) -> Result<LamportSignature> {
        self.forge_digest(&self.public_key.digest(target)?)
    }

    /// Every forgeable digest, for digests of at most 24 bits.
    pub fn enumerate_forgeable(&self) -> Result<Vec<DigestBits>> {
        let l = self.params.digest_bits();
        if l > 24 {
            return Err(Error::InvalidParameter(format!(
                "enumeration limited to 24-bit digests, got {l}"
            )));
        }
        let mut out = vec![0u64];
        for i in 0..l {
            let bits = self.revealed_bits(i);
            out = out
                .iter()
                .flat_map(|prefix| bits.iter().map(move |&b| (prefix << 1) | b as u64))
                .collect();
        }
        out.into_iter()
            .map(|v| DigestBits::from_u64(v, l))
            .collect()
    }

    /// Searches random messages for one whose digest is forgeable but
    /// differs from every observed digest. Only practical at toy sizes;
    /// at real sizes this amounts to inverting `g`.
    pub fn search_message<R: RngCore + ?Sized>(
        &self,
        observed: &[DigestBits],
        rng: &mut R,
        max_tries: usize,
    ) -> Result<Option<Vec<u8>>> {
        for _ in 0..max_tries {
            let len = rng.random_range(8..32);
            let mut msg = vec![0u8; len];
            rng.fill_bytes(&mut msg);
            let digest = self.public_key.digest(&msg)?;
            if self.forgeable_digest(&digest) && !observed.contains(&digest) {
                return Ok(Some(msg));
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamport::keygen;
    use crate::primitives::FamilyKeys;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sign_with_clone(
        raw: &[u8],
        keys: &FamilyKeys,
        msg: &[u8],
    ) -> LamportSignature {
        let mut sk = crate::lamport::LamportPrivateKey::from_bytes(raw).unwrap();
        sk.sign(keys, msg).unwrap()
    }

    #[test]
    fn single_observation_fixes_every_position() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let keys = FamilyKeys::random(&mut rng).unwrap();
        let params = LamportParams::new(16, 16).unwrap();
        let (mut sk, pk) = keygen(params, &keys, &mut rng).unwrap();
        let sig = sk.sign(&keys, b"only").unwrap();
        let m = collect(&pk, &[(b"only".to_vec(), sig.clone())]).unwrap();
        assert!((0..16).all(|i| m.revealed_bits(i).len() == 1));
        assert_eq!(m.free_positions(), 0);
        assert!(m.forgeable(b"only").unwrap());
        assert_eq!(m.forge(b"only").unwrap(), sig);
        let other = (0..).map(|i: u32| i.to_be_bytes().to_vec())
            .find(|msg| pk.digest(msg).unwrap() != pk.digest(b"only").unwrap())
            .unwrap();
        assert!(!m.forgeable(&other).unwrap());
        assert!(matches!(m.forge(&other), Err(Error::NotForgeable)));
    }

    #[test]
    fn duplicates_do_not_change_material() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let keys = FamilyKeys::random(&mut rng).unwrap();
        let params = LamportParams::new(16, 16).unwrap();
        let (sk, pk) = keygen(params, &keys, &mut rng).unwrap();
        let raw = sk.to_bytes();
        let sig = sign_with_clone(&raw, &keys, b"dup");
        let once = collect(&pk, &[(b"dup".to_vec(), sig.clone())]).unwrap();
        let twice = collect(&pk, &[(b"dup".to_vec(), sig.clone()), (b"dup".to_vec(), sig)]).unwrap();
        assert_eq!(once.positions, twice.positions);
    }

    #[test]
    fn invalid_observation_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let keys = FamilyKeys::random(&mut rng).unwrap();
        let params = LamportParams::new(16, 16).unwrap();
        let (sk, pk) = keygen(params, &keys, &mut rng).unwrap();
        let raw = sk.to_bytes();
        let sig = sign_with_clone(&raw, &keys, b"a");
        let err = collect(&pk, &[(b"a".to_vec(), sig.clone()), (b"b".to_vec(), sig)]);
        assert!(matches!(err, Err(Error::InvalidObservation(1))));
    }
}
