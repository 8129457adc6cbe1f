//! Lamport one-time signatures.
//!
//! A private key is `2ℓ` random `n`-bit strings `x[i][j]`; the public key
//! is their images `y[i][j] = f(x[i][j])`. Signing a message with digest
//! `m = g(M)` reveals `x[i][m_i]` for every position `i`, which is why a
//! key must never sign twice. Keys refuse a second signature and zeroize
//! their material before the first signature is handed out.

use std::fmt;

use rand::TryRngCore;
use zeroize::{Zeroize, Zeroizing};

use crate::error::{Error, Result};
use crate::primitives::{eval_f, eval_g, prng_expand, prng_range, DigestBits, FamilyKeys, Seed};
use crate::codec::{Reader, Writer};

pub const PUBLIC_KEY_MAGIC: &[u8; 4] = b"LPK1";
pub const SIGNATURE_MAGIC: &[u8; 4] = b"LSG1";
pub const PRIVATE_KEY_MAGIC: &[u8; 4] = b"LSK1";

/// Offset of the used-flag octet inside a serialized private key.
pub const PRIVATE_KEY_FLAG_OFFSET: usize = 8;
/// Length of the private key header (magic, n, ℓ, flag, mode).
pub const PRIVATE_KEY_HEADER_BYTES: usize = 10;

const MODE_RAW: u8 = 0x00;
const MODE_SEEDED: u8 = 0x01;

/// `(n, ℓ)`: bit length of the private strings and of the digest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LamportParams {
    string_bits: u16,
    digest_bits: u16,
}

impl LamportParams {
    pub fn new(string_bits: usize, digest_bits: usize) -> Result<Self> {
        for (name, v) in [("n", string_bits), ("l", digest_bits)] {
            if v < 8 || v % 8 != 0 || v > u16::MAX as usize {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a multiple of 8 in [8, 65528], got {v}"
                )));
            }
        }
        Ok(LamportParams {
            string_bits: string_bits as u16,
            digest_bits: digest_bits as u16,
        })
    }

    pub fn string_bits(&self) -> usize {
        self.string_bits as usize
    }

    pub fn digest_bits(&self) -> usize {
        self.digest_bits as usize
    }

    pub fn string_bytes(&self) -> usize {
        self.string_bits() / 8
    }

    /// Size of the `y` table, `2·ℓ·n` bits.
    pub fn public_key_bits(&self) -> usize {
        2 * self.digest_bits() * self.string_bits()
    }

    pub fn signature_bits(&self) -> usize {
        self.digest_bits() * self.string_bits()
    }

    /// Bits of seed expansion consumed by a seeded key, `2·n·ℓ`.
    pub fn private_key_bits(&self) -> usize {
        self.public_key_bits()
    }

    fn slot(&self, i: usize, bit: u8) -> std::ops::Range<usize> {
        let nb = self.string_bytes();
        let start = (2 * i + bit as usize) * nb;
        start..start + nb
    }

    fn write_header(&self, w: &mut Writer, magic: &[u8; 4]) {
        w.bytes(magic);
        w.u16(self.string_bits);
        w.u16(self.digest_bits);
    }

    fn read_header(r: &mut Reader<'_>, magic: &[u8; 4]) -> Result<Self> {
        r.magic(magic)?;
        let n = r.u16()? as usize;
        let l = r.u16()? as usize;
        LamportParams::new(n, l).map_err(|e| Error::Malformed(e.to_string()))
    }
}

#[derive(Clone, PartialEq, Eq)]
enum KeyOrigin {
    Random,
    Seeded(Seed),
}

/// The `2ℓ` secret strings, plus the one-time used flag.
pub struct LamportPrivateKey {
    params: LamportParams,
    strings: Zeroizing<Vec<u8>>,
    used: bool,
    origin: KeyOrigin,
}

impl fmt::Debug for LamportPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LamportPrivateKey")
            .field("params", &self.params)
            .field("used", &self.used)
            .field("seeded", &matches!(self.origin, KeyOrigin::Seeded(_)))
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LamportPublicKey {
    params: LamportParams,
    keys: FamilyKeys,
    y: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LamportSignature {
    params: LamportParams,
    strings: Vec<u8>,
}

/// Generates a key pair from fresh entropy.
pub fn keygen<R: TryRngCore + ?Sized>(
    params: LamportParams,
    keys: &FamilyKeys,
    entropy: &mut R,
) -> Result<(LamportPrivateKey, LamportPublicKey)> {
    let mut strings = Zeroizing::new(vec![0u8; params.private_key_bits() / 8]);
    entropy
        .try_fill_bytes(&mut strings)
        .map_err(|_| Error::EntropyUnavailable)?;
    let sk = LamportPrivateKey {
        params,
        strings,
        used: false,
        origin: KeyOrigin::Random,
    };
    let pk = sk.public_key(keys)?;
    Ok((sk, pk))
}

/// Generates a key pair whose strings are the seed expansion, laid out
/// `x_0[0], x_0[1], x_1[0], x_1[1], ...`.
pub fn keygen_from_seed(
    params: LamportParams,
    keys: &FamilyKeys,
    seed: &Seed,
) -> Result<(LamportPrivateKey, LamportPublicKey)> {
    let sk = LamportPrivateKey::from_seed(params, seed)?;
    let pk = sk.public_key(keys)?;
    Ok((sk, pk))
}

impl LamportPrivateKey {
    pub fn from_seed(params: LamportParams, seed: &Seed) -> Result<Self> {
        if seed.bits() < params.string_bits() {
            return Err(Error::InvalidParameter(format!(
                "seed of {} bits is shorter than n = {}",
                seed.bits(),
                params.string_bits()
            )));
        }
        let strings = prng_expand(seed, params.private_key_bits())?;
        Ok(LamportPrivateKey {
            params,
            strings,
            used: false,
            origin: KeyOrigin::Seeded(seed.clone()),
        })
    }

    pub fn params(&self) -> LamportParams {
        self.params
    }

    pub fn is_used(&self) -> bool {
        self.used
    }

    pub fn is_seeded(&self) -> bool {
        matches!(self.origin, KeyOrigin::Seeded(_))
    }

    /// Recomputes the public key. Fails once the key has been used, since
    /// the material is gone by then.
    pub fn public_key(&self, keys: &FamilyKeys) -> Result<LamportPublicKey> {
        if self.used {
            return Err(Error::KeyAlreadyUsed);
        }
        let n = self.params.string_bits();
        let mut y = Vec::with_capacity(self.strings.len());
        for x in self.strings.chunks_exact(self.params.string_bytes()) {
            y.extend_from_slice(&eval_f(keys.f(), x, n)?);
        }
        Ok(LamportPublicKey {
            params: self.params,
            keys: keys.clone(),
            y,
        })
    }

    /// Signs `message`. The key is marked used and wiped before the
    /// signature is returned.
    pub fn sign(&mut self, keys: &FamilyKeys, message: &[u8]) -> Result<LamportSignature> {
        if self.used {
            return Err(Error::KeyAlreadyUsed);
        }
        let digest = eval_g(keys.g(), message, self.params.digest_bits())?;
        self.sign_digest(&digest)
    }

    pub fn sign_digest(&mut self, digest: &DigestBits) -> Result<LamportSignature> {
        if self.used {
            return Err(Error::KeyAlreadyUsed);
        }
        self.check_digest(digest)?;
        self.used = true;
        let mut out = Vec::with_capacity(self.params.signature_bits() / 8);
        for (i, bit) in digest.bits().enumerate() {
            out.extend_from_slice(&self.strings[self.params.slot(i, bit)]);
        }
        self.erase();
        Ok(LamportSignature {
            params: self.params,
            strings: out,
        })
    }

    /// Starts a chunk-by-chunk signature over a digest computed elsewhere.
    /// The key material moves into the signer and the key is marked used.
    pub fn start_streaming(&mut self, digest: &DigestBits) -> Result<StreamingSigner> {
        if self.used {
            return Err(Error::KeyAlreadyUsed);
        }
        self.check_digest(digest)?;
        self.used = true;
        let strings = std::mem::take(&mut self.strings);
        self.erase();
        Ok(StreamingSigner {
            params: self.params,
            digest: digest.clone(),
            strings,
            erased: vec![[false; 2]; self.params.digest_bits()],
            cursor: 0,
        })
    }

    fn check_digest(&self, digest: &DigestBits) -> Result<()> {
        if digest.bit_len() != self.params.digest_bits() {
            return Err(Error::ParamMismatch(format!(
                "digest has {} bits, key expects {}",
                digest.bit_len(),
                self.params.digest_bits()
            )));
        }
        Ok(())
    }

    fn erase(&mut self) {
        self.strings.zeroize();
        if let KeyOrigin::Seeded(seed) = &mut self.origin {
            seed.wipe();
        }
    }

    /// Serializes as `LSK1 ‖ n ‖ ℓ ‖ used ‖ mode ‖ payload`. A used key
    /// keeps its layout but carries an all-zero payload.
    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut w = Writer::default();
        self.params.write_header(&mut w, PRIVATE_KEY_MAGIC);
        w.u8(self.used as u8);
        match &self.origin {
            KeyOrigin::Random => {
                w.u8(MODE_RAW);
                if self.used {
                    w.zeros(self.params.private_key_bits() / 8);
                } else {
                    w.bytes(&self.strings);
                }
            }
            KeyOrigin::Seeded(seed) => {
                w.u8(MODE_SEEDED);
                if self.used {
                    w.zeros(seed.as_bytes().len());
                } else {
                    w.bytes(seed.as_bytes());
                }
            }
        }
        Zeroizing::new(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let params = LamportParams::read_header(&mut r, PRIVATE_KEY_MAGIC)?;
        let used = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::Malformed(format!("bad used flag {v:#04x}"))),
        };
        let mode = r.u8()?;
        let payload = r.rest();
        if used {
            let origin = match mode {
                MODE_SEEDED if !payload.is_empty() => {
                    KeyOrigin::Seeded(Seed::new(vec![0; payload.len()]).map_err(|e| Error::Malformed(e.to_string()))?)
                }
                _ => KeyOrigin::Random,
            };
            return Ok(LamportPrivateKey {
                params,
                strings: Zeroizing::new(Vec::new()),
                used: true,
                origin,
            });
        }
        match mode {
            MODE_RAW => {
                if payload.len() != params.private_key_bits() / 8 {
                    return Err(Error::Malformed(format!(
                        "raw payload must be {} octets, got {}",
                        params.private_key_bits() / 8,
                        payload.len()
                    )));
                }
                Ok(LamportPrivateKey {
                    params,
                    strings: Zeroizing::new(payload.to_vec()),
                    used: false,
                    origin: KeyOrigin::Random,
                })
            }
            MODE_SEEDED => {
                let seed = Seed::new(payload.to_vec()).map_err(|e| Error::Malformed(e.to_string()))?;
                LamportPrivateKey::from_seed(params, &seed)
                    .map_err(|e| Error::Malformed(e.to_string()))
            }
            m => Err(Error::Malformed(format!("unknown key mode {m:#04x}"))),
        }
    }
}

impl Drop for LamportPrivateKey {
    fn drop(&mut self) {
        self.strings.zeroize();
    }
}

/// Emulates a secure device that releases a signature one string at a
/// time and erases both strings of a position as soon as that position
/// has been emitted.
pub struct StreamingSigner {
    params: LamportParams,
    digest: DigestBits,
    strings: Zeroizing<Vec<u8>>,
    erased: Vec<[bool; 2]>,
    cursor: usize,
}

impl fmt::Debug for StreamingSigner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StreamingSigner")
            .field("params", &self.params)
            .field("cursor", &self.cursor)
            .finish_non_exhaustive()
    }
}

impl StreamingSigner {
    pub fn params(&self) -> LamportParams {
        self.params
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_finished(&self) -> bool {
        self.cursor == self.params.digest_bits()
    }

    /// Emits `x_i[m_i]` for the current position and erases the position.
    pub fn next_chunk(&mut self) -> Result<Vec<u8>> {
        if self.is_finished() {
            return Err(Error::StreamExhausted);
        }
        let i = self.cursor;
        let bit = self.digest.bit(i);
        let other = self.params.slot(i, 1 - bit);
        self.strings[other].zeroize();
        self.erased[i][(1 - bit) as usize] = true;

        let chosen = self.params.slot(i, bit);
        let chunk = self.strings[chosen.clone()].to_vec();
        self.strings[chosen].zeroize();
        self.erased[i][bit as usize] = true;

        self.cursor += 1;
        if self.is_finished() {
            self.strings.zeroize();
        }
        Ok(chunk)
    }

    /// True when `x_i[j]` has been erased. The check also confirms the
    /// backing octets are zero.
    pub fn is_erased(&self, i: usize, j: u8) -> bool {
        if i >= self.params.digest_bits() || j > 1 {
            return false;
        }
        let flagged = self.erased[i][j as usize];
        let range = self.params.slot(i, j);
        flagged && self.strings.get(range).is_none_or(|s| s.iter().all(|&b| b == 0))
    }

    /// Runs the signer to completion and assembles the signature.
    pub fn finish(mut self) -> Result<LamportSignature> {
        let mut chunks = Vec::with_capacity(self.params.digest_bits());
        while !self.is_finished() {
            chunks.push(self.next_chunk()?);
        }
        LamportSignature::from_chunks(self.params, &chunks)
    }
}

impl LamportPublicKey {
    pub fn params(&self) -> LamportParams {
        self.params
    }

    pub fn family_keys(&self) -> &FamilyKeys {
        &self.keys
    }

    pub fn y(&self, i: usize, bit: u8) -> &[u8] {
        &self.y[self.params.slot(i, bit)]
    }

    /// Size of the `y` table in bits, excluding the header.
    pub fn payload_bits(&self) -> usize {
        self.y.len() * 8
    }

    pub fn digest(&self, message: &[u8]) -> Result<DigestBits> {
        eval_g(self.keys.g(), message, self.params.digest_bits())
    }

    pub fn verify(&self, message: &[u8], sig: &LamportSignature) -> Result<bool> {
        self.check_params(sig)?;
        let digest = self.digest(message)?;
        self.verify_digest(&digest, sig)
    }

    pub fn verify_digest(&self, digest: &DigestBits, sig: &LamportSignature) -> Result<bool> {
        self.check_params(sig)?;
        if digest.bit_len() != self.params.digest_bits() {
            return Err(Error::ParamMismatch(format!(
                "digest has {} bits, key expects {}",
                digest.bit_len(),
                self.params.digest_bits()
            )));
        }
        let n = self.params.string_bits();
        for (i, bit) in digest.bits().enumerate() {
            if eval_f(self.keys.f(), sig.chunk(i), n)? != self.y(i, bit) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn check_params(&self, sig: &LamportSignature) -> Result<()> {
        if sig.params != self.params {
            return Err(Error::ParamMismatch(format!(
                "signature params {:?} vs key params {:?}",
                sig.params, self.params
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.params.write_header(&mut w, PUBLIC_KEY_MAGIC);
        w.bytes(&self.y);
        w.finish()
    }

    /// Parses `LPK1 ‖ n ‖ ℓ ‖ y`. The family keys are not part of the
    /// encoding and must be supplied.
    pub fn from_bytes(bytes: &[u8], keys: &FamilyKeys) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let pk = Self::read(&mut r, keys)?;
        r.end()?;
        Ok(pk)
    }

    pub(crate) fn read(r: &mut Reader<'_>, keys: &FamilyKeys) -> Result<Self> {
        let params = LamportParams::read_header(r, PUBLIC_KEY_MAGIC)?;
        let y = r.take(params.public_key_bits() / 8)?.to_vec();
        Ok(LamportPublicKey {
            params,
            keys: keys.clone(),
            y,
        })
    }
}

impl LamportSignature {
    pub fn from_chunks(params: LamportParams, chunks: &[Vec<u8>]) -> Result<Self> {
        if chunks.len() != params.digest_bits()
            || chunks.iter().any(|c| c.len() != params.string_bytes())
        {
            return Err(Error::Malformed(format!(
                "signature needs {} chunks of {} octets",
                params.digest_bits(),
                params.string_bytes()
            )));
        }
        Ok(LamportSignature {
            params,
            strings: chunks.concat(),
        })
    }

    pub fn params(&self) -> LamportParams {
        self.params
    }

    pub fn chunk(&self, i: usize) -> &[u8] {
        let nb = self.params.string_bytes();
        &self.strings[i * nb..(i + 1) * nb]
    }

    pub fn chunks(&self) -> impl Iterator<Item = &[u8]> {
        self.strings.chunks_exact(self.params.string_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        self.params.write_header(&mut w, SIGNATURE_MAGIC);
        w.bytes(&self.strings);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let sig = Self::read(&mut r)?;
        r.end()?;
        Ok(sig)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let params = LamportParams::read_header(r, SIGNATURE_MAGIC)?;
        let strings = r.take(params.signature_bits() / 8)?.to_vec();
        Ok(LamportSignature { params, strings })
    }
}

/// Random access to one private string of a seeded key, without expanding
/// the rest of the key.
pub fn seeded_string(params: LamportParams, seed: &Seed, i: usize, bit: u8) -> Zeroizing<Vec<u8>> {
    let range = params.slot(i, bit);
    prng_range(seed, range.start, range.len())
}
