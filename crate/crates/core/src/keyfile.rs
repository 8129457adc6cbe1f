//! File-backed signing keys.
//!
//! A key file is locked for the duration of a signing operation and its
//! used-flag (or leaf bitmap, for tree keys) is written and synced before
//! any signature octet leaves the process. A crash at any point therefore
//! leaves either an unused key and no signature, or a used key.
//!
//! Signing walks a fixed sequence of [`Checkpoint`]s; a [`FaultHook`] can
//! abort the operation at any of them to emulate a crash.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use zeroize::Zeroizing;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::lamport::{
    LamportParams, LamportPrivateKey, PRIVATE_KEY_FLAG_OFFSET, PRIVATE_KEY_HEADER_BYTES,
    PRIVATE_KEY_MAGIC,
};
use crate::merkle::{MerkleKeySet, MerkleParams};
use crate::primitives::{FamilyKeys, Seed};

pub const MERKLE_STATE_MAGIC: &[u8; 4] = b"MSK1";

/// Points in a file-backed signing operation where a crash is emulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Checkpoint {
    Loaded,
    FlagWritten,
    FlagSynced,
    SignatureComputed,
    MaterialErased,
    /// Before writing octets `[offset, offset + len)` of the signature.
    SignatureWrite { offset: usize },
    Done,
}

pub trait FaultHook {
    fn reach(&mut self, point: Checkpoint) -> Result<()>;
}

/// Never faults.
pub struct NoFaults;

impl FaultHook for NoFaults {
    fn reach(&mut self, _: Checkpoint) -> Result<()> {
        Ok(())
    }
}

/// Faults at the `n`-th checkpoint reached (0-based) and records the
/// checkpoints seen.
#[derive(Debug, Default)]
pub struct FaultAt {
    pub target: usize,
    pub seen: Vec<Checkpoint>,
}

impl FaultAt {
    pub fn new(target: usize) -> Self {
        FaultAt {
            target,
            seen: Vec::new(),
        }
    }
}

impl FaultHook for FaultAt {
    fn reach(&mut self, point: Checkpoint) -> Result<()> {
        let idx = self.seen.len();
        self.seen.push(point);
        if idx == self.target {
            Err(Error::InjectedFault(point))
        } else {
            Ok(())
        }
    }
}

/// Records every checkpoint without faulting.
#[derive(Debug, Default)]
pub struct Trace(pub Vec<Checkpoint>);

impl FaultHook for Trace {
    fn reach(&mut self, point: Checkpoint) -> Result<()> {
        self.0.push(point);
        Ok(())
    }
}

/// Size of the signature pieces written between checkpoints.
const WRITE_CHUNK: usize = 64;

fn open_locked(path: &Path) -> Result<File> {
    let file = OpenOptions::new().read(true).write(true).open(path)?;
    file.lock()?;
    Ok(file)
}

fn read_all(file: &mut File) -> Result<Zeroizing<Vec<u8>>> {
    let mut buf = Zeroizing::new(Vec::new());
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut buf)?;
    Ok(buf)
}

fn emit(
    bytes: &[u8],
    out: &mut dyn Write,
    hook: &mut dyn FaultHook,
) -> Result<()> {
    for (k, piece) in bytes.chunks(WRITE_CHUNK).enumerate() {
        hook.reach(Checkpoint::SignatureWrite {
            offset: k * WRITE_CHUNK,
        })?;
        out.write_all(piece)?;
    }
    out.flush()?;
    hook.reach(Checkpoint::Done)
}

/// Writes a fresh private key file. Refuses to overwrite.
pub fn create_key_file(path: &Path, key: &LamportPrivateKey) -> Result<()> {
    let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
    file.write_all(&key.to_bytes())?;
    file.sync_all()?;
    Ok(())
}

/// Signs `message` with the Lamport key stored at `path` and writes the
/// serialized signature to `out`.
pub fn sign_key_file(
    path: &Path,
    keys: &FamilyKeys,
    message: &[u8],
    out: &mut dyn Write,
    hook: &mut dyn FaultHook,
) -> Result<()> {
    let mut file = open_locked(path)?;
    let raw = read_all(&mut file)?;
    let mut key = LamportPrivateKey::from_bytes(&raw)?;
    if key.is_used() {
        return Err(Error::KeyAlreadyUsed);
    }
    hook.reach(Checkpoint::Loaded)?;

    file.seek(SeekFrom::Start(PRIVATE_KEY_FLAG_OFFSET as u64))?;
    file.write_all(&[1])?;
    hook.reach(Checkpoint::FlagWritten)?;
    file.sync_all()?;
    hook.reach(Checkpoint::FlagSynced)?;

    let sig = key.sign(keys, message)?;
    hook.reach(Checkpoint::SignatureComputed)?;

    let wiped = key.to_bytes();
    file.seek(SeekFrom::Start(PRIVATE_KEY_HEADER_BYTES as u64))?;
    file.write_all(&wiped[PRIVATE_KEY_HEADER_BYTES..])?;
    file.sync_all()?;
    hook.reach(Checkpoint::MaterialErased)?;

    emit(&sig.to_bytes(), out, hook)
}

/// Reads only the header of a key file, to tell used keys apart without
/// loading the material.
pub fn key_file_status(path: &Path) -> Result<(LamportParams, bool)> {
    let mut header = [0u8; PRIVATE_KEY_HEADER_BYTES];
    File::open(path)?.read_exact(&mut header).map_err(|_| Error::Malformed("key file too short".into()))?;
    let mut r = Reader::new(&header);
    r.magic(PRIVATE_KEY_MAGIC)?;
    let params = LamportParams::new(r.u16()? as usize, r.u16()? as usize)
        .map_err(|e| Error::Malformed(e.to_string()))?;
    Ok((params, r.u8()? != 0))
}

/// Persistent state of a tree key: parameters, next-leaf cursor, leaf
/// bitmap and master seed.
///
/// `MSK1 ‖ H ‖ m(2) ‖ n(2) ‖ ℓ(2) ‖ cursor(4) ‖ bitmap ‖ seed-len(2) ‖ seed`
pub struct MerkleState {
    pub params: MerkleParams,
    pub next_leaf: u32,
    pub used: Vec<bool>,
    pub seed: Seed,
}

const MERKLE_BITMAP_OFFSET: usize = 4 + 1 + 2 + 2 + 2 + 4;
const MERKLE_CURSOR_OFFSET: usize = MERKLE_BITMAP_OFFSET - 4;

impl MerkleState {
    pub fn of(set: &MerkleKeySet) -> Self {
        MerkleState {
            params: set.params(),
            next_leaf: set.next_leaf_cursor(),
            used: set.used_leaves().to_vec(),
            seed: set.master_seed().clone(),
        }
    }

    fn bitmap(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.used.len().div_ceil(8)];
        for (i, &u) in self.used.iter().enumerate() {
            if u {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MERKLE_STATE_MAGIC);
        w.u8(self.params.height());
        w.u16(self.params.node_bits() as u16);
        w.u16(self.params.ots().string_bits() as u16);
        w.u16(self.params.ots().digest_bits() as u16);
        w.u32(self.next_leaf);
        w.bytes(&self.bitmap());
        w.u16(self.seed.as_bytes().len() as u16);
        w.bytes(self.seed.as_bytes());
        Zeroizing::new(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mal = |e: Error| Error::Malformed(e.to_string());
        let mut r = Reader::new(bytes);
        r.magic(MERKLE_STATE_MAGIC)?;
        let height = r.u8()?;
        let node_bits = r.u16()? as usize;
        let n = r.u16()? as usize;
        let l = r.u16()? as usize;
        let ots = LamportParams::new(n, l).map_err(mal)?;
        let params = MerkleParams::new(height, node_bits, ots).map_err(mal)?;
        let next_leaf = r.u32()?;
        let leaves = params.leaf_count() as usize;
        let bitmap = r.take(leaves.div_ceil(8))?;
        let used = (0..leaves)
            .map(|i| bitmap[i / 8] & (0x80 >> (i % 8)) != 0)
            .collect();
        let seed_len = r.u16()? as usize;
        let seed = Seed::new(r.take(seed_len)?.to_vec()).map_err(mal)?;
        r.end()?;
        if next_leaf > params.leaf_count() {
            return Err(Error::Malformed("leaf cursor out of range".into()));
        }
        Ok(MerkleState {
            params,
            next_leaf,
            used,
            seed,
        })
    }

    pub fn load(&self, keys: &FamilyKeys) -> Result<MerkleKeySet> {
        MerkleKeySet::restore(self.params, &self.seed, keys, self.next_leaf, self.used.clone())
    }
}

pub fn create_merkle_file(path: &Path, set: &MerkleKeySet) -> Result<()> {
    let mut file = OpenOptions::new().write(true).create_new(true).open(path)?;
    file.write_all(&MerkleState::of(set).to_bytes())?;
    file.sync_all()?;
    Ok(())
}

/// Signs with the next unused leaf of the tree key at `path`. The leaf is
/// marked used on disk before the signature is produced.
pub fn sign_merkle_file(
    path: &Path,
    keys: &FamilyKeys,
    message: &[u8],
    out: &mut dyn Write,
    hook: &mut dyn FaultHook,
) -> Result<()> {
    let mut file = open_locked(path)?;
    let raw = read_all(&mut file)?;
    let state = MerkleState::from_bytes(&raw)?;
    let mut set = state.load(keys)?;
    let leaf = set.peek_next_leaf().ok_or(Error::TreeExhausted)?;
    hook.reach(Checkpoint::Loaded)?;

    let mut reserved = MerkleState::of(&set);
    reserved.used[leaf as usize] = true;
    reserved.next_leaf = leaf + 1;
    let bytes = reserved.to_bytes();
    file.seek(SeekFrom::Start(MERKLE_CURSOR_OFFSET as u64))?;
    file.write_all(&bytes[MERKLE_CURSOR_OFFSET..MERKLE_BITMAP_OFFSET + reserved.used.len().div_ceil(8)])?;
    hook.reach(Checkpoint::FlagWritten)?;
    file.sync_all()?;
    hook.reach(Checkpoint::FlagSynced)?;

    let sig = set.sign(message)?;
    debug_assert_eq!(sig.leaf_index, leaf);
    hook.reach(Checkpoint::SignatureComputed)?;
    hook.reach(Checkpoint::MaterialErased)?;

    emit(&sig.to_bytes(), out, hook)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamport::{keygen_from_seed, LamportPublicKey, LamportSignature};
    use crate::merkle::{merkle_verify, MerkleSignature};

    fn key(dir: &Path) -> (std::path::PathBuf, FamilyKeys, LamportPublicKey) {
        let keys = FamilyKeys::from_label(b"keyfile");
        let params = LamportParams::new(16, 16).unwrap();
        let seed = Seed::new(vec![4; 16]).unwrap();
        let (sk, pk) = keygen_from_seed(params, &keys, &seed).unwrap();
        let path = dir.join("k.lsk");
        create_key_file(&path, &sk).unwrap();
        (path, keys, pk)
    }

    #[test]
    fn sign_once_then_refuse() {
        let dir = tempfile::tempdir().unwrap();
        let (path, keys, pk) = key(dir.path());
        let mut out = Vec::new();
        sign_key_file(&path, &keys, b"msg", &mut out, &mut NoFaults).unwrap();
        let sig = LamportSignature::from_bytes(&out).unwrap();
        assert!(pk.verify(b"msg", &sig).unwrap());
        assert!(key_file_status(&path).unwrap().1);
        let mut again = Vec::new();
        assert!(matches!(
            sign_key_file(&path, &keys, b"msg", &mut again, &mut NoFaults),
            Err(Error::KeyAlreadyUsed)
        ));
        assert!(again.is_empty());
        let stored = std::fs::read(&path).unwrap();
        assert!(stored[PRIVATE_KEY_HEADER_BYTES..].iter().all(|&b| b == 0));
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let (path, _, _) = key(dir.path());
        let sk = LamportPrivateKey::from_seed(
            LamportParams::new(16, 16).unwrap(),
            &Seed::new(vec![5; 16]).unwrap(),
        )
        .unwrap();
        assert!(matches!(create_key_file(&path, &sk), Err(Error::Io(_))));
    }

    #[test]
    fn fault_after_flag_leaves_key_unusable() {
        let dir = tempfile::tempdir().unwrap();
        let (path, keys, _) = key(dir.path());
        let mut out = Vec::new();
        let err = sign_key_file(&path, &keys, b"msg", &mut out, &mut FaultAt::new(1));
        assert!(matches!(err, Err(Error::InjectedFault(Checkpoint::FlagWritten))));
        assert!(out.is_empty());
        assert!(matches!(
            sign_key_file(&path, &keys, b"msg", &mut out, &mut NoFaults),
            Err(Error::KeyAlreadyUsed)
        ));
    }

    #[test]
    fn merkle_file_signs_sequentially() {
        let dir = tempfile::tempdir().unwrap();
        let keys = FamilyKeys::from_label(b"tree file");
        let params = MerkleParams::with_digest_width(1, LamportParams::new(16, 16).unwrap()).unwrap();
        let set = MerkleKeySet::generate(params, &Seed::new(vec![8; 16]).unwrap(), &keys).unwrap();
        let root = set.root();
        let path = dir.path().join("tree.msk");
        create_merkle_file(&path, &set).unwrap();
        for i in 0..2u32 {
            let mut out = Vec::new();
            sign_merkle_file(&path, &keys, b"m", &mut out, &mut NoFaults).unwrap();
            let sig = MerkleSignature::from_bytes(&out, &keys).unwrap();
            assert_eq!(sig.leaf_index, i);
            assert!(merkle_verify(&root, &params, &keys, b"m", &sig).unwrap());
        }
        let mut out = Vec::new();
        assert!(matches!(
            sign_merkle_file(&path, &keys, b"m", &mut out, &mut NoFaults),
            Err(Error::TreeExhausted)
        ));
    }

    #[test]
    fn merkle_state_roundtrip() {
        let keys = FamilyKeys::from_label(b"state");
        let params = MerkleParams::with_digest_width(3, LamportParams::new(16, 16).unwrap()).unwrap();
        let mut set = MerkleKeySet::generate(params, &Seed::new(vec![9; 16]).unwrap(), &keys).unwrap();
        set.sign(b"x").unwrap();
        set.sign(b"y").unwrap();
        let state = MerkleState::from_bytes(&MerkleState::of(&set).to_bytes()).unwrap();
        assert_eq!(state.next_leaf, 2);
        assert_eq!(state.used, set.used_leaves());
        assert_eq!(state.load(&keys).unwrap().root(), set.root());
    }
}
