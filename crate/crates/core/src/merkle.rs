//! Merkle trees over Lamport public keys.
//!
//! A tree of height `H` authenticates `2^H` one-time keys under a single
//! `m`-bit root. Leaf `i` is `T(serialized OTS public key i)`; an inner
//! node is `T(left ‖ right)`. Every leaf key pair is derived from the
//! master seed, so only the seed and the leaf-use bitmap are secret state.

use std::fmt;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::lamport::{keygen_from_seed, LamportParams, LamportPublicKey, LamportSignature};
use crate::primitives::{eval_t, prng_expand, FamilyKeys, Seed};

pub const SIGNATURE_MAGIC: &[u8; 4] = b"MSG1";
pub const ROOT_MAGIC: &[u8; 4] = b"MRT1";
pub const MAX_HEIGHT: u8 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MerkleParams {
    height: u8,
    node_bits: u16,
    ots: LamportParams,
}

impl MerkleParams {
    pub fn new(height: u8, node_bits: usize, ots: LamportParams) -> Result<Self> {
        if height > MAX_HEIGHT {
            return Err(Error::InvalidParameter(format!(
                "tree height {height} exceeds {MAX_HEIGHT}"
            )));
        }
        if node_bits < 8 || node_bits % 8 != 0 || node_bits > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "node bits must be a multiple of 8 in [8, 65528], got {node_bits}"
            )));
        }
        Ok(MerkleParams {
            height,
            node_bits: node_bits as u16,
            ots,
        })
    }

    /// Node hashes as wide as the OTS digest.
    pub fn with_digest_width(height: u8, ots: LamportParams) -> Result<Self> {
        Self::new(height, ots.digest_bits(), ots)
    }

    pub fn height(&self) -> u8 {
        self.height
    }

    pub fn node_bits(&self) -> usize {
        self.node_bits as usize
    }

    pub fn node_bytes(&self) -> usize {
        self.node_bits() / 8
    }

    pub fn ots(&self) -> LamportParams {
        self.ots
    }

    pub fn leaf_count(&self) -> u32 {
        1u32 << self.height
    }
}

/// The tree public key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleRoot {
    height: u8,
    node_bits: u16,
    bytes: Vec<u8>,
}

impl MerkleRoot {
    pub fn height(&self) -> u8 {
        self.height
    }

    pub fn node_bits(&self) -> usize {
        self.node_bits as usize
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(ROOT_MAGIC);
        w.u8(self.height);
        w.u16(self.node_bits);
        w.bytes(&self.bytes);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(ROOT_MAGIC)?;
        let height = r.u8()?;
        let node_bits = r.u16()?;
        if height > MAX_HEIGHT || node_bits == 0 || node_bits % 8 != 0 {
            return Err(Error::Malformed(format!("bad root header H={height} m={node_bits}")));
        }
        let bytes = r.take(node_bits as usize / 8)?.to_vec();
        r.end()?;
        Ok(MerkleRoot {
            height,
            node_bits,
            bytes,
        })
    }
}

/// Counters recorded while building a tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KeygenStats {
    pub leaf_hashes: u64,
    pub combining_calls: u64,
}

/// Counters recorded while checking an authentication path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyStats {
    pub tree_hash_calls: u64,
}

/// Seed of leaf `i`: the expansion of `master ‖ i` to the master's length.
pub fn derive_leaf_seed(master: &Seed, leaf: u32) -> Result<Seed> {
    let mut input = master.as_bytes().to_vec();
    input.extend_from_slice(&leaf.to_be_bytes());
    let expanded = prng_expand(&Seed::new(input)?, master.bits())?;
    Seed::new(expanded.to_vec())
}

pub struct MerkleKeySet {
    params: MerkleParams,
    master_seed: Seed,
    keys: FamilyKeys,
    // Heap layout: node k has children 2k and 2k+1, stored at k - 1.
    nodes: Vec<Vec<u8>>,
    used: Vec<bool>,
    next_leaf: u32,
    stats: KeygenStats,
}

impl fmt::Debug for MerkleKeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MerkleKeySet")
            .field("params", &self.params)
            .field("next_leaf", &self.next_leaf)
            .field("root", &hex::encode(self.node(1)))
            .finish_non_exhaustive()
    }
}

impl MerkleKeySet {
    pub fn generate(params: MerkleParams, seed: &Seed, keys: &FamilyKeys) -> Result<Self> {
        let leaves = params.leaf_count() as usize;
        let mut nodes = vec![Vec::new(); 2 * leaves - 1];
        let mut stats = KeygenStats::default();
        for leaf in 0..leaves {
            let (_, pk) = keygen_from_seed(params.ots, keys, &derive_leaf_seed(seed, leaf as u32)?)?;
            nodes[leaves + leaf - 1] = eval_t(keys.t(), &pk.to_bytes(), params.node_bits())?;
            stats.leaf_hashes += 1;
        }
        for k in (1..leaves).rev() {
            let mut input = nodes[2 * k - 1].clone();
            input.extend_from_slice(&nodes[2 * k]);
            nodes[k - 1] = eval_t(keys.t(), &input, params.node_bits())?;
            stats.combining_calls += 1;
        }
        Ok(MerkleKeySet {
            params,
            master_seed: seed.clone(),
            keys: keys.clone(),
            nodes,
            used: vec![false; leaves],
            next_leaf: 0,
            stats,
        })
    }

    /// Rebuilds a key set from persisted state.
    pub fn restore(
        params: MerkleParams,
        seed: &Seed,
        keys: &FamilyKeys,
        next_leaf: u32,
        used: Vec<bool>,
    ) -> Result<Self> {
        if used.len() != params.leaf_count() as usize || next_leaf > params.leaf_count() {
            return Err(Error::Malformed("leaf state does not match tree height".into()));
        }
        let mut set = Self::generate(params, seed, keys)?;
        set.used = used;
        set.next_leaf = next_leaf;
        Ok(set)
    }

    pub fn params(&self) -> MerkleParams {
        self.params
    }

    pub fn master_seed(&self) -> &Seed {
        &self.master_seed
    }

    pub fn stats(&self) -> KeygenStats {
        self.stats
    }

    pub fn root(&self) -> MerkleRoot {
        MerkleRoot {
            height: self.params.height,
            node_bits: self.params.node_bits,
            bytes: self.node(1).to_vec(),
        }
    }

    pub fn used_leaves(&self) -> &[bool] {
        &self.used
    }

    pub fn next_leaf_cursor(&self) -> u32 {
        self.next_leaf
    }

    /// The leaf the next call to [`sign`](Self::sign) will consume.
    pub fn peek_next_leaf(&self) -> Option<u32> {
        (self.next_leaf..self.params.leaf_count()).find(|&i| !self.used[i as usize])
    }

    pub fn remaining(&self) -> usize {
        self.used.iter().filter(|u| !**u).count()
    }

    fn node(&self, k: usize) -> &[u8] {
        &self.nodes[k - 1]
    }

    /// Sibling nodes from the leaf level up to just below the root.
    pub fn auth_path(&self, leaf: u32) -> Vec<Vec<u8>> {
        let mut k = self.params.leaf_count() as usize + leaf as usize;
        let mut path = Vec::with_capacity(self.params.height as usize);
        while k > 1 {
            path.push(self.node(k ^ 1).to_vec());
            k /= 2;
        }
        path
    }

    pub fn sign(&mut self, message: &[u8]) -> Result<MerkleSignature> {
        let leaf = self.peek_next_leaf().ok_or(Error::TreeExhausted)?;
        self.used[leaf as usize] = true;
        self.next_leaf = leaf + 1;
        let leaf_seed = derive_leaf_seed(&self.master_seed, leaf)?;
        let (mut sk, pk) = keygen_from_seed(self.params.ots, &self.keys, &leaf_seed)?;
        let ots_signature = sk.sign(&self.keys, message)?;
        Ok(MerkleSignature {
            leaf_index: leaf,
            ots_public: pk,
            ots_signature,
            auth_path: self.auth_path(leaf),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleSignature {
    pub leaf_index: u32,
    pub ots_public: LamportPublicKey,
    pub ots_signature: LamportSignature,
    pub auth_path: Vec<Vec<u8>>,
}

impl MerkleSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let node_bits = self.auth_path.first().map_or(
            self.ots_public.params().digest_bits(),
            |n| n.len() * 8,
        );
        self.to_bytes_with(node_bits)
    }

    fn to_bytes_with(&self, node_bits: usize) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(SIGNATURE_MAGIC);
        w.u8(self.auth_path.len() as u8);
        w.u16(node_bits as u16);
        w.u32(self.leaf_index);
        w.bytes(&self.ots_public.to_bytes());
        w.bytes(&self.ots_signature.to_bytes());
        for node in &self.auth_path {
            w.bytes(node);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], keys: &FamilyKeys) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(SIGNATURE_MAGIC)?;
        let height = r.u8()?;
        let node_bits = r.u16()? as usize;
        if height > MAX_HEIGHT || node_bits == 0 || node_bits % 8 != 0 {
            return Err(Error::Malformed(format!(
                "bad signature header H={height} m={node_bits}"
            )));
        }
        let leaf_index = r.u32()?;
        let ots_public = LamportPublicKey::read(&mut r, keys)?;
        let ots_signature = LamportSignature::read(&mut r)?;
        let auth_path = (0..height)
            .map(|_| r.take(node_bits / 8).map(<[u8]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        r.end()?;
        Ok(MerkleSignature {
            leaf_index,
            ots_public,
            ots_signature,
            auth_path,
        })
    }
}

/// Checks the OTS signature and folds the authentication path up to the
/// root.
pub fn merkle_verify(
    root: &MerkleRoot,
    params: &MerkleParams,
    keys: &FamilyKeys,
    message: &[u8],
    sig: &MerkleSignature,
) -> Result<bool> {
    verify_counted(root, params, keys, message, sig).map(|(ok, _)| ok)
}

pub fn verify_counted(
    root: &MerkleRoot,
    params: &MerkleParams,
    keys: &FamilyKeys,
    message: &[u8],
    sig: &MerkleSignature,
) -> Result<(bool, VerifyStats)> {
    let mut stats = VerifyStats::default();
    if root.height != params.height || root.node_bits != params.node_bits {
        return Err(Error::ParamMismatch("root does not match tree parameters".into()));
    }
    if sig.auth_path.len() != params.height as usize {
        return Err(Error::Malformed(format!(
            "authentication path has {} entries, expected {}",
            sig.auth_path.len(),
            params.height
        )));
    }
    if sig.auth_path.iter().any(|n| n.len() != params.node_bytes()) {
        return Err(Error::Malformed("authentication path entry has wrong width".into()));
    }
    if sig.leaf_index >= params.leaf_count() {
        return Err(Error::Malformed(format!("leaf index {} out of range", sig.leaf_index)));
    }
    if sig.ots_public.params() != params.ots || sig.ots_public.family_keys() != keys {
        return Err(Error::ParamMismatch("one-time key does not match tree parameters".into()));
    }

    if !sig.ots_public.verify(message, &sig.ots_signature)? {
        return Ok((false, stats));
    }

    let mut node = eval_t(keys.t(), &sig.ots_public.to_bytes(), params.node_bits())?;
    stats.tree_hash_calls += 1;
    let mut index = sig.leaf_index;
    for sibling in &sig.auth_path {
        let input = if index & 1 == 0 {
            [node.as_slice(), sibling].concat()
        } else {
            [sibling.as_slice(), node.as_slice()].concat()
        };
        node = eval_t(keys.t(), &input, params.node_bits())?;
        stats.tree_hash_calls += 1;
        index >>= 1;
    }
    Ok((crate::primitives::ct_eq(&node, &root.bytes), stats))
}
