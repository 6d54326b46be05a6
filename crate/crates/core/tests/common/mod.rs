//! Test-only oracles, written without reference to the library code.
#![allow(dead_code)]

pub mod client_ops;
pub mod race;

use spv_core::fixture::mine;
use spv_core::hash::Hash;
use spv_core::headers::{encode_compact, BlockHeader, Target};

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

/// Plain SHA-256.
pub fn ref_sha256(data: &[u8]) -> [u8; 32] {
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
    ];
    let mut msg = data.to_vec();
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&((data.len() as u64) * 8).to_be_bytes());
    for block in msg.chunks(64) {
        let mut w = [0u32; 64];
        for i in 0..16 {
            w[i] = u32::from_be_bytes(block[4 * i..4 * i + 4].try_into().unwrap());
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
        for i in 0..64 {
            let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh.wrapping_add(s1).wrapping_add(ch).wrapping_add(K[i]).wrapping_add(w[i]);
            let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = s0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (x, y) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *x = x.wrapping_add(y);
        }
    }
    let mut out = [0u8; 32];
    for (i, word) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

pub fn ref_sha256d(data: &[u8]) -> Hash {
    Hash(ref_sha256(&ref_sha256(data)))
}

pub fn ref_leaf(payload: &[u8]) -> Hash {
    let mut b = vec![0x00];
    b.extend_from_slice(payload);
    ref_sha256d(&b)
}

pub fn ref_node(l: &Hash, r: &Hash) -> Hash {
    let mut b = vec![0x01];
    b.extend_from_slice(&l.0);
    b.extend_from_slice(&r.0);
    ref_sha256d(&b)
}

/// Root by recomputing every level from scratch.
pub fn naive_root(level: &[Hash]) -> Hash {
    if level.len() == 1 {
        return level[0];
    }
    let next: Vec<Hash> = level
        .chunks(2)
        .map(|pair| ref_node(&pair[0], pair.get(1).unwrap_or(&pair[0])))
        .collect();
    naive_root(&next)
}

/// Number of levels including leaves and root.
pub fn naive_depth(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        1 + naive_depth(n.div_ceil(2))
    }
}

/// Mines a child of `prev` at `target`, with a Merkle root derived from `salt`.
pub fn mine_child(prev: &BlockHeader, target: &Target, timestamp: u32, salt: u64) -> BlockHeader {
    let mut root = [0u8; 32];
    root[..8].copy_from_slice(&salt.to_le_bytes());
    let template = BlockHeader {
        version: 1,
        prev_hash: prev.hash(),
        merkle_root: Hash(root),
        timestamp,
        n_bits: encode_compact(target),
        nonce: 0,
    };
    mine(template, target, 1 << 26).expect("easy target")
}

/// `len` headers extending `from`, spaced `step` seconds apart.
pub fn mine_branch(from: &BlockHeader, target: &Target, len: usize, step: u32, salt: u64) -> Vec<BlockHeader> {
    let mut out = Vec::with_capacity(len);
    let mut prev = *from;
    for i in 0..len {
        let h = mine_child(&prev, target, prev.timestamp + step, salt.wrapping_mul(1_000).wrapping_add(i as u64));
        out.push(h);
        prev = h;
    }
    out
}

/// Smallest nonce adjustment making `h` fail `target`.
pub fn break_pow(mut h: BlockHeader, target: &Target) -> BlockHeader {
    while target.is_met_by(&h.hash()) {
        h.nonce = h.nonce.wrapping_add(1);
    }
    h
}
