//! Block headers: the 80-byte codec, compact targets, proof-of-work checks,
//! chain parsing, heaviest-consistent-chain selection, differential sync and
//! compressed header trees (CHT).

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hash::{sha256d, Hash};
use crate::merkle::{self, MerkleError, MerkleProof, MerkleTree};

pub const HEADER_LEN: usize = 80;
pub const RETARGET_WINDOW: u32 = 2016;
pub const TARGET_SPACING_S: u32 = 600;
/// Bound on how far one retarget may move the target, in either direction.
pub const RETARGET_CLAMP: u64 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeaderError {
    #[error("header must be exactly 80 bytes, got {0}")]
    WrongLength(usize),
    #[error("compact target decodes to zero")]
    ZeroTarget,
    #[error("target does not fit in 256 bits")]
    Overflow,
    #[error("invalid hex: {0}")]
    InvalidHex(String),
    #[error("no candidate chain is consistent")]
    NoConsistentCandidate,
    #[error(transparent)]
    Merkle(#[from] MerkleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct BlockHeader {
    pub version: i32,
    pub prev_hash: Hash,
    pub merkle_root: Hash,
    pub timestamp: u32,
    pub n_bits: u32,
    pub nonce: u32,
}

impl BlockHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&self.version.to_le_bytes());
        out[4..36].copy_from_slice(self.prev_hash.as_bytes());
        out[36..68].copy_from_slice(self.merkle_root.as_bytes());
        out[68..72].copy_from_slice(&self.timestamp.to_le_bytes());
        out[72..76].copy_from_slice(&self.n_bits.to_le_bytes());
        out[76..80].copy_from_slice(&self.nonce.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<BlockHeader, HeaderError> {
        if bytes.len() != HEADER_LEN {
            return Err(HeaderError::WrongLength(bytes.len()));
        }
        let word = |at: usize| -> [u8; 4] { bytes[at..at + 4].try_into().expect("4 bytes") };
        Ok(BlockHeader {
            version: i32::from_le_bytes(word(0)),
            prev_hash: Hash::from_slice(&bytes[4..36]).expect("32 bytes"),
            merkle_root: Hash::from_slice(&bytes[36..68]).expect("32 bytes"),
            timestamp: u32::from_le_bytes(word(68)),
            n_bits: u32::from_le_bytes(word(72)),
            nonce: u32::from_le_bytes(word(76)),
        })
    }

    /// Double SHA-256 of the 80-byte encoding.
    pub fn hash(&self) -> Hash {
        sha256d(&self.encode())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<BlockHeader, HeaderError> {
        let bytes = hex::decode(s).map_err(|_| HeaderError::WrongLength(s.len() / 2))?;
        BlockHeader::decode(&bytes)
    }
}

impl Serialize for BlockHeader {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BlockHeader {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BlockHeader::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn encode_header(h: &BlockHeader) -> [u8; HEADER_LEN] {
    h.encode()
}

pub fn decode_header(bytes: &[u8]) -> Result<BlockHeader, HeaderError> {
    BlockHeader::decode(bytes)
}

pub fn header_hash(h: &BlockHeader) -> Hash {
    h.hash()
}

/// Raw concatenated 80-byte records.
pub fn encode_headers(headers: &[BlockHeader]) -> Vec<u8> {
    headers.iter().flat_map(|h| h.encode()).collect()
}

pub fn decode_headers(bytes: &[u8]) -> Result<Vec<BlockHeader>, HeaderError> {
    if !bytes.len().is_multiple_of(HEADER_LEN) {
        return Err(HeaderError::WrongLength(bytes.len() % HEADER_LEN));
    }
    bytes.chunks(HEADER_LEN).map(BlockHeader::decode).collect()
}

/// A 256-bit proof-of-work threshold, strictly positive.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Target(BigUint);

impl Target {
    pub fn new(value: BigUint) -> Result<Target, HeaderError> {
        if value.is_zero() {
            Err(HeaderError::ZeroTarget)
        } else if value.bits() > 256 {
            Err(HeaderError::Overflow)
        } else {
            Ok(Target(value))
        }
    }

    pub fn from_compact(n_bits: u32) -> Result<Target, HeaderError> {
        decode_compact(n_bits)
    }

    pub fn to_compact(&self) -> u32 {
        encode_compact(self)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn from_be_hex(s: &str) -> Result<Target, HeaderError> {
        let bytes = hex::decode(s.trim_start_matches("0x")).map_err(|e| HeaderError::InvalidHex(e.to_string()))?;
        Target::new(BigUint::from_bytes_be(&bytes))
    }

    pub fn from_be_bytes(bytes: &[u8; 32]) -> Result<Target, HeaderError> {
        Target::new(BigUint::from_bytes_be(bytes))
    }

    /// 64 hex digits, big-endian.
    pub fn to_be_hex(&self) -> String {
        hex::encode(self.to_be_bytes())
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let bytes = self.0.to_bytes_be();
        let mut out = [0u8; 32];
        out[32 - bytes.len()..].copy_from_slice(&bytes);
        out
    }

    /// `floor(2^256 / T)`.
    pub fn work(&self) -> BigUint {
        (BigUint::one() << 256u32) / &self.0
    }

    /// Whether `hash`, read as a big-endian integer, is strictly below the target.
    pub fn is_met_by(&self, hash: &Hash) -> bool {
        hash_to_uint(hash) < self.0
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target(0x{})", self.to_be_hex())
    }
}

pub fn hash_to_uint(hash: &Hash) -> BigUint {
    BigUint::from_bytes_be(hash.as_bytes())
}

/// `mantissa * 256^(exponent - 3)` with the mantissa in the low three bytes
/// and the exponent in the top byte.
pub fn decode_compact(n_bits: u32) -> Result<Target, HeaderError> {
    let exponent = n_bits >> 24;
    let mantissa = BigUint::from(n_bits & 0x00ff_ffff);
    if mantissa.is_zero() {
        return Err(HeaderError::ZeroTarget);
    }
    let value = if exponent >= 3 {
        mantissa << (8 * (exponent - 3))
    } else {
        mantissa >> (8 * (3 - exponent))
    };
    Target::new(value)
}

/// Canonical compact form: normalised mantissa whose high bit is never set.
pub fn encode_compact(target: &Target) -> u32 {
    let value = target.value();
    let mut size = value.bits().div_ceil(8) as u32;
    let mut mantissa: u32 = if size <= 3 {
        let low = value.iter_u32_digits().next().unwrap_or(0);
        low << (8 * (3 - size))
    } else {
        let shifted: BigUint = value >> (8 * (size - 3));
        shifted.iter_u32_digits().next().unwrap_or(0)
    };
    if mantissa & 0x0080_0000 != 0 {
        mantissa >>= 8;
        size += 1;
    }
    (size << 24) | mantissa
}

/// Rounds a target through the compact encoding.
pub fn canonicalize(target: &Target) -> Target {
    decode_compact(encode_compact(target)).expect("canonical compact form of a positive target")
}

/// Scales `prev_target` by the clamped ratio of observed to expected window
/// duration and rounds the result to compact precision.
pub fn retarget(prev_target: &Target, actual_timespan_s: u64, expected_timespan_s: u64) -> Target {
    let expected = expected_timespan_s.max(1);
    let actual = actual_timespan_s.clamp(expected / RETARGET_CLAMP, expected * RETARGET_CLAMP).max(1);
    let mut scaled = prev_target.value() * BigUint::from(actual) / BigUint::from(expected);
    let max = (BigUint::one() << 256u32) - BigUint::one();
    if scaled > max {
        scaled = max;
    }
    if scaled.is_zero() {
        scaled = BigUint::one();
    }
    canonicalize(&Target(scaled))
}

/// Network parameters needed to compute the expected target at any height.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainParams {
    /// Target of the genesis header; retargets never go above it.
    pub target: Target,
    pub retarget_window: u32,
    pub target_spacing_s: u32,
}

impl ChainParams {
    pub fn new(target: Target) -> ChainParams {
        ChainParams {
            target,
            retarget_window: RETARGET_WINDOW,
            target_spacing_s: TARGET_SPACING_S,
        }
    }

    pub fn from_compact(n_bits: u32) -> Result<ChainParams, HeaderError> {
        Ok(ChainParams::new(decode_compact(n_bits)?))
    }

    /// The target the header at index `prefix.len()` must carry.
    pub fn expected_target(&self, prefix: &[BlockHeader]) -> Target {
        let height = prefix.len();
        let Some(prev) = prefix.last() else {
            return self.target.clone();
        };
        // An undecodable predecessor never got past validation; fall back to
        // the network target so the caller reports a Malformed verdict.
        let prev_target = decode_compact(prev.n_bits).unwrap_or_else(|_| self.target.clone());
        let window = self.retarget_window as usize;
        if window == 0 || !height.is_multiple_of(window) {
            return prev_target;
        }
        let first = &prefix[height - window];
        let actual = u64::from(prev.timestamp.saturating_sub(first.timestamp));
        let expected = u64::from(self.retarget_window) * u64::from(self.target_spacing_s);
        let next = retarget(&prev_target, actual, expected);
        if next > self.target {
            self.target.clone()
        } else {
            next
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Ok,
    /// Broken chain linkage.
    Linkage,
    /// Insufficient proof-of-work.
    Pow,
    /// Malformed or manipulated header.
    Malformed,
}

impl Verdict {
    pub fn is_ok(self) -> bool {
        self == Verdict::Ok
    }
}

/// Checks, in order: linkage to `prev`, proof-of-work against
/// `expected_target`, then well-formedness (positive version, strictly
/// increasing timestamp, `n_bits` equal to the canonical encoding of the
/// expected target, all-zero parent for genesis).
pub fn validate_header(prev: Option<&BlockHeader>, h: &BlockHeader, expected_target: &Target) -> Verdict {
    validate_header_with_prev_hash(prev.map(|p| (p, p.hash())), h, expected_target)
}

pub(crate) fn validate_header_with_prev_hash(
    prev: Option<(&BlockHeader, Hash)>,
    h: &BlockHeader,
    expected_target: &Target,
) -> Verdict {
    if let Some((_, prev_hash)) = prev {
        if h.prev_hash != prev_hash {
            return Verdict::Linkage;
        }
    }
    if !expected_target.is_met_by(&h.hash()) {
        return Verdict::Pow;
    }
    let timestamp_ok = match prev {
        Some((p, _)) => h.timestamp > p.timestamp,
        None => h.prev_hash == Hash::ZERO,
    };
    if !timestamp_ok || h.version < 1 || h.n_bits != encode_compact(expected_target) {
        return Verdict::Malformed;
    }
    Verdict::Ok
}

/// A validated, append-only run of headers starting at genesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderChain {
    params: ChainParams,
    headers: Vec<BlockHeader>,
    hashes: Vec<Hash>,
    work: BigUint,
}

impl HeaderChain {
    pub fn new(params: ChainParams) -> HeaderChain {
        HeaderChain {
            params,
            headers: Vec::new(),
            hashes: Vec::new(),
            work: BigUint::zero(),
        }
    }

    /// Wraps `headers` without validating them; see [`is_consistent`].
    pub fn from_headers_unchecked(
        params: ChainParams,
        headers: Vec<BlockHeader>,
    ) -> Result<HeaderChain, HeaderError> {
        let work = cumulative_work(&headers)?;
        let hashes = headers.iter().map(BlockHeader::hash).collect();
        Ok(HeaderChain {
            params,
            headers,
            hashes,
            work,
        })
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn hashes(&self) -> &[Hash] {
        &self.hashes
    }

    pub fn len(&self) -> usize {
        self.headers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headers.is_empty()
    }

    /// Index of the tip, or `None` for an empty chain.
    pub fn height(&self) -> Option<usize> {
        self.headers.len().checked_sub(1)
    }

    pub fn tip(&self) -> Option<&BlockHeader> {
        self.headers.last()
    }

    pub fn tip_hash(&self) -> Option<Hash> {
        self.hashes.last().copied()
    }

    pub fn get(&self, index: usize) -> Option<&BlockHeader> {
        self.headers.get(index)
    }

    pub fn hash_at(&self, index: usize) -> Option<Hash> {
        self.hashes.get(index).copied()
    }

    pub fn position(&self, hash: &Hash) -> Option<usize> {
        self.hashes.iter().position(|h| h == hash)
    }

    pub fn work(&self) -> &BigUint {
        &self.work
    }

    pub fn next_expected_target(&self) -> Target {
        self.params.expected_target(&self.headers)
    }

    /// Validates `h` against the tip and appends it on success.
    pub fn validate_next(&self, h: &BlockHeader) -> Verdict {
        let prev = self.tip().zip(self.tip_hash());
        validate_header_with_prev_hash(prev, h, &self.next_expected_target())
    }

    pub fn push(&mut self, h: BlockHeader) -> Verdict {
        let verdict = self.validate_next(&h);
        if verdict.is_ok() {
            self.push_unchecked(h);
        }
        verdict
    }

    fn push_unchecked(&mut self, h: BlockHeader) {
        let target = decode_compact(h.n_bits).expect("validated header has a positive target");
        self.work += target.work();
        self.hashes.push(h.hash());
        self.headers.push(h);
    }

    /// Drops every header at index `len` and above.
    pub fn truncate(&mut self, len: usize) {
        for h in self.headers.drain(len.min(self.headers.len())..) {
            if let Ok(target) = decode_compact(h.n_bits) {
                self.work -= target.work();
            }
        }
        self.hashes.truncate(len);
    }
}

/// Longest valid prefix of `headers`, validating from genesis and stopping
/// at the first failure.
pub fn parse_chain(params: &ChainParams, headers: &[BlockHeader]) -> HeaderChain {
    parse_chain_with_report(params, headers).0
}

/// As [`parse_chain`], also returning the index and verdict of the first
/// rejected header, if any.
pub fn parse_chain_with_report(
    params: &ChainParams,
    headers: &[BlockHeader],
) -> (HeaderChain, Option<(usize, Verdict)>) {
    let mut chain = HeaderChain::new(params.clone());
    for (i, h) in headers.iter().enumerate() {
        let verdict = chain.push(*h);
        if !verdict.is_ok() {
            return (chain, Some((i, verdict)));
        }
    }
    (chain, None)
}

/// `sum floor(2^256 / T_i)` over the decoded targets.
pub fn cumulative_work(headers: &[BlockHeader]) -> Result<BigUint, HeaderError> {
    headers.iter().try_fold(BigUint::zero(), |acc, h| {
        Ok(acc + decode_compact(h.n_bits)?.work())
    })
}

/// Every header links to its predecessor, meets its expected target and
/// strictly advances the timestamp.
pub fn is_consistent(chain: &HeaderChain) -> bool {
    let headers = chain.headers();
    (0..headers.len()).all(|i| {
        let prev = i.checked_sub(1).map(|p| (&headers[p], chain.hashes[p]));
        let expected = chain.params.expected_target(&headers[..i]);
        validate_header_with_prev_hash(prev, &headers[i], &expected).is_ok()
    })
}

/// Highest cumulative work among consistent candidates; ties go to the
/// lexicographically smaller tip hash.
pub fn select_chain(candidates: &[HeaderChain]) -> Result<&HeaderChain, HeaderError> {
    candidates
        .iter()
        .filter(|c| is_consistent(c))
        .min_by(|a, b| {
            b.work()
                .cmp(a.work())
                .then_with(|| a.tip_hash().cmp(&b.tip_hash()))
        })
        .ok_or(HeaderError::NoConsistentCandidate)
}

/// Headers the remote holds beyond `local_height`; `-1` means nothing is
/// known locally.
pub fn diff_sync(local_height: i64, remote: &[BlockHeader]) -> &[BlockHeader] {
    let start = usize::try_from(local_height.saturating_add(1)).unwrap_or(0);
    &remote[start.min(remote.len())..]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChtCommitment {
    pub root: Hash,
    pub leaf_count: usize,
}

/// Compressed header tree: a Merkle tree whose leaves are `leaf_hash(hash(H_i))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cht {
    tree: MerkleTree,
}

impl Cht {
    pub fn build(headers: &[BlockHeader]) -> Result<Cht, HeaderError> {
        let leaves: Vec<Hash> = headers.iter().map(header_hash).collect();
        Ok(Cht {
            tree: MerkleTree::build(&leaves)?,
        })
    }

    pub fn commitment(&self) -> ChtCommitment {
        ChtCommitment {
            root: self.tree.root(),
            leaf_count: self.tree.leaf_count(),
        }
    }

    pub fn tree(&self) -> &MerkleTree {
        &self.tree
    }

    pub fn prove(&self, index: usize) -> Result<MerkleProof, HeaderError> {
        Ok(self.tree.prove(index)?)
    }

    /// Adds one header, touching only the new leaf's path. Returns the number
    /// of level entries rewritten.
    pub fn append(&mut self, header: &BlockHeader) -> usize {
        self.tree
            .push_leaf_hash(merkle::leaf_hash(header_hash(header).as_bytes()))
    }
}

pub fn cht_commit(headers: &[BlockHeader]) -> Result<ChtCommitment, HeaderError> {
    Ok(Cht::build(headers)?.commitment())
}

pub fn cht_prove(headers: &[BlockHeader], index: usize) -> Result<MerkleProof, HeaderError> {
    Cht::build(headers)?.prove(index)
}

pub fn cht_verify(header: &BlockHeader, proof: &MerkleProof, commitment: &ChtCommitment) -> bool {
    proof.leaf_index < commitment.leaf_count
        && proof.len() == merkle::proof_len(commitment.leaf_count)
        && merkle::verify_proof(
            &merkle::leaf_hash(header_hash(header).as_bytes()),
            proof,
            &commitment.root,
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pow2(bits: u32) -> BigUint {
        BigUint::one() << bits
    }

    #[test]
    fn zero_header_encodes_to_zero_bytes() {
        let h = BlockHeader::default();
        assert_eq!(h.encode(), [0u8; 80]);
        assert_eq!(BlockHeader::decode(&[0u8; 80]).unwrap(), h);
    }

    #[test]
    fn wrong_length_rejected() {
        assert_eq!(BlockHeader::decode(&[0u8; 79]), Err(HeaderError::WrongLength(79)));
        assert_eq!(BlockHeader::decode(&[0u8; 81]), Err(HeaderError::WrongLength(81)));
    }

    #[test]
    fn field_layout_is_little_endian() {
        let h = BlockHeader {
            version: 0x0403_0201,
            prev_hash: Hash([0x11; 32]),
            merkle_root: Hash([0x22; 32]),
            timestamp: 0x0807_0605,
            n_bits: 0x1d00_ffff,
            nonce: 0xdead_beef,
        };
        let b = h.encode();
        assert_eq!(&b[0..4], &[1, 2, 3, 4]);
        assert_eq!(&b[4..36], &[0x11; 32]);
        assert_eq!(&b[36..68], &[0x22; 32]);
        assert_eq!(&b[68..72], &[5, 6, 7, 8]);
        assert_eq!(&b[72..76], &[0xff, 0xff, 0x00, 0x1d]);
        assert_eq!(&b[76..80], &[0xef, 0xbe, 0xad, 0xde]);
    }

    #[test]
    fn compact_decodes_difficulty_one() {
        let t = decode_compact(0x1d00ffff).unwrap();
        assert_eq!(*t.value(), BigUint::from(0xffffu32) << (8 * 26));
        assert_eq!(
            t.to_be_hex(),
            "00000000ffff0000000000000000000000000000000000000000000000000000"
        );
        assert_eq!(encode_compact(&t), 0x1d00ffff);
    }

    #[test]
    fn compact_errors() {
        assert_eq!(decode_compact(0x1d000000), Err(HeaderError::ZeroTarget));
        assert_eq!(decode_compact(0x2200ffff), Err(HeaderError::Overflow));
        // Small exponents shift the mantissa right.
        assert_eq!(*decode_compact(0x0200ffff).unwrap().value(), BigUint::from(0xffu32));
        assert_eq!(decode_compact(0x01000080), Err(HeaderError::ZeroTarget));
    }

    #[test]
    fn encode_avoids_sign_bit() {
        let t = Target::new(BigUint::from(0x80u32)).unwrap();
        assert_eq!(encode_compact(&t), 0x0200_8000);
        assert_eq!(decode_compact(0x0200_8000).unwrap(), t);
    }

    #[test]
    fn work_is_floor_division() {
        assert_eq!(Target::new(pow2(255)).unwrap().work(), BigUint::from(2u32));
        assert_eq!(Target::new(BigUint::from(3u32)).unwrap().work(), pow2(256) / 3u32);
    }

    #[test]
    fn cumulative_work_of_empty_and_small_chains() {
        assert_eq!(cumulative_work(&[]).unwrap(), BigUint::zero());
        let t255 = encode_compact(&Target::new(pow2(255)).unwrap());
        let t254 = encode_compact(&Target::new(pow2(254)).unwrap());
        let one = BlockHeader { n_bits: t255, ..Default::default() };
        assert_eq!(cumulative_work(&[one]).unwrap(), BigUint::from(2u32));
        let two = BlockHeader { n_bits: t254, ..Default::default() };
        assert_eq!(cumulative_work(&[two, two]).unwrap(), BigUint::from(8u32));
        let zero = BlockHeader { n_bits: 0x1d000000, ..Default::default() };
        assert_eq!(cumulative_work(&[zero]), Err(HeaderError::ZeroTarget));
    }

    #[test]
    fn retarget_identity_and_clamps() {
        let prev = decode_compact(0x1c7fff00).unwrap();
        let expected = 2016 * 600;
        assert_eq!(retarget(&prev, expected, expected), prev);
        let up = retarget(&prev, expected * 10, expected);
        assert_eq!(*up.value(), prev.value() * 4u32);
        let down = retarget(&prev, expected / 10, expected);
        assert_eq!(*down.value(), prev.value() / 4u32);
    }

    #[test]
    fn diff_sync_index_arithmetic() {
        let remote: Vec<BlockHeader> = (0..5)
            .map(|i| BlockHeader { nonce: i, ..Default::default() })
            .collect();
        assert!(diff_sync(4, &remote).is_empty());
        assert_eq!(diff_sync(-1, &remote), &remote[..]);
        assert_eq!(diff_sync(2, &remote), &remote[3..]);
        assert!(diff_sync(10, &remote).is_empty());
    }
}
