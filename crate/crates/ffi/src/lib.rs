//! C ABI over `spv-core`.
//!
//! Conventions:
//! - Every fallible function returns an [`SpvStatus`]; results go through
//!   out-pointers. On failure [`spv_last_error`] describes the cause.
//! - Hashes, targets and headers are raw bytes: 32-byte hashes in internal
//!   byte order, 32-byte big-endian targets, 80-byte serialized headers.
//! - Structured results (proofs, reports, decisions) are JSON strings owned
//!   by the caller and released with [`spv_string_free`].
//! - Handles are opaque and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::Deserialize;
use spv_core::client::{self, AcceptMode, ClientConfig, ClientState, ProofBundle};
use spv_core::hash::{sha256d, Hash};
use spv_core::headers::{self, BlockHeader, ChainParams, Target, Verdict, HEADER_LEN};
use spv_core::merkle::{self, MerkleProof, MerkleTree};
use spv_core::netsim::{self, Scenario, SimConfig};
use spv_core::seccalc;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Parse = 4,
    OutOfRange = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpvVerdict {
    Ok = 0,
    Linkage = 1,
    Pow = 2,
    Malformed = 3,
}

impl From<Verdict> for SpvVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Ok => SpvVerdict::Ok,
            Verdict::Linkage => SpvVerdict::Linkage,
            Verdict::Pow => SpvVerdict::Pow,
            Verdict::Malformed => SpvVerdict::Malformed,
        }
    }
}

/// Merkle tree handle.
pub struct SpvMerkleTree(MerkleTree);

/// Client state handle. Not thread-safe; use one handle per thread.
pub struct SpvClient(ClientState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Error(SpvStatus, String);

type FfiResult<T> = Result<T, Error>;

fn err<T>(status: SpvStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Error(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> SpvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpvStatus::Ok,
        Ok(Err(Error(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpvStatus::Internal
        }
    }
}

unsafe fn bytes<'a>(p: *const u8, len: usize) -> FfiResult<&'a [u8]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return err(SpvStatus::NullPointer, "null buffer");
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn hash_in(p: *const u8) -> FfiResult<Hash> {
    if p.is_null() {
        return err(SpvStatus::NullPointer, "null hash pointer");
    }
    Ok(Hash(*(p as *const [u8; 32])))
}

unsafe fn out<'a, T>(p: *mut T) -> FfiResult<&'a mut T> {
    p.as_mut().map_or_else(|| err(SpvStatus::NullPointer, "null output pointer"), Ok)
}

unsafe fn str_in<'a>(p: *const c_char) -> FfiResult<&'a str> {
    if p.is_null() {
        return err(SpvStatus::NullPointer, "null string");
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| err(SpvStatus::InvalidUtf8, "string is not UTF-8"))
}

fn json_in<T: for<'de> Deserialize<'de>>(s: &str) -> FfiResult<T> {
    serde_json::from_str(s).or_else(|e| err(SpvStatus::Parse, e.to_string()))
}

unsafe fn json_out<T: serde::Serialize>(value: &T, dst: *mut *mut c_char) -> FfiResult<()> {
    let dst = out(dst)?;
    let text = serde_json::to_string(value).or_else(|e| err(SpvStatus::Internal, e.to_string()))?;
    *dst = CString::new(text).expect("JSON has no nul bytes").into_raw();
    Ok(())
}

unsafe fn header_in(p: *const u8) -> FfiResult<BlockHeader> {
    let raw = bytes(p, HEADER_LEN)?;
    BlockHeader::decode(raw).or_else(|e| err(SpvStatus::Parse, e.to_string()))
}

unsafe fn target_in(p: *const u8) -> FfiResult<Target> {
    let raw: &[u8; 32] = bytes(p, 32)?.try_into().expect("32 bytes");
    Target::from_be_bytes(raw).or_else(|e| err(SpvStatus::InvalidArgument, e.to_string()))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data` must point to `len` readable bytes; `out32` to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn spv_sha256d(data: *const u8, len: usize, out32: *mut u8) -> SpvStatus {
    guard(|| {
        let digest = sha256d(bytes(data, len)?);
        out(out32 as *mut [u8; 32]).map(|o| *o = digest.0)
    })
}

/// Builds a tree over `n` concatenated 32-byte leaf hashes.
///
/// # Safety
/// `leaf_hashes` must point to `32 * n` readable bytes; `out_tree` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_merkle_tree_new(
    leaf_hashes: *const u8,
    n: usize,
    out_tree: *mut *mut SpvMerkleTree,
) -> SpvStatus {
    guard(|| {
        let dst = out(out_tree)?;
        let raw = bytes(leaf_hashes, n.checked_mul(32).ok_or(Error(SpvStatus::OutOfRange, "n too large".into()))?)?;
        let leaves = raw.chunks_exact(32).map(|c| Hash::from_slice(c).expect("32 bytes")).collect();
        let tree = MerkleTree::from_leaf_hashes(leaves).or_else(|e| err(SpvStatus::InvalidArgument, e.to_string()))?;
        *dst = Box::into_raw(Box::new(SpvMerkleTree(tree)));
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a live handle from [`spv_merkle_tree_new`].
#[no_mangle]
pub unsafe extern "C" fn spv_merkle_tree_free(tree: *mut SpvMerkleTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// # Safety
/// `tree` must be a live handle; `out32` must point to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn spv_merkle_tree_root(tree: *const SpvMerkleTree, out32: *mut u8) -> SpvStatus {
    guard(|| {
        let tree = tree.as_ref().ok_or(Error(SpvStatus::NullPointer, "null tree".into()))?;
        out(out32 as *mut [u8; 32]).map(|o| *o = tree.0.root().0)
    })
}

/// Proof for leaf `index` as JSON `{leaf_index, steps: [{sibling_hex, is_right}]}`.
///
/// # Safety
/// `tree` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_merkle_tree_prove(
    tree: *const SpvMerkleTree,
    index: usize,
    out_json: *mut *mut c_char,
) -> SpvStatus {
    guard(|| {
        let tree = tree.as_ref().ok_or(Error(SpvStatus::NullPointer, "null tree".into()))?;
        let proof = tree.0.prove(index).or_else(|e| err(SpvStatus::OutOfRange, e.to_string()))?;
        json_out(&proof, out_json)
    })
}

/// # Safety
/// `leaf32` and `root32` must point to 32 readable bytes, `proof_json` to a
/// NUL-terminated string, `out_valid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_merkle_verify(
    leaf32: *const u8,
    proof_json: *const c_char,
    root32: *const u8,
    out_valid: *mut bool,
) -> SpvStatus {
    guard(|| {
        let proof: MerkleProof = json_in(str_in(proof_json)?)?;
        let ok = merkle::verify_proof(&hash_in(leaf32)?, &proof, &hash_in(root32)?);
        out(out_valid).map(|o| *o = ok)
    })
}

/// # Safety
/// `header80` must point to 80 readable bytes, `out32` to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn spv_header_hash(header80: *const u8, out32: *mut u8) -> SpvStatus {
    guard(|| {
        let h = header_in(header80)?;
        out(out32 as *mut [u8; 32]).map(|o| *o = h.hash().0)
    })
}

/// Validates `header80` against `prev80` (null for genesis) and a 32-byte
/// big-endian expected target.
///
/// # Safety
/// Non-null pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn spv_header_validate(
    prev80: *const u8,
    header80: *const u8,
    target_be32: *const u8,
    out_verdict: *mut SpvVerdict,
) -> SpvStatus {
    guard(|| {
        let prev = if prev80.is_null() { None } else { Some(header_in(prev80)?) };
        let h = header_in(header80)?;
        let target = target_in(target_be32)?;
        let verdict = headers::validate_header(prev.as_ref(), &h, &target);
        out(out_verdict).map(|o| *o = verdict.into())
    })
}

/// Expands compact `n_bits` to a 32-byte big-endian target.
///
/// # Safety
/// `out_be32` must point to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn spv_compact_decode(n_bits: u32, out_be32: *mut u8) -> SpvStatus {
    guard(|| {
        let t = headers::decode_compact(n_bits).or_else(|e| err(SpvStatus::InvalidArgument, e.to_string()))?;
        out(out_be32 as *mut [u8; 32]).map(|o| *o = t.to_be_bytes())
    })
}

/// Starts a client from an 80-byte genesis header and a 32-byte big-endian
/// network target, with default configuration.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes; `out_client` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_client_new(
    genesis80: *const u8,
    target_be32: *const u8,
    out_client: *mut *mut SpvClient,
) -> SpvStatus {
    guard(|| {
        let dst = out(out_client)?;
        let genesis = header_in(genesis80)?;
        let params = ChainParams::new(target_in(target_be32)?);
        let state = client::init_client(genesis, params, ClientConfig::default())
            .or_else(|e| err(SpvStatus::InvalidArgument, e.to_string()))?;
        *dst = Box::into_raw(Box::new(SpvClient(state)));
        Ok(())
    })
}

/// # Safety
/// `client` must be null or a live handle from [`spv_client_new`].
#[no_mangle]
pub unsafe extern "C" fn spv_client_free(client: *mut SpvClient) {
    if !client.is_null() {
        drop(Box::from_raw(client));
    }
}

unsafe fn client_mut<'a>(c: *mut SpvClient) -> FfiResult<&'a mut ClientState> {
    c.as_mut()
        .map(|c| &mut c.0)
        .ok_or(Error(SpvStatus::NullPointer, "null client".into()))
}

/// # Safety
/// `client` must be a live handle; `out_height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_client_height(client: *mut SpvClient, out_height: *mut usize) -> SpvStatus {
    guard(|| {
        let c = client_mut(client)?;
        out(out_height).map(|o| *o = c.height())
    })
}

/// Ingests `n` concatenated 80-byte headers; the report is written as JSON.
///
/// # Safety
/// `headers` must point to `80 * n` readable bytes; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_client_ingest(
    client: *mut SpvClient,
    headers: *const u8,
    n: usize,
    out_json: *mut *mut c_char,
) -> SpvStatus {
    guard(|| {
        let c = client_mut(client)?;
        let len = n.checked_mul(HEADER_LEN).ok_or(Error(SpvStatus::OutOfRange, "n too large".into()))?;
        let batch = headers::decode_headers(bytes(headers, len)?).or_else(|e| err(SpvStatus::Parse, e.to_string()))?;
        json_out(&c.ingest_headers(&batch), out_json)
    })
}

/// # Safety
/// `txid32` must point to 32 bytes, `proof_json` to a NUL-terminated string,
/// `out_included` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_client_verify(
    client: *mut SpvClient,
    txid32: *const u8,
    proof_json: *const c_char,
    block_index: usize,
    out_included: *mut bool,
) -> SpvStatus {
    guard(|| {
        let c = client_mut(client)?;
        let proof: MerkleProof = json_in(str_in(proof_json)?)?;
        let ok = c
            .verify_spv(hash_in(txid32)?, &proof, block_index)
            .or_else(|e| err(SpvStatus::OutOfRange, e.to_string()))?;
        out(out_included).map(|o| *o = ok)
    })
}

/// # Safety
/// `txid32` must point to 32 bytes; `out_confirmations` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_client_confirmations(
    client: *mut SpvClient,
    txid32: *const u8,
    out_confirmations: *mut u64,
) -> SpvStatus {
    guard(|| {
        let c = client_mut(client)?;
        let n = c.confirmations(&hash_in(txid32)?);
        out(out_confirmations).map(|o| *o = n)
    })
}

/// Decides a JSON proof bundle. Rejection is not an error: check
/// `out_accepted` and the decision JSON.
///
/// # Safety
/// `bundle_json` must be a NUL-terminated string; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_client_accept(
    client: *mut SpvClient,
    bundle_json: *const c_char,
    strict: bool,
    out_accepted: *mut bool,
    out_json: *mut *mut c_char,
) -> SpvStatus {
    guard(|| {
        let c = client_mut(client)?;
        let bundle: ProofBundle = json_in(str_in(bundle_json)?)?;
        let mode = if strict { AcceptMode::Strict } else { AcceptMode::InclusionOnly };
        let decision = c.accept_transaction(&bundle, mode);
        *out(out_accepted)? = decision.accepted;
        json_out(&decision, out_json)
    })
}

/// `(alpha / (1 - alpha))^k`; NaN when alpha is outside `[0, 1)`.
#[no_mangle]
pub extern "C" fn spv_fraud_bound(alpha: f64, k: u32) -> f64 {
    if !(0.0..1.0).contains(&alpha) {
        return f64::NAN;
    }
    seccalc::fraud_bound(alpha, k)
}

/// Attacker catch-up probability from `z` blocks behind; NaN when alpha is
/// outside `[0, 1]`.
#[no_mangle]
pub extern "C" fn spv_race_success_prob(alpha: f64, z: u32) -> f64 {
    if !(0.0..=1.0).contains(&alpha) {
        return f64::NAN;
    }
    seccalc::race_success_prob(alpha, z)
}

#[no_mangle]
pub extern "C" fn spv_packet_cost(tx_bytes: u64, m_txs_per_block: u64, n_headers: u64) -> u64 {
    seccalc::packet_cost(tx_bytes, m_txs_per_block, n_headers)
}

#[derive(Deserialize)]
struct SimRequest {
    config: SimConfig,
    scenario: Scenario,
}

/// Runs one simulation from JSON `{config, scenario}` and writes
/// `{row, metrics}` as JSON.
///
/// # Safety
/// `request_json` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spv_sim_run(request_json: *const c_char, out_json: *mut *mut c_char) -> SpvStatus {
    guard(|| {
        let req: SimRequest = json_in(str_in(request_json)?)?;
        let (_, metrics, row) = netsim::run_and_measure(&req.config, &req.scenario)
            .or_else(|e| err(SpvStatus::InvalidArgument, e.to_string()))?;
        json_out(&serde_json::json!({ "row": row, "metrics": metrics }), out_json)
    })
}
