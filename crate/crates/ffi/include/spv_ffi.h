#ifndef SPV_FFI_H
#define SPV_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpvStatus {
  SPV_STATUS_OK = 0,
  SPV_STATUS_NULL_POINTER = 1,
  SPV_STATUS_INVALID_ARGUMENT = 2,
  SPV_STATUS_INVALID_UTF8 = 3,
  SPV_STATUS_PARSE = 4,
  SPV_STATUS_OUT_OF_RANGE = 5,
  SPV_STATUS_INTERNAL = 6,
} SpvStatus;

typedef enum SpvVerdict {
  SPV_VERDICT_OK = 0,
  SPV_VERDICT_LINKAGE = 1,
  SPV_VERDICT_POW = 2,
  SPV_VERDICT_MALFORMED = 3,
} SpvVerdict;

/**
 * Client state handle. Not thread-safe; use one handle per thread.
 */
typedef struct SpvClient SpvClient;

/**
 * Merkle tree handle.
 */
typedef struct SpvMerkleTree SpvMerkleTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *spv_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void spv_string_free(char *s);

/**
 * # Safety
 * `data` must point to `len` readable bytes; `out32` to 32 writable bytes.
 */
enum SpvStatus spv_sha256d(const uint8_t *data, size_t len, uint8_t *out32);

/**
 * Builds a tree over `n` concatenated 32-byte leaf hashes.
 *
 * # Safety
 * `leaf_hashes` must point to `32 * n` readable bytes; `out_tree` must be writable.
 */
enum SpvStatus spv_merkle_tree_new(const uint8_t *leaf_hashes,
                                   size_t n,
                                   struct SpvMerkleTree **out_tree);

/**
 * # Safety
 * `tree` must be null or a live handle from [`spv_merkle_tree_new`].
 */
void spv_merkle_tree_free(struct SpvMerkleTree *tree);

/**
 * # Safety
 * `tree` must be a live handle; `out32` must point to 32 writable bytes.
 */
enum SpvStatus spv_merkle_tree_root(const struct SpvMerkleTree *tree, uint8_t *out32);

/**
 * Proof for leaf `index` as JSON `{leaf_index, steps: [{sibling_hex, is_right}]}`.
 *
 * # Safety
 * `tree` must be a live handle; `out_json` must be writable.
 */
enum SpvStatus spv_merkle_tree_prove(const struct SpvMerkleTree *tree,
                                     size_t index,
                                     char **out_json);

/**
 * # Safety
 * `leaf32` and `root32` must point to 32 readable bytes, `proof_json` to a
 * NUL-terminated string, `out_valid` must be writable.
 */
enum SpvStatus spv_merkle_verify(const uint8_t *leaf32,
                                 const char *proof_json,
                                 const uint8_t *root32,
                                 bool *out_valid);

/**
 * # Safety
 * `header80` must point to 80 readable bytes, `out32` to 32 writable bytes.
 */
enum SpvStatus spv_header_hash(const uint8_t *header80, uint8_t *out32);

/**
 * Validates `header80` against `prev80` (null for genesis) and a 32-byte
 * big-endian expected target.
 *
 * # Safety
 * Non-null pointers must reference buffers of the stated sizes.
 */
enum SpvStatus spv_header_validate(const uint8_t *prev80,
                                   const uint8_t *header80,
                                   const uint8_t *target_be32,
                                   enum SpvVerdict *out_verdict);

/**
 * Expands compact `n_bits` to a 32-byte big-endian target.
 *
 * # Safety
 * `out_be32` must point to 32 writable bytes.
 */
enum SpvStatus spv_compact_decode(uint32_t n_bits, uint8_t *out_be32);

/**
 * Starts a client from an 80-byte genesis header and a 32-byte big-endian
 * network target, with default configuration.
 *
 * # Safety
 * Pointers must reference buffers of the stated sizes; `out_client` must be writable.
 */
enum SpvStatus spv_client_new(const uint8_t *genesis80,
                              const uint8_t *target_be32,
                              struct SpvClient **out_client);

/**
 * # Safety
 * `client` must be null or a live handle from [`spv_client_new`].
 */
void spv_client_free(struct SpvClient *client);

/**
 * # Safety
 * `client` must be a live handle; `out_height` must be writable.
 */
enum SpvStatus spv_client_height(struct SpvClient *client, size_t *out_height);

/**
 * Ingests `n` concatenated 80-byte headers; the report is written as JSON.
 *
 * # Safety
 * `headers` must point to `80 * n` readable bytes; `out_json` must be writable.
 */
enum SpvStatus spv_client_ingest(struct SpvClient *client,
                                 const uint8_t *headers,
                                 size_t n,
                                 char **out_json);

/**
 * # Safety
 * `txid32` must point to 32 bytes, `proof_json` to a NUL-terminated string,
 * `out_included` must be writable.
 */
enum SpvStatus spv_client_verify(struct SpvClient *client,
                                 const uint8_t *txid32,
                                 const char *proof_json,
                                 size_t block_index,
                                 bool *out_included);

/**
 * # Safety
 * `txid32` must point to 32 bytes; `out_confirmations` must be writable.
 */
enum SpvStatus spv_client_confirmations(struct SpvClient *client,
                                        const uint8_t *txid32,
                                        uint64_t *out_confirmations);

/**
 * Decides a JSON proof bundle. Rejection is not an error: check
 * `out_accepted` and the decision JSON.
 *
 * # Safety
 * `bundle_json` must be a NUL-terminated string; out-pointers must be writable.
 */
enum SpvStatus spv_client_accept(struct SpvClient *client,
                                 const char *bundle_json,
                                 bool strict,
                                 bool *out_accepted,
                                 char **out_json);

/**
 * `(alpha / (1 - alpha))^k`; NaN when alpha is outside `[0, 1)`.
 */
double spv_fraud_bound(double alpha, uint32_t k);

/**
 * Attacker catch-up probability from `z` blocks behind; NaN when alpha is
 * outside `[0, 1]`.
 */
double spv_race_success_prob(double alpha, uint32_t z);

uint64_t spv_packet_cost(uint64_t tx_bytes, uint64_t m_txs_per_block, uint64_t n_headers);

/**
 * Runs one simulation from JSON `{config, scenario}` and writes
 * `{row, metrics}` as JSON.
 *
 * # Safety
 * `request_json` must be a NUL-terminated string; `out_json` must be writable.
 */
enum SpvStatus spv_sim_run(const char *request_json, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPV_FFI_H */
