/*
 * Every call returns FiStatus; on failure fi_last_error_message() explains it.
 * Handles are owned by the caller and released with the matching *_free.
 * Length-query convention for array getters: with buf == NULL the required
 * length is stored in *len; otherwise *len is the capacity on entry and the
 * number of values written on return (FI_STATUS_BUFFER_TOO_SMALL if short).
 */

#ifndef FLOWINV_H
#define FLOWINV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FiMethod {
  FI_METHOD_PACKET = 0,
  FI_METHOD_SH_PACKET = 1,
  FI_METHOD_SH_BYTE = 2,
  FI_METHOD_SH_SYN = 3,
  FI_METHOD_ALWAYS = 4,
} FiMethod;

typedef enum FiStatus {
  FI_STATUS_OK = 0,
  FI_STATUS_NULL_POINTER = 1,
  FI_STATUS_INVALID_ARGUMENT = 2,
  FI_STATUS_INVALID_DISTRIBUTION = 3,
  FI_STATUS_NON_POSITIVE_NORMALIZER = 4,
  FI_STATUS_IO = 5,
  FI_STATUS_PARSE = 6,
  FI_STATUS_UNATTAINABLE = 7,
  FI_STATUS_BUFFER_TOO_SMALL = 8,
  FI_STATUS_PANIC = 9,
} FiStatus;

// A flow-length distribution θ.
typedef struct FiDistribution FiDistribution;

// Flow records built from a trace.
typedef struct FiFlowSet FiFlowSet;

// Output of an inversion.
typedef struct FiInversion FiInversion;

// A sampled flow-length distribution X with the rate that produced it.
typedef struct FiObserved FiObserved;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static, NUL-terminated version string.
const char *fi_version(void);

// Static, NUL-terminated name of a status code.
const char *fi_status_name(enum FiStatus status);

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `cap` bytes. Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t fi_last_error_message(char *buf, size_t cap);

// Builds θ from non-negative weights; `weights[i]` is for length `i + 1`.
//
// # Safety
// `weights` must point to `len` doubles; `out_dist` must be writable.
enum FiStatus fi_distribution_from_weights(const double *weights,
                                           size_t len,
                                           struct FiDistribution **out_dist);

// # Safety
// `dist` must be a live handle; `buf` and `len` follow the length-query convention.
enum FiStatus fi_distribution_probs(const struct FiDistribution *dist, double *buf, size_t *len);

// # Safety
// `dist` must be null or a handle not yet freed.
void fi_distribution_free(struct FiDistribution *dist);

// Builds X from non-negative weights observed at rate `p`.
//
// # Safety
// `weights` must point to `len` doubles; `out_obs` must be writable.
enum FiStatus fi_observed_from_weights(const double *weights,
                                       size_t len,
                                       double p,
                                       struct FiObserved **out_obs);

// Builds X from `n` (length, count) pairs observed at rate `p`.
//
// # Safety
// `lengths` and `counts` must each point to `n` values; `out_obs` must be writable.
enum FiStatus fi_observed_from_counts(const uint64_t *lengths,
                                      const uint64_t *counts,
                                      size_t n,
                                      double p,
                                      struct FiObserved **out_obs);

// # Safety
// `obs` must be a live handle; `buf` and `len` follow the length-query convention.
enum FiStatus fi_observed_probs(const struct FiObserved *obs, double *buf, size_t *len);

// # Safety
// `obs` must be null or a handle not yet freed.
void fi_observed_free(struct FiObserved *obs);

// X under iid packet sampling at rate `p`.
//
// # Safety
// `dist` must be a live handle; `out_obs` must be writable.
enum FiStatus fi_forward_packet_sampling(const struct FiDistribution *dist,
                                         double p,
                                         struct FiObserved **out_obs);

// X under sample-and-hold by packet at rate `p`.
//
// # Safety
// `dist` must be a live handle; `out_obs` must be writable.
enum FiStatus fi_forward_sh_packet(const struct FiDistribution *dist,
                                   double p,
                                   struct FiObserved **out_obs);

// # Safety
// `obs` must be a live handle; `out_inv` must be writable.
enum FiStatus fi_invert_sh_packet(const struct FiObserved *obs,
                                  double p,
                                  struct FiInversion **out_inv);

// Approximate inversion for sample-and-hold by byte, with `mean_packet_len`
// bytes per packet.
//
// # Safety
// `obs` must be a live handle; `out_inv` must be writable.
enum FiStatus fi_invert_sh_byte(const struct FiObserved *obs,
                                double p,
                                double mean_packet_len,
                                struct FiInversion **out_inv);

// Normalizer C and the per-packet rate the inversion used.
//
// # Safety
// `inv` must be a live handle; the out pointers must be writable.
enum FiStatus fi_inversion_summary(const struct FiInversion *inv,
                                   double *out_normalizer,
                                   double *out_p_effective);

// Unclamped estimates; may contain negative values.
//
// # Safety
// `inv` must be a live handle; `buf` and `len` follow the length-query convention.
enum FiStatus fi_inversion_raw(const struct FiInversion *inv, double *buf, size_t *len);

// # Safety
// `inv` must be a live handle; `buf` and `len` follow the length-query convention.
enum FiStatus fi_inversion_clamped(const struct FiInversion *inv, double *buf, size_t *len);

// 1-based lengths whose raw estimate was negative.
//
// # Safety
// `inv` must be a live handle; `buf` and `len` follow the length-query convention.
enum FiStatus fi_inversion_negative_indices(const struct FiInversion *inv,
                                            uint64_t *buf,
                                            size_t *len);

// # Safety
// `inv` must be null or a handle not yet freed.
void fi_inversion_free(struct FiInversion *inv);

// Log bin boundaries covering lengths 1..=max_len with growth `ratio`.
//
// # Safety
// See the module docs for `buf`/`len`.
enum FiStatus fi_make_bins(uint64_t max_len, double ratio, uint64_t *buf, size_t *len);

// Total variation and largest CCDF gap between two per-length mass vectors
// over the given bins. `estimate` may hold negative entries.
//
// # Safety
// Each array must point to its stated number of values; the out pointers must be writable.
enum FiStatus fi_compare(const double *truth,
                         size_t truth_len,
                         const double *estimate,
                         size_t estimate_len,
                         const uint64_t *boundaries,
                         size_t boundaries_len,
                         double *out_total_variation,
                         double *out_ccdf_max_gap);

// Reads a text or pcap trace and builds flows through a sampler.
// Infinite timeouts and `buffer_capacity = SIZE_MAX` disable the limits.
//
// # Safety
// `path` must be a NUL-terminated string; `out_flows` must be writable.
enum FiStatus fi_flows_from_trace(const char *path,
                                  double flow_timeout,
                                  double export_timeout,
                                  size_t buffer_capacity,
                                  enum FiMethod method,
                                  double p,
                                  uint64_t seed,
                                  struct FiFlowSet **out_flows);

// Number of flow records and the packets they carry.
//
// # Safety
// `flows` must be a live handle; the out pointers must be writable.
enum FiStatus fi_flowset_summary(const struct FiFlowSet *flows,
                                 uint64_t *out_flows,
                                 uint64_t *out_packets);

// Empirical flow-length law of the records, tagged with rate `p`.
//
// # Safety
// `flows` must be a live handle; `out_obs` must be writable.
enum FiStatus fi_flowset_observed(const struct FiFlowSet *flows,
                                  double p,
                                  struct FiObserved **out_obs);

// # Safety
// `flows` must be null or a handle not yet freed.
void fi_flowset_free(struct FiFlowSet *flows);

// Finds the rate at which `method` keeps `target` of the packets of the trace
// at `path`, replayed through the given flow table with `seed`.
//
// # Safety
// `path` must be a NUL-terminated string; `out_p` must be writable.
enum FiStatus fi_calibrate_rate(const char *path,
                                double flow_timeout,
                                double export_timeout,
                                size_t buffer_capacity,
                                enum FiMethod method,
                                double target,
                                uint64_t seed,
                                double *out_p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWINV_H */
