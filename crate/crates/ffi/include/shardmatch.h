#ifndef SHARDMATCH_H
#define SHARDMATCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_ARGUMENT = 1,
  SM_STATUS_INVALID_UTF8 = 2,
  SM_STATUS_INVALID_CONFIG = 3,
  SM_STATUS_INVALID_QUERY = 4,
  SM_STATUS_SIMULATION_FAILED = 5,
  SM_STATUS_OUT_OF_RANGE = 6,
  SM_STATUS_PANIC = 7,
} SmStatus;

// A running cluster.
typedef struct SmCluster SmCluster;

// The matches of one query, sorted.
typedef struct SmResult SmResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, e.g. `0.1.0`. Static; do not free.
const char *sm_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always nul-terminated when `len > 0`) and returns its full length.
//
// # Safety
// `buf` is null or points to `len` writable bytes.
size_t sm_last_error(char *buf, size_t len);

// Builds a cluster from a TOML config; null selects the defaults.
//
// # Safety
// `config_toml` is null or a valid C string; `out` is a valid pointer.
enum SmStatus sm_cluster_new(const char *config_toml, struct SmCluster **out);

// # Safety
// `cluster` is null or came from [`sm_cluster_new`] and is not used again.
void sm_cluster_free(struct SmCluster *cluster);

// Moves simulated time forward, firing due load reports and migrations.
//
// # Safety
// `cluster` is a live handle.
enum SmStatus sm_cluster_advance(struct SmCluster *cluster, uint64_t micros);

// Current simulated time in microseconds; 0 for a null handle.
//
// # Safety
// `cluster` is null or a live handle.
uint64_t sm_cluster_now_us(const struct SmCluster *cluster);

// Answers a query written in the graph text format (`n labels` header,
// `v id label` and `e u v` lines).
//
// # Safety
// `cluster` is a live handle, `query` a valid C string, `out` valid.
enum SmStatus sm_cluster_submit(struct SmCluster *cluster,
                                const char *query,
                                struct SmResult **out);

// Number of matches; 0 for a null handle.
//
// # Safety
// `result` is null or a live handle.
size_t sm_result_count(const struct SmResult *result);

// Query vertices per match.
//
// # Safety
// `result` is null or a live handle.
size_t sm_result_width(const struct SmResult *result);

// Copies match `index` into `buf`: entry `i` is the data vertex bound to
// query vertex `i`. `len` must be at least [`sm_result_width`].
//
// # Safety
// `result` is a live handle; `buf` points to `len` writable `u32`s.
enum SmStatus sm_result_get(const struct SmResult *result, size_t index, uint32_t *buf, size_t len);

// # Safety
// `result` is null or came from [`sm_cluster_submit`] and is not used again.
void sm_result_free(struct SmResult *result);

// Metrics recorded so far, one JSON object per line.
//
// # Safety
// `cluster` is a live handle; `out` is valid. Free the string with
// [`sm_string_free`].
enum SmStatus sm_cluster_metrics(const struct SmCluster *cluster, char **out);

// Drains pending timers, appends the summary record and returns the full
// metrics stream as [`sm_cluster_metrics`] does.
//
// # Safety
// As for [`sm_cluster_metrics`].
enum SmStatus sm_cluster_finish(struct SmCluster *cluster, char **out);

// # Safety
// `s` is null or a string returned by this library, not used again.
void sm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHARDMATCH_H */
