#ifndef GHOSTLOCK_H
#define GHOSTLOCK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible entry point.
typedef enum GhlStatus {
  GHL_STATUS_OK = 0,
  // A run finished with violations, or a check found a counterexample.
  GHL_STATUS_CHECK_FAILED = 1,
  GHL_STATUS_INVALID_ARGUMENT = 2,
  GHL_STATUS_NULL_POINTER = 3,
  GHL_STATUS_IO = 4,
  // The trace failed replay; see the reported index.
  GHL_STATUS_INVALID_TRACE = 5,
  // The model has no such facility (e.g. the toy model has no TLA+ module).
  GHL_STATUS_UNSUPPORTED = 6,
  // The oracle exceeded its state budget.
  GHL_STATUS_BUDGET_EXCEEDED = 7,
  GHL_STATUS_PANIC = 8,
} GhlStatus;

// Outcome of one run.
typedef struct GhlRun GhlRun;

// Scheduler settings for `ghl_run`. Negative per-channel losses mean
// "use `loss`".
typedef struct GhlRunConfig {
  uint64_t seed;
  uint64_t steps;
  double loss;
  double loss_a_to_b;
  double loss_b_to_a;
  uint32_t fairness_window;
  // Non-zero runs with all ghost bookkeeping erased.
  int erased;
  // Non-zero enables every liveness property of the model.
  int liveness;
  // Memcached client count.
  uint64_t clients;
} GhlRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next call into this library from the same thread.
const char *ghl_last_error(void);

// Library version as a static NUL-terminated string.
const char *ghl_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ghl_string_free(char *s);

// Defaults matching the command-line `run`.
struct GhlRunConfig ghl_run_config_default(void);

// Runs `model` ("example" or "memcached") under `cfg`, optionally with a
// named mutant (NULL for none). On `Ok` or `CheckFailed` a handle is
// stored in `*out`; `CheckFailed` means the run recorded violations.
//
// # Safety
// String arguments must be NUL-terminated; `cfg` and `out` must be valid.
enum GhlStatus ghl_run(const char *model,
                       const char *mutant,
                       const struct GhlRunConfig *cfg,
                       struct GhlRun **out);

// Releases a run handle. NULL is ignored.
//
// # Safety
// `run` must come from `ghl_run` and not have been freed.
void ghl_run_free(struct GhlRun *run);

// 1 if the run is free of violations, 0 if not, -1 for NULL.
//
// # Safety
// `run` must be NULL or a live handle.
int ghl_run_passed(const struct GhlRun *run);

// Number of recorded violations; 0 for NULL.
//
// # Safety
// `run` must be NULL or a live handle.
uintptr_t ghl_run_violation_count(const struct GhlRun *run);

// Number of trace records; 0 for NULL and for erased runs.
//
// # Safety
// `run` must be NULL or a live handle.
uintptr_t ghl_run_trace_len(const struct GhlRun *run);

// Category name of violation `index`, e.g. "RefinementViolation".
//
// # Safety
// `run` must be a live handle and `out` writable.
enum GhlStatus ghl_run_violation_kind(const struct GhlRun *run, uintptr_t index, char **out);

// The run report as pretty-printed JSON.
//
// # Safety
// `run` must be a live handle and `out` writable.
enum GhlStatus ghl_run_report_json(const struct GhlRun *run, char **out);

// The observable channel log, one JSON object per line.
//
// # Safety
// `run` must be a live handle and `out` writable.
enum GhlStatus ghl_run_observable(const struct GhlRun *run, char **out);

// Writes the trace log (records and guard events) to `path`.
//
// # Safety
// `run` must be a live handle; `path` NUL-terminated.
enum GhlStatus ghl_run_write_trace(const struct GhlRun *run, const char *path);

// Re-validates a trace log file offline. On `InvalidTrace`, `*bad_index`
// (if non-NULL) receives the first failing record, or `UINT64_MAX` for a
// malformed line.
//
// # Safety
// String arguments must be NUL-terminated; `bad_index` NULL or writable.
enum GhlStatus ghl_replay(const char *model, const char *path, uint64_t *bad_index);

// Renders `model` ("example", "example-asend-plus-one" or "memcached") as
// a TLA+ module.
//
// # Safety
// `model` must be NUL-terminated and `out` writable.
enum GhlStatus ghl_export_tla(const char *model, uint64_t connections, char **out);

// Checks an invariant on the bounded reachable graph. `what` is a lemma
// name (`step1`..`step5`, example models only) or a closed state formula.
// On `CheckFailed`, `*cx_len` (if non-NULL) receives the counterexample
// length.
//
// # Safety
// String arguments must be NUL-terminated; `cx_len` NULL or writable.
enum GhlStatus ghl_check_invariant(const char *model,
                                   const char *bounds,
                                   const char *what,
                                   uintptr_t *cx_len);

// Bounded LTL check under a fairness preset ("none", "model",
// "example-channels"). On `CheckFailed`, `*cx_len` receives the lasso
// length.
//
// # Safety
// String arguments must be NUL-terminated; `cx_len` NULL or writable.
enum GhlStatus ghl_check_ltl(const char *model,
                             const char *bounds,
                             const char *formula,
                             const char *fairness,
                             uintptr_t *cx_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GHOSTLOCK_H */
