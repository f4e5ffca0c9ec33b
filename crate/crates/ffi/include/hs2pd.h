#ifndef HS2PD_H
#define HS2PD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum Hs2pdStatus {
  HS2PD_STATUS_OK = 0,
  HS2PD_STATUS_NULL_ARGUMENT = 1,
  HS2PD_STATUS_INVALID_UTF8 = 2,
  HS2PD_STATUS_IO = 3,
  HS2PD_STATUS_PARSE = 4,
  HS2PD_STATUS_INVALID_SCENARIO = 5,
  HS2PD_STATUS_RUN_FAILED = 6,
  HS2PD_STATUS_PANIC = 7,
} Hs2pdStatus;

// Final state of a finished simulation.
typedef enum Hs2pdRunStatus {
  HS2PD_RUN_STATUS_COMPLETED = 0,
  HS2PD_RUN_STATUS_INCOMPLETE = 1,
  HS2PD_RUN_STATUS_TIMEOUT = 2,
} Hs2pdRunStatus;

// The outcome of one simulation.
typedef struct Hs2pdResult Hs2pdResult;

// A parsed scenario.
typedef struct Hs2pdScenario Hs2pdScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum Hs2pdStatus hs2pd_scenario_load(const char *path, struct Hs2pdScenario **out);

// Parse a scenario from its text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a writable pointer.
enum Hs2pdStatus hs2pd_scenario_from_str(const char *text, struct Hs2pdScenario **out);

// # Safety
// `scenario` must be null or a handle from this library, freed at most once.
void hs2pd_scenario_free(struct Hs2pdScenario *scenario);

// Simulate a scenario to the end. The scenario handle stays valid.
//
// # Safety
// `scenario` must be a live handle and `out` a writable pointer.
enum Hs2pdStatus hs2pd_run(const struct Hs2pdScenario *scenario, struct Hs2pdResult **out);

// # Safety
// `result` must be a live handle.
enum Hs2pdRunStatus hs2pd_result_status(const struct Hs2pdResult *result);

// Update step by which every task was completed.
//
// # Safety
// `result` must be a live handle.
uint32_t hs2pd_result_completion_step(const struct Hs2pdResult *result);

// Metrics as a JSON document, or null if `result` is null. Free with
// [`hs2pd_string_free`].
//
// # Safety
// `result` must be null or a live handle.
char *hs2pd_result_metrics_json(const struct Hs2pdResult *result);

// The per-step trace as CSV, or null if `result` is null. Free with
// [`hs2pd_string_free`].
//
// # Safety
// `result` must be null or a live handle.
char *hs2pd_result_trace_csv(const struct Hs2pdResult *result);

// # Safety
// `result` must be null or a handle from this library, freed at most once.
void hs2pd_result_free(struct Hs2pdResult *result);

// Copy of the last error raised on this thread, or null if there was none.
// Free with [`hs2pd_string_free`].
char *hs2pd_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, freed at most once.
void hs2pd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HS2PD_H */
