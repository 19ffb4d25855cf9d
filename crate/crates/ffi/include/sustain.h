#ifndef SUSTAIN_H
#define SUSTAIN_H

/* Generated by cbindgen from the sustain-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum {
  SUSTAIN_STATUS_OK = 0,
  // A required pointer argument was null.
  SUSTAIN_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SUSTAIN_STATUS_INVALID_UTF8 = 2,
  // The file could not be read or written.
  SUSTAIN_STATUS_IO = 3,
  // The file exists but is not a compatible checkpoint.
  SUSTAIN_STATUS_BAD_CHECKPOINT = 4,
  // The input buffer or its dimensions are unusable.
  SUSTAIN_STATUS_BAD_INPUT = 5,
  // An unexpected internal failure; details via sustain_last_error.
  SUSTAIN_STATUS_INTERNAL = 6,
} SustainStatus;

// A loaded router-plus-forecasters bundle.
typedef struct SustainBundle SustainBundle;

// A loaded forecaster checkpoint.
typedef struct SustainModel SustainModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Number of feature columns a buffer row must hold.
size_t sustain_feature_count(void);

// Copy the current thread's last error message into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length in bytes, so a cap
// of 0 or a null buffer queries the needed size.
//
// # Safety
// `buf`, when non-null, must be valid for writes of `cap` bytes.
size_t sustain_last_error(char *buf, size_t cap);

// Load a forecaster checkpoint from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
SustainStatus sustain_model_load(const char *path, SustainModel **out);

// Release a model handle. Null is a no-op.
//
// # Safety
// `model` must be a handle from `sustain_model_load`, not yet freed.
void sustain_model_free(SustainModel *model);

// Forecast the probability that the project graduates, from its full
// feature history.
//
// # Safety
// `features` must hold `months * 13` doubles; `p_graduate` must be valid
// for writes.
SustainStatus sustain_model_predict(const SustainModel *model,
                                    const double *features,
                                    size_t months,
                                    double *p_graduate);

// Month-by-month graduation forecasts: entry t uses months 0..=t. The
// output buffer must hold `months` doubles.
//
// # Safety
// `features` must hold `months * 13` doubles; `out` must be valid for
// writes of `months` doubles.
SustainStatus sustain_model_forecast_series(const SustainModel *model,
                                            const double *features,
                                            size_t months,
                                            double *out);

// Load a router-plus-forecasters bundle from a JSON file, verifying its
// embedded digests.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
SustainStatus sustain_bundle_load(const char *path, SustainBundle **out);

// Release a bundle handle. Null is a no-op.
//
// # Safety
// `bundle` must be a handle from `sustain_bundle_load`, not yet freed.
void sustain_bundle_free(SustainBundle *bundle);

// Route a series to its foundation and forecast with that foundation's
// model. The foundation's name lands in `foundation_out` (NUL-terminated;
// 8 bytes always suffice).
//
// # Safety
// `features` must hold `months * 13` doubles; `foundation_out` must be
// valid for writes of `foundation_cap` bytes; `p_graduate` must be valid
// for writes.
SustainStatus sustain_bundle_route(const SustainBundle *bundle,
                                   const double *features,
                                   size_t months,
                                   char *foundation_out,
                                   size_t foundation_cap,
                                   double *p_graduate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUSTAIN_H */
