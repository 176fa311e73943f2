/* C interface for the bnvp library. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible call.
typedef enum BnvpStatus {
  BNVP_OK = 0,
  BNVP_NULL_ARGUMENT = 1,
  BNVP_INVALID_UTF8 = 2,
  BNVP_IO_ERROR = 3,
  BNVP_FORMAT_ERROR = 4,
  BNVP_SHAPE_ERROR = 5,
  BNVP_UNKNOWN_PRESET = 6,
  BNVP_EMPTY = 7,
  BNVP_NUMERIC_ERROR = 8,
  BNVP_INTERNAL_ERROR = 9,
} BnvpStatus;

// Opaque reference descriptor index.
typedef struct BnvpIndex BnvpIndex;

// Opaque frozen feature extractor.
typedef struct BnvpModel BnvpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version string; owned by the library.
const char *bnvp_version(void);

// Message for the most recent error on this thread; owned by the library
// and valid until the next failing call on the same thread.
const char *bnvp_last_error(void);

// Loads a frozen extractor from a model file.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum BnvpStatus bnvp_model_open(const char *path, struct BnvpModel **out);

// Builds a named preset with seeded random weights (for smoke tests and
// benchmarks; real deployments load trained files).
//
// # Safety
// `name` must be a valid NUL-terminated string and `out` a valid pointer.
enum BnvpStatus bnvp_model_from_preset(const char *name, uint64_t seed, struct BnvpModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be a pointer returned by a `bnvp_model_*` constructor, not
// yet freed.
void bnvp_model_close(struct BnvpModel *model);

// Descriptor length produced by the model's output layer; 0 on error.
//
// # Safety
// `model` must be a live model handle.
uintptr_t bnvp_model_descriptor_len(const struct BnvpModel *model);

// Expected input geometry.
//
// # Safety
// All pointers must be valid; `model` must be a live model handle.
enum BnvpStatus bnvp_model_input_shape(const struct BnvpModel *model,
                                       uint32_t *h,
                                       uint32_t *w,
                                       uint32_t *c);

// Extracts the unit-norm descriptor of an H x W x C row-major image in
// [0, 1] into `out` (length `out_len` must equal the descriptor length).
//
// # Safety
// `pixels` must point to `h*w*c` floats and `out` to `out_len` floats;
// `model` must be a live model handle.
enum BnvpStatus bnvp_extract(const struct BnvpModel *model,
                             const float *pixels,
                             uint32_t h,
                             uint32_t w,
                             uint32_t c,
                             float *out,
                             uintptr_t out_len);

// Euclidean distance between two descriptors of equal length.
//
// # Safety
// `a` and `b` must point to `len` floats; `out` must be valid.
enum BnvpStatus bnvp_distance(const float *a, const float *b, uintptr_t len, double *out);

// Creates an empty reference index for descriptors of dimension `dim`.
//
// # Safety
// `out` must be a valid pointer.
enum BnvpStatus bnvp_index_new(uintptr_t dim, struct BnvpIndex **out);

// Releases an index handle. Null is ignored.
//
// # Safety
// `index` must be a pointer returned by `bnvp_index_new`, not yet freed.
void bnvp_index_free(struct BnvpIndex *index);

// Number of references in the index; 0 for a null handle.
//
// # Safety
// `index` must be a live index handle or null.
uintptr_t bnvp_index_len(const struct BnvpIndex *index);

// Adds a reference descriptor under `id`; ids must be unique.
//
// # Safety
// `descriptor` must point to `len` floats; `index` must be a live handle.
enum BnvpStatus bnvp_index_add(struct BnvpIndex *index,
                               int64_t id,
                               const float *descriptor,
                               uintptr_t len);

// Nearest reference to `query` by Euclidean distance; ties break toward
// the earliest insertion.
//
// # Safety
// `query` must point to `len` floats; out pointers must be valid; `index`
// must be a live handle.
enum BnvpStatus bnvp_index_match(const struct BnvpIndex *index,
                                 const float *query,
                                 uintptr_t len,
                                 int64_t *out_id,
                                 double *out_distance);

// Cumulative model size in KiB of a preset at the given weight precision.
//
// # Safety
// `preset` must be a valid NUL-terminated string; `out` must be valid.
enum BnvpStatus bnvp_preset_size_kib(const char *preset, uint8_t bits, double *out);

// MAC counts of a preset at the given input geometry.
//
// # Safety
// `preset` must be a valid NUL-terminated string; out pointers must be
// valid.
enum BnvpStatus bnvp_preset_macs(const char *preset,
                                 uint32_t h,
                                 uint32_t w,
                                 uint32_t c,
                                 double *out_total,
                                 double *out_binary,
                                 double *out_full);

// Projected speed-up of a partially binary workload; see the accounting
// documentation. Returns NaN on invalid inputs.
double bnvp_projected_speedup(double baseline_macs,
                              double binary_macs,
                              double fp_macs,
                              double binary_factor);

// Memory cost per recognition point (KiB per score point).
//
// # Safety
// `out` must be a valid pointer.
enum BnvpStatus bnvp_memory_efficiency(double s_p100, double size_kib, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
