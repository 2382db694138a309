#ifndef CACBENCH_H
#define CACBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Side length of the square canvas `cacb_points_to_density` writes.
 */
#define CACB_CANVAS_SIZE 384

typedef enum CacbStatus {
  CACB_STATUS_OK = 0,
  CACB_STATUS_NULL_POINTER = 1,
  CACB_STATUS_INVALID_UTF8 = 2,
  CACB_STATUS_IO = 3,
  CACB_STATUS_PARSE = 4,
  CACB_STATUS_INVALID_INPUT = 5,
  CACB_STATUS_MISSING_PREDICTIONS = 6,
  CACB_STATUS_BUFFER_SIZE = 7,
  CACB_STATUS_PANIC = 8,
} CacbStatus;

/*
 Annotations loaded from a JSON file.
 */
typedef struct CacbAnnotations CacbAnnotations;

/*
 Predictions loaded from a manifest; payloads are read on demand.
 */
typedef struct CacbPredictions CacbPredictions;

typedef struct CacbDistractorSummary {
  double cntp;
  double cntr;
  double cntf1;
  double game;
} CacbDistractorSummary;

typedef struct CacbClassicErrors {
  double mae;
  double rmse;
} CacbClassicErrors;

typedef struct CacbImageScore {
  double cntp;
  double cntr;
  double cntf1;
  double game;
  double tp;
  double fp;
  double fn_;
} CacbImageScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next `cacb_` call on the same thread.
 */
const char *cacb_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *cacb_version(void);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CacbStatus cacb_annotations_load(const char *path, struct CacbAnnotations **out);

/*
 # Safety
 `handle` must come from `cacb_annotations_load` and not be freed twice.
 */
void cacb_annotations_free(struct CacbAnnotations *handle);

/*
 # Safety
 `handle` must be a live annotations handle or null.
 */
size_t cacb_annotations_image_count(const struct CacbAnnotations *handle);

/*
 # Safety
 `handle` must be a live annotations handle or null.
 */
size_t cacb_annotations_category_count(const struct CacbAnnotations *handle);

/*
 # Safety
 `handle` must be a live annotations handle or null.
 */
size_t cacb_annotations_total_dots(const struct CacbAnnotations *handle);

/*
 Loads a prediction manifest. Payload paths resolve against the
 manifest's directory.

 # Safety
 `manifest` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CacbStatus cacb_predictions_load(const char *manifest, struct CacbPredictions **out);

/*
 # Safety
 `handle` must come from `cacb_predictions_load` and not be freed twice.
 */
void cacb_predictions_free(struct CacbPredictions *handle);

/*
 # Safety
 `handle` must be a live predictions handle or null.
 */
size_t cacb_predictions_count(const struct CacbPredictions *handle);

/*
 Negative-label test: writes NMN and PCCN (percent).

 # Safety
 Handles must be live; outputs must be writable.
 */
enum CacbStatus cacb_run_negative(const struct CacbAnnotations *annotations,
                                  const struct CacbPredictions *predictions,
                                  double *out_nmn,
                                  double *out_pccn);

/*
 Distractor test on the original images at grid `level`.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum CacbStatus cacb_run_distractor_direct(const struct CacbAnnotations *annotations,
                                           const struct CacbPredictions *predictions,
                                           uint32_t level,
                                           bool per_image,
                                           struct CacbDistractorSummary *out);

/*
 MAE and RMSE over every positive prompt.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum CacbStatus cacb_run_classic(const struct CacbAnnotations *annotations,
                                 const struct CacbPredictions *predictions,
                                 struct CacbClassicErrors *out);

/*
 Patch-wise scores of one image from matching predicted and true patch
 counts, both `len` long.

 # Safety
 `pred` and `gt` must point to `len` doubles; `out` must be writable.
 */
enum CacbStatus cacb_image_prf(const double *pred,
                               const double *gt,
                               size_t len,
                               struct CacbImageScore *out);

/*
 Mosaic precision and recall from the predicted top count `c1`, bottom
 count `c2` and true top count `c1_gt`.

 # Safety
 Outputs must be writable.
 */
enum CacbStatus cacb_mosaic_closed_form(double c1,
                                        double c1_gt,
                                        double c2,
                                        double *out_cntp,
                                        double *out_cntr);

/*
 MAE and RMSE over paired predicted and true counts.

 # Safety
 `pred` and `gt` must point to `len` doubles; `out` must be writable.
 */
enum CacbStatus cacb_classic_errors(const double *pred,
                                    const double *gt,
                                    size_t len,
                                    struct CacbClassicErrors *out);

/*
 Rasterizes `n_points` interleaved `(x, y)` pairs given in a
 `source_width` x `source_height` frame onto the canvas. `out` receives
 `CACB_CANVAS_SIZE * CACB_CANVAS_SIZE` values, row-major.

 # Safety
 `xy` must point to `2 * n_points` doubles and `out` to `out_len` doubles.
 */
enum CacbStatus cacb_points_to_density(const double *xy,
                                       size_t n_points,
                                       double source_width,
                                       double source_height,
                                       double *out,
                                       size_t out_len);

/*
 Sums a `height` x `width` row-major density over the `4^level` grid
 patches, written in row-major patch order.

 # Safety
 `values` must point to `height * width` doubles and `out` to `out_len`.
 */
enum CacbStatus cacb_patch_counts(const double *values,
                                  size_t height,
                                  size_t width,
                                  uint32_t level,
                                  double *out,
                                  size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CACBENCH_H */
