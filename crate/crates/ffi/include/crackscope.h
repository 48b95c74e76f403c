#ifndef CRACKSCOPE_H
#define CRACKSCOPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  CS_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  CS_STATUS_NULL = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  CS_STATUS_IO = 3,
  /**
   * Malformed image, model or topology file.
   */
  CS_STATUS_FORMAT = 4,
  /**
   * Tensor, layer or raster dimensions do not fit together.
   */
  CS_STATUS_SHAPE = 5,
  /**
   * Non-finite values or a violated saturation condition.
   */
  CS_STATUS_NUMERIC = 6,
  /**
   * A Rust panic was caught; the library state is still consistent.
   */
  CS_STATUS_PANIC = 7,
} CsStatus;

typedef enum {
  CS_LABEL_N = 0,
  CS_LABEL_P = 1,
} CsLabel;

typedef enum {
  CS_AGGREGATE_MEAN = 0,
  CS_AGGREGATE_MAX = 1,
} CsAggregate;

typedef enum {
  CS_SNUBBING_FORM_PRINTED = 0,
  CS_SNUBBING_FORM_EXPONENTIAL = 1,
} CsSnubbingForm;

typedef enum {
  /**
   * Tension along x; cracks run roughly vertically.
   */
  CS_AXIS_HORIZONTAL = 0,
  CS_AXIS_VERTICAL = 1,
} CsAxis;

/**
 * Backbone plus classification head.
 */
typedef struct CsCnn CsCnn;

typedef struct CsMlp CsMlp;

typedef struct CsRaster CsRaster;

typedef struct {
  CsLabel label;
  double prob_p;
  double prob_n;
} CsPrediction;

typedef struct {
  double fiber_length_mm;
  double fiber_radius_mm;
  double fiber_fraction;
  double matrix_fraction;
  double matrix_modulus_gpa;
  double matrix_failure_strain;
  double bond_mpa;
  double snubbing_coefficient;
  CsSnubbingForm snubbing_form;
} CsMicromechParams;

typedef struct {
  double g;
  double lambda;
  double x_mm;
  double x_prime_mm;
  double cd_max_per_m;
} CsTheoryOutputs;

typedef struct {
  double eps_cr;
  double eps_lcr;
  double cd_max;
  /**
   * NaN when the data have no variance.
   */
  double r_squared;
} CsTrilinear;

typedef struct {
  size_t window;
  size_t scan_lines;
  CsAxis axis;
  /**
   * Non-zero: fail when `lvdt_mm` is NaN.
   */
  int32_t require_acw;
  /**
   * Used by the AdT classifier only.
   */
  size_t min_dark_pixels;
} CsStatsParams;

typedef struct {
  size_t frame_index;
  double strain;
  /**
   * LVDT displacement in mm; NaN when not recorded.
   */
  double lvdt_mm;
  double gauge_length_m;
  double mm_per_pixel;
} CsFrameMeta;

typedef struct {
  double crack_number_real;
  uint64_t crack_number_int;
  /**
   * NaN when undefined.
   */
  double acw_um;
  double cd_per_m;
  size_t lcz_count;
  size_t polyline_count;
} CsFrameStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Message of the last failed call on this thread, or NULL when none failed.
 * The string stays valid until the next failing call on the same thread.
 */
const char *cs_last_error(void);

/**
 * Copy `len` samples (interleaved, row-major) into a new raster.
 * `channels` must be 1 or 3 and `len` must equal width*height*channels.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
CsStatus cs_raster_new(size_t width,
                       size_t height,
                       size_t channels,
                       const uint8_t *data,
                       size_t len,
                       CsRaster **out);

/**
 * Read a binary PGM (P5) or PPM (P6) file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
CsStatus cs_raster_read(const char *path, CsRaster **out);

/**
 * Write as PGM (1 channel) or PPM (3 channels).
 *
 * # Safety
 * `raster` must be a live handle and `path` a NUL-terminated string.
 */
CsStatus cs_raster_write(const CsRaster *raster, const char *path);

/**
 * # Safety
 * `raster` must be a live handle; each out-pointer may be NULL to skip it.
 */
CsStatus cs_raster_dims(const CsRaster *raster, size_t *width, size_t *height, size_t *channels);

/**
 * Borrow the samples. The pointer is valid until the raster is freed.
 *
 * # Safety
 * `raster` must be a live handle; `data` and `len` must be writable.
 */
CsStatus cs_raster_data(const CsRaster *raster, const uint8_t **data, size_t *len);

/**
 * Release a raster. NULL is ignored.
 *
 * # Safety
 * `raster` must be NULL or a handle not yet freed.
 */
void cs_raster_free(CsRaster *raster);

/**
 * Otsu threshold of a 256-bin histogram.
 *
 * # Safety
 * `histogram` must point to 256 values and `out` be writable.
 */
CsStatus cs_otsu_threshold(const uint64_t *histogram, uint8_t *out);

/**
 * Adaptive-threshold classification of one tile.
 *
 * # Safety
 * `tile` must be a live handle and `out` writable.
 */
CsStatus cs_adt_classify(const CsRaster *tile, size_t min_dark_pixels, CsPrediction *out);

/**
 * Load an MLP model file. Inputs are scaled by 1/255 at prediction time.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
CsStatus cs_mlp_load(const char *path, CsMlp **out);

/**
 * # Safety
 * `model` and `tile` must be live handles and `out` writable.
 */
CsStatus cs_mlp_predict(const CsMlp *model, const CsRaster *tile, CsPrediction *out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void cs_mlp_free(CsMlp *model);

/**
 * Load a backbone-plus-head model directory (`backbone.json`,
 * `backbone.csw`, `head.csm`).
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` writable.
 */
CsStatus cs_cnn_load(const char *dir, CsCnn **out);

/**
 * # Safety
 * `model` and `tile` must be live handles and `out` writable.
 */
CsStatus cs_cnn_predict(const CsCnn *model, const CsRaster *tile, CsPrediction *out);

/**
 * Tile-sized 1-channel activation heatmap from the backbone's last
 * convolution block. The caller owns the returned raster.
 *
 * # Safety
 * `model` and `tile` must be live handles and `out` writable.
 */
CsStatus cs_cnn_heatmap(const CsCnn *model,
                        const CsRaster *tile,
                        CsAggregate aggregate,
                        CsRaster **out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void cs_cnn_free(CsCnn *model);

/**
 * Area under the ROC curve. `labels[i]` is non-zero for P.
 *
 * # Safety
 * `scores` and `labels` must point to `n` values and `out` be writable.
 */
CsStatus cs_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Fill `out` with the default fiber/matrix parameters.
 *
 * # Safety
 * `out` must be writable.
 */
CsStatus cs_micromech_default(CsMicromechParams *out);

/**
 * Snubbing factor, transfer distance, crack spacing and saturated crack
 * density. Fails with `CS_STATUS_NUMERIC` when the saturation condition
 * does not hold.
 *
 * # Safety
 * `params` must be readable and `out` writable.
 */
CsStatus cs_theory(const CsMicromechParams *params, CsTheoryOutputs *out);

/**
 * Least-squares trilinear crack-density curve through `(strain[i], cd[i])`,
 * strain non-decreasing.
 *
 * # Safety
 * `strain` and `cd` must point to `n` values and `out` be writable.
 */
CsStatus cs_fit_trilinear(const double *strain, const double *cd, size_t n, CsTrilinear *out);

/**
 * # Safety
 * `out` must be writable.
 */
CsStatus cs_stats_params_default(CsStatsParams *out);

/**
 * Crack number, width and density of one frame with the AdT classifier.
 *
 * # Safety
 * `frame` must be a live handle, `meta` and `params` readable, `out` writable.
 */
CsStatus cs_frame_stats_adt(const CsRaster *frame,
                            const CsFrameMeta *meta,
                            const CsStatsParams *params,
                            CsFrameStats *out);

/**
 * As [`cs_frame_stats_adt`] with an MLP window classifier.
 *
 * # Safety
 * `model` and `frame` must be live handles, `meta` and `params` readable,
 * `out` writable.
 */
CsStatus cs_frame_stats_mlp(const CsMlp *model,
                            const CsRaster *frame,
                            const CsFrameMeta *meta,
                            const CsStatsParams *params,
                            CsFrameStats *out);

/**
 * As [`cs_frame_stats_adt`] with a backbone-plus-head window classifier.
 *
 * # Safety
 * `model` and `frame` must be live handles, `meta` and `params` readable,
 * `out` writable.
 */
CsStatus cs_frame_stats_cnn(const CsCnn *model,
                            const CsRaster *frame,
                            const CsFrameMeta *meta,
                            const CsStatsParams *params,
                            CsFrameStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRACKSCOPE_H */
