#ifndef BIOMASS_H
#define BIOMASS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bumped on any incompatible change to the functions or structs below.
 */
#define BM_ABI_VERSION 1

typedef enum BmFeatureSpec {
  BM_FEATURE_SPEC_AREA_ONLY = 0,
  BM_FEATURE_SPEC_AREA_PLUS_SPEED = 1,
} BmFeatureSpec;

typedef enum BmRowMode {
  BM_ROW_MODE_PER_IMAGE = 0,
  BM_ROW_MODE_SPECIMEN_MEAN = 1,
} BmRowMode;

typedef enum BmStatus {
  BM_STATUS_OK = 0,
  BM_STATUS_NULL_POINTER = 1,
  BM_STATUS_INVALID_INPUT = 2,
  BM_STATUS_IO = 3,
  BM_STATUS_NUMERIC = 4,
  BM_STATUS_PANIC = 5,
} BmStatus;

typedef enum BmTargetSpace {
  BM_TARGET_SPACE_RAW = 0,
  BM_TARGET_SPACE_LOG = 1,
} BmTargetSpace;

/**
 * Opaque loaded dataset.
 */
typedef struct BmDataset BmDataset;

/**
 * Opaque fitted linear model.
 */
typedef struct BmLinearModel BmLinearModel;

/**
 * Specimen-level error summary.
 */
typedef struct BmMetrics {
  size_t n;
  double mape;
  double mdape;
  double mae;
  double rmse;
  double r2_log;
} BmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

uint32_t bm_abi_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The caller owns
 * the returned string.
 */
char *bm_last_error_message(void);

void bm_string_free(char *s);

/**
 * Loads a manifest or an ingested dataset file. `raster_size` of 0 keeps
 * the largest raster size found.
 */
enum BmStatus bm_dataset_load(const char *path, size_t raster_size, struct BmDataset **out_dataset);

void bm_dataset_free(struct BmDataset *dataset);

enum BmStatus bm_dataset_len(const struct BmDataset *dataset, size_t *out_len);

/**
 * Per-specimen predictor table as CSV text; free with [`bm_string_free`].
 */
enum BmStatus bm_dataset_features_csv(const struct BmDataset *dataset, char **out_csv);

enum BmStatus bm_linear_fit(const struct BmDataset *dataset,
                            enum BmFeatureSpec features,
                            enum BmTargetSpace target,
                            enum BmRowMode rows,
                            struct BmLinearModel **out_model);

void bm_linear_free(struct BmLinearModel *model);

/**
 * Intercept followed by slopes; `len` must equal the coefficient count,
 * which `out_len` reports when `out_coefficients` is NULL.
 */
enum BmStatus bm_linear_coefficients(const struct BmLinearModel *model,
                                     double *out_coefficients,
                                     size_t len,
                                     size_t *out_len);

/**
 * Specimen-level predictions in dataset order; `len` must equal the
 * dataset size.
 */
enum BmStatus bm_linear_predict(const struct BmLinearModel *model,
                                const struct BmDataset *dataset,
                                double trim_fraction,
                                double *out_masses,
                                size_t len);

/**
 * Serialized model; free with [`bm_string_free`].
 */
enum BmStatus bm_linear_to_json(const struct BmLinearModel *model, char **out_json);

enum BmStatus bm_linear_from_json(const char *json, struct BmLinearModel **out_model);

enum BmStatus bm_trimmed_median(const double *values,
                                size_t len,
                                double trim_fraction,
                                double *out_value);

enum BmStatus bm_compute_metrics(const double *y_true,
                                 const double *y_pred,
                                 size_t len,
                                 struct BmMetrics *out_metrics);

enum BmStatus bm_ks_two_sample(const double *a,
                               size_t len_a,
                               const double *b,
                               size_t len_b,
                               double *out_d,
                               double *out_p);

enum BmStatus bm_pearson_r(const double *a, const double *b, size_t len, double *out_r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIOMASS_H */
