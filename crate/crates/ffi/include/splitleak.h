/* Generated by cbindgen; do not edit. */

#ifndef SPLITLEAK_H
#define SPLITLEAK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_CONFIG = 3,
  SL_STATUS_NUMERIC = 4,
  SL_STATUS_IO = 5,
  SL_STATUS_PANIC = 6,
} SlStatus;

typedef struct SlConfig SlConfig;

typedef struct SlRun SlRun;

/**
 * Noise eigenvalues and privacy certificate of one solved batch.
 */
typedef struct {
  double pos_principal;
  double pos_iso;
  double neg_principal;
  double neg_iso;
  double sum_kl;
  double auc_bound;
  double tv_bound;
  bool converged;
} SlSolution;

/**
 * 95%-quantile leak AUCs and test metrics of a run.
 */
typedef struct {
  double norm_cut;
  double cos_cut;
  double norm_first;
  double cos_first;
  double test_loss;
  double test_auc;
  size_t iterations;
  size_t fallback_iterations;
} SlRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library.
 */
const char *sl_last_error(void);

/**
 * ROC AUC of `scores` against 0/1 `labels` (midrank ties).
 *
 * # Safety
 * `scores` and `labels` must point to `n` doubles; `out` must be writable.
 */
SlStatus sl_roc_auc(const double *scores, const double *labels, size_t n, double *out);

/**
 * Worst-case leak AUC implied by a symmetrized KL of `sum_kl`.
 *
 * # Safety
 * `out` must be writable.
 */
SlStatus sl_auc_upper_bound(double sum_kl, double *out);

/**
 * Solves the noise program for class statistics `(p, u, v, delta_g)` at
 * power budget `s * ||delta_g||^2`, with default solver settings.
 *
 * # Safety
 * `delta_g` must point to `d` doubles; `out` must be writable.
 */
SlStatus sl_solve(double p,
                  double u,
                  double v,
                  const double *delta_g,
                  size_t d,
                  double s,
                  SlSolution *out);

/**
 * Perturbs a row-major `rows x cols` gradient batch in place with the
 * mechanism described by `mechanism_json` (e.g. `{"kind": "iso", "t": 1}`).
 *
 * # Safety
 * `grads` must point to `rows * cols` writable doubles, `labels` to `rows`
 * doubles, and `mechanism_json` to a NUL-terminated string.
 */
SlStatus sl_perturb(const char *mechanism_json,
                    double *grads,
                    size_t rows,
                    size_t cols,
                    const double *labels,
                    uint64_t seed);

/**
 * Parses an experiment config from JSON. Unknown keys are rejected.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
SlStatus sl_config_from_json(const char *json, SlConfig **out);

/**
 * # Safety
 * `config` must be a live handle.
 */
SlStatus sl_config_set_seed(SlConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void sl_config_free(SlConfig *config);

/**
 * Trains one run.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
SlStatus sl_run(const SlConfig *config, SlRun **out);

/**
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
SlStatus sl_run_summary(const SlRun *run, SlRunSummary *out);

/**
 * Writes `run.csv` and `summary.csv` into `dir`.
 *
 * # Safety
 * `run` must be a live handle; `dir` must be NUL-terminated.
 */
SlStatus sl_run_write(const SlRun *run, const char *dir);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void sl_run_free(SlRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLITLEAK_H */
