#ifndef SPECRECON_H
#define SPECRECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_INVALID_ARGUMENT = 1,
  SR_STATUS_CONFIG = 2,
  SR_STATUS_NUMERIC = 3,
  SR_STATUS_IO = 4,
  SR_STATUS_INTEGRITY = 5,
  SR_STATUS_SHAPE = 6,
  SR_STATUS_NULL_POINTER = 7,
  SR_STATUS_PANIC = 8,
} SrStatus;

typedef enum SrAlgorithm {
  SR_ALGORITHM_SIRT = 0,
  SR_ALGORITHM_TVM = 1,
  SR_ALGORITHM_N2N_POST = 2,
  SR_ALGORITHM_S2S = 3,
} SrAlgorithm;

/**
 * Run configuration.
 */
typedef struct SrConfig SrConfig;

/**
 * Simulated scan: sinograms plus ground truth.
 */
typedef struct SrSimulation SrSimulation;

/**
 * Per-bin square images.
 */
typedef struct SrStack SrStack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *sr_last_error(void);

/**
 * Library version as a static string.
 */
const char *sr_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void sr_string_free(char *s);

/**
 * Built-in default configuration.
 */
struct SrConfig *sr_config_default(void);

/**
 * Parse and validate a JSON run config.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a writable pointer.
 */
enum SrStatus sr_config_from_json(const char *json, struct SrConfig **out);

/**
 * Canonical JSON of `config`; free with `sr_string_free`.
 *
 * # Safety
 * `config` must be a live handle; `out` a writable pointer.
 */
enum SrStatus sr_config_to_json(const struct SrConfig *config, char **out);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum SrStatus sr_config_set_seed(struct SrConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must come from this library and not be freed twice.
 */
void sr_config_free(struct SrConfig *config);

/**
 * Build the phantom and simulate its noisy spectral scan in memory.
 *
 * # Safety
 * `config` must be a live handle; `out` a writable pointer.
 */
enum SrStatus sr_simulate(const struct SrConfig *config, struct SrSimulation **out);

/**
 * # Safety
 * `sim` must come from this library and not be freed twice.
 */
void sr_simulation_free(struct SrSimulation *sim);

/**
 * Copy of the ground-truth images.
 *
 * # Safety
 * `sim` must be a live handle; `out` a writable pointer.
 */
enum SrStatus sr_simulation_truth(const struct SrSimulation *sim, struct SrStack **out);

/**
 * Views and detectors per sinogram bin.
 *
 * # Safety
 * `sim` must be a live handle; `views` and `detectors` writable.
 */
enum SrStatus sr_simulation_sinogram_shape(const struct SrSimulation *sim,
                                           size_t *views,
                                           size_t *detectors);

/**
 * Copy sinogram bin `bin` (views * detectors values) into `dst`.
 *
 * # Safety
 * `dst` must hold `len` doubles.
 */
enum SrStatus sr_simulation_copy_sinogram(const struct SrSimulation *sim,
                                          size_t bin,
                                          double *dst,
                                          size_t len);

/**
 * Reconstruct a simulation with `algorithm`, using the recon and train
 * blocks (and derived seeds) of `config`.
 *
 * # Safety
 * `config` and `sim` must be live handles; `out` a writable pointer.
 */
enum SrStatus sr_reconstruct(const struct SrConfig *config,
                             const struct SrSimulation *sim,
                             enum SrAlgorithm algorithm,
                             struct SrStack **out);

/**
 * # Safety
 * `stack` must be a live handle or NULL.
 */
size_t sr_stack_num_bins(const struct SrStack *stack);

/**
 * Pixels per side.
 *
 * # Safety
 * `stack` must be a live handle or NULL.
 */
size_t sr_stack_size(const struct SrStack *stack);

/**
 * Copy bin `bin` (size * size values, row-major) into `dst`.
 *
 * # Safety
 * `dst` must hold `len` doubles.
 */
enum SrStatus sr_stack_copy_bin(const struct SrStack *stack, size_t bin, double *dst, size_t len);

/**
 * # Safety
 * `stack` must come from this library and not be freed twice.
 */
void sr_stack_free(struct SrStack *stack);

/**
 * PSNR in dB of `a` against `b` (`len` values each); identical inputs give +inf.
 *
 * # Safety
 * `a` and `b` must hold `len` doubles; `out` writable.
 */
enum SrStatus sr_psnr(const double *a, const double *b, size_t len, double data_range, double *out);

/**
 * Blur fraction of a whole `size x size` image with default parameters.
 * `*defined` is false when the image has no edges.
 *
 * # Safety
 * `image` must hold `size * size` doubles; `out` and `defined` writable.
 */
enum SrStatus sr_blur_fraction(const double *image, size_t size, double *out, bool *defined);

/**
 * File-based simulate command: sinograms, truth and manifest under `out_dir`.
 *
 * # Safety
 * `config` must be a live handle; `out_dir` a NUL-terminated path.
 */
enum SrStatus sr_cmd_simulate(const struct SrConfig *config, const char *out_dir);

/**
 * File-based reconstruct command reading `input_dir` and writing `out_dir`.
 *
 * # Safety
 * `config` must be a live handle; the paths NUL-terminated.
 */
enum SrStatus sr_cmd_reconstruct(const struct SrConfig *config,
                                 enum SrAlgorithm algorithm,
                                 const char *input_dir,
                                 const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECRECON_H */
