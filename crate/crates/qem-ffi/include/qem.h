#ifndef QEM_H
#define QEM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QemStatus {
  QEM_STATUS_OK = 0,
  QEM_STATUS_DOMAIN = 1,
  QEM_STATUS_CONFIG = 2,
  QEM_STATUS_INPUT = 3,
  QEM_STATUS_NUMERIC = 4,
  QEM_STATUS_SAMPLING = 5,
  QEM_STATUS_IO = 6,
  QEM_STATUS_NULL_POINTER = 7,
  QEM_STATUS_INVALID_UTF8 = 8,
  QEM_STATUS_BUFFER_TOO_SMALL = 9,
  QEM_STATUS_PANIC = 10,
} QemStatus;

/**
 * Discrete reference schemes, in the order of `SchemeKind::ALL`.
 */
typedef enum QemScheme {
  QEM_SCHEME_IN_FOCUS_PHASE_CONTRAST = 0,
  QEM_SCHEME_DARK_FIELD = 1,
  QEM_SCHEME_DIFFRACTION = 2,
  QEM_SCHEME_DISCRETE_N_PIXEL = 3,
  QEM_SCHEME_SCANNING_PAIRWISE = 4,
} QemScheme;

typedef struct QemBeam QemBeam;

typedef struct QemConfig QemConfig;

typedef struct QemImage QemImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static NUL-terminated string.
 */
const char *qem_version(void);

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *qem_last_error(void);

/**
 * # Safety
 * `out` must be writable.
 */
enum QemStatus qem_beam_new(double kinetic_energy_ev,
                            double energy_loss_ev,
                            double mean_free_path_nm,
                            struct QemBeam **out);

/**
 * # Safety
 * `beam` must come from `qem_beam_new` and not be used afterwards.
 */
void qem_beam_free(struct QemBeam *beam);

/**
 * # Safety
 * `beam` valid, outputs writable (each may be null to skip).
 */
enum QemStatus qem_beam_info(const struct QemBeam *beam,
                             double *wavelength_nm,
                             double *gamma,
                             double *theta_e);

/**
 * Inelastic blur coefficient μ at stripe period `beta` (rad).
 *
 * # Safety
 * `beam` valid, `out` writable.
 */
enum QemStatus qem_mu_of_beta(const struct QemBeam *beam, double beta, double *out);

/**
 * Phase noise of conventional imaging at `beta` (rad) for damage constant
 * `r_nm4` and allocation constant `zeta`.
 *
 * # Safety
 * `beam` valid, `out` writable.
 */
enum QemStatus qem_classical_noise(const struct QemBeam *beam,
                                   double beta,
                                   double r_nm4,
                                   double zeta,
                                   double *out);

/**
 * Analytic phase variance of a reference scheme.
 *
 * # Safety
 * `out` writable.
 */
enum QemStatus qem_scheme_variance(enum QemScheme scheme,
                                   uint64_t electrons,
                                   uint64_t n_pixels,
                                   double alpha,
                                   double *out);

/**
 * # Safety
 * `profile` a NUL-terminated string, `out` writable.
 */
enum QemStatus qem_config_new(const char *profile, uint64_t seed, struct QemConfig **out);

/**
 * # Safety
 * `cfg` from `qem_config_new`, not used afterwards.
 */
void qem_config_free(struct QemConfig *cfg);

/**
 * # Safety
 * `cfg` valid; `key`, `value` NUL-terminated.
 */
enum QemStatus qem_config_set(struct QemConfig *cfg, const char *key, const char *value);

/**
 * Numeric value of `key`.
 *
 * # Safety
 * `cfg` valid, `key` NUL-terminated, `out` writable.
 */
enum QemStatus qem_config_get(const struct QemConfig *cfg, const char *key, double *out);

/**
 * SHA-256 of the canonical configuration, 64 hex digits.
 *
 * # Safety
 * `cfg` valid; `buf` holds `len` bytes; `needed` may be null.
 */
enum QemStatus qem_config_hash(const struct QemConfig *cfg, char *buf, size_t len, size_t *needed);

/**
 * Projected phase map of an atom file on a square grid.
 *
 * # Safety
 * `path` NUL-terminated, `beam` valid, `out` writable.
 */
enum QemStatus qem_image_from_atoms(const char *path,
                                    const struct QemBeam *beam,
                                    size_t grid,
                                    double pixel_nm,
                                    struct QemImage **out);

/**
 * Image from `rows * cols` row-major values.
 *
 * # Safety
 * `data` holds `rows * cols` doubles, `out` writable.
 */
enum QemStatus qem_image_from_data(const double *data,
                                   size_t rows,
                                   size_t cols,
                                   double pixel_nm,
                                   struct QemImage **out);

/**
 * # Safety
 * `img` from a `qem_image_*` constructor, not used afterwards.
 */
void qem_image_free(struct QemImage *img);

/**
 * # Safety
 * `img` valid, outputs writable.
 */
enum QemStatus qem_image_dims(const struct QemImage *img, size_t *rows, size_t *cols);

/**
 * Copies the row-major pixels into `buf` of `len` doubles.
 *
 * # Safety
 * `img` valid, `buf` holds `len` doubles.
 */
enum QemStatus qem_image_copy(const struct QemImage *img, double *buf, size_t len);

/**
 * Band-pass between `beta_l` and `beta_h` (rad) as a new image.
 *
 * # Safety
 * `img`, `beam` valid, `out` writable.
 */
enum QemStatus qem_image_bandpass(const struct QemImage *img,
                                  const struct QemBeam *beam,
                                  double beta_l,
                                  double beta_h,
                                  struct QemImage **out);

/**
 * Runs the command-line front end with `argv[0..argc]`; returns its exit code.
 *
 * # Safety
 * `argv` holds `argc` NUL-terminated strings.
 */
int qem_run_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QEM_H */
