#ifndef ITERPROJ_H
#define ITERPROJ_H

/* Generated by cbindgen from iterproj-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a fallible call.
 */
typedef enum IterprojStatus {
  /**
   * The call succeeded.
   */
  ITERPROJ_STATUS_OK = 0,
  /**
   * Rejected configuration: unknown key, unparsable value, or a value
   * outside its validity range.
   */
  ITERPROJ_STATUS_CONFIG_ERROR = 1,
  /**
   * A solver failed: momentum or potential solve stalled, or a matrix
   * factorization broke down.
   */
  ITERPROJ_STATUS_SOLVER_ERROR = 2,
  /**
   * A runtime guarantee was violated (for example the energy check in
   * abort mode).
   */
  ITERPROJ_STATUS_ASSERTION_ERROR = 3,
  /**
   * The API was misused: null handle, non-UTF-8 string, or an argument
   * outside its domain.
   */
  ITERPROJ_STATUS_USAGE_ERROR = 4,
} IterprojStatus;

/**
 * Opaque run configuration.
 */
typedef struct IterprojConfig IterprojConfig;

/**
 * Opaque spectrum report: dense eigenvalues of the pressure-iteration
 * operator plus predicted and measured contraction rates.
 */
typedef struct IterprojSpectrum IterprojSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the most recent error on this thread into `buf`
 * (NUL-terminated, truncated to `cap` bytes) and returns the full message
 * length in bytes, excluding the terminator. Call with a null `buf` or
 * zero `cap` to query the length alone.
 */
size_t iterproj_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *iterproj_version(void);

/**
 * Creates a configuration holding the built-in defaults. Free with
 * `iterproj_config_free`.
 */
struct IterprojConfig *iterproj_config_new(void);

/**
 * Parses a configuration from `key = value` text (`#` comments). Returns
 * null and records the error when the text is rejected.
 */
struct IterprojConfig *iterproj_config_parse(const char *text);

/**
 * Applies one `key`, `value` pair to the configuration.
 */
enum IterprojStatus iterproj_config_set(struct IterprojConfig *cfg,
                                        const char *key,
                                        const char *value);

/**
 * Serializes the configuration into `buf` (NUL-terminated, truncated to
 * `cap` bytes) and returns the full text length in bytes, excluding the
 * terminator. A null handle returns 0.
 */
size_t iterproj_config_serialize(const struct IterprojConfig *cfg, char *buf, size_t cap);

/**
 * Releases a configuration handle. Null is ignored.
 */
void iterproj_config_free(struct IterprojConfig *cfg);

/**
 * Runs the configured simulation and writes its artifacts (per-step CSV,
 * per-pass CSV, summary CSV, final-field VTK) into the configured output
 * directory.
 */
enum IterprojStatus iterproj_run(const struct IterprojConfig *cfg);

/**
 * Computes the iteration spectrum for the configured problem and mesh.
 * The measured rate is fitted over passes `fit_from..fit_to` of an actual
 * solve. Returns null and records the error on failure (for example when
 * the pressure space exceeds the dense-analysis limit).
 */
struct IterprojSpectrum *iterproj_spectrum_compute(const struct IterprojConfig *cfg,
                                                   size_t fit_from,
                                                   size_t fit_to);

/**
 * Number of eigenvalues in the report; 0 for a null handle.
 */
size_t iterproj_spectrum_eigenvalue_count(const struct IterprojSpectrum *spectrum);

/**
 * Copies up to `cap` ascending eigenvalues into `out` and returns the
 * number copied.
 */
size_t iterproj_spectrum_eigenvalues(const struct IterprojSpectrum *spectrum,
                                     double *out,
                                     size_t cap);

/**
 * Largest eigenvalue of the iteration operator; NaN for a null handle.
 */
double iterproj_spectrum_lambda_max(const struct IterprojSpectrum *spectrum);

/**
 * Closed-form bound `max(alpha/1.5, rho/nu)` on the largest eigenvalue.
 */
double iterproj_spectrum_bound(const struct IterprojSpectrum *spectrum);

/**
 * Predicted asymptotic contraction rate of the pressure iteration.
 */
double iterproj_spectrum_predicted_rate(const struct IterprojSpectrum *spectrum);

/**
 * Contraction rate fitted from an actual solve on the same mesh.
 */
double iterproj_spectrum_measured_rate(const struct IterprojSpectrum *spectrum);

/**
 * True when the update parameters guarantee convergence
 * (`max(alpha/1.5, rho/nu) < 2`); false for a null handle.
 */
bool iterproj_spectrum_guaranteed(const struct IterprojSpectrum *spectrum);

/**
 * Releases a spectrum handle. Null is ignored.
 */
void iterproj_spectrum_free(struct IterprojSpectrum *spectrum);

/**
 * Amplification constant of the implicit pressure update for one Fourier
 * mode with squared frequency `xi_sq`.
 */
double iterproj_normal_mode_constant(double alpha, double rho, double nu, double k, double xi_sq);

/**
 * Amplification constant of the divergence-only update in terms of
 * `z = k nu xi_sq` and the ratio `rho/nu`.
 */
double iterproj_uzawa_constant(double z, double rho_over_nu);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ITERPROJ_H */
