#ifndef COGRELAY_H
#define COGRELAY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Combining mode: direct link plus best relay.
 */
#define CGR_COMBINE_MRC_WITH_DIRECT 0

/**
 * Combining mode: best relay alone.
 */
#define CGR_COMBINE_RELAY_ONLY 1

/**
 * Combining mode: direct link alone (Monte Carlo only).
 */
#define CGR_COMBINE_DIRECT_ONLY 2

/**
 * Relay path SINR `min(g1, g2)`.
 */
#define CGR_MODEL_MAX_MIN_BOUND 0

/**
 * Relay path SINR `g1 g2 / (1 + g1 + g2)`.
 */
#define CGR_MODEL_EXACT_HARMONIC 1

typedef enum CgrStatus {
  CGR_STATUS_OK = 0,
  CGR_STATUS_NULL_POINTER = 1,
  CGR_STATUS_CONFIG = 2,
  CGR_STATUS_OUTSIDE_VALIDITY = 3,
  CGR_STATUS_NUMERICAL = 5,
  CGR_STATUS_INVALID_ARGUMENT = 6,
  CGR_STATUS_PANIC = 7,
} CgrStatus;

typedef enum CgrBinding {
  CGR_BINDING_PEAK = 0,
  CGR_BINDING_PRIMARY_OUTAGE = 1,
  CGR_BINDING_ZERO = 2,
} CgrBinding;

typedef enum CgrValidity {
  CGR_VALIDITY_VALID = 0,
  CGR_VALIDITY_OUTSIDE_VALIDITY_REGION = 1,
  CGR_VALIDITY_DEGENERATE_FALLBACK = 2,
} CgrValidity;

/**
 * Opaque scenario handle.
 */
typedef struct CgrScenario CgrScenario;

typedef struct CgrPowerBudget {
  double p_st;
  double p_sr;
  double p_u_st;
  double p_u_sr;
  enum CgrBinding st_binding;
  enum CgrBinding sr_binding;
} CgrPowerBudget;

/**
 * `i2` and `i3` are NaN when `validity` is `DEGENERATE_FALLBACK`.
 */
typedef struct CgrClosedForm {
  double i1;
  double i2;
  double i3;
  double outage_mrc;
  double outage_relay_only;
  enum CgrValidity validity;
} CgrClosedForm;

typedef struct CgrEstimate {
  double p_hat;
  double ci_low;
  double ci_high;
  uint64_t samples;
  uint64_t seed;
} CgrEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse a scenario from NUL-terminated `key = value` text.
 *
 * # Safety
 * `text` must be a valid C string and `out` a writable pointer.
 */
enum CgrStatus cgr_scenario_parse(const char *text, struct CgrScenario **out);

/**
 * Build the reference channel set at the given powers (dB over `N0`).
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum CgrStatus cgr_scenario_reference(double p_pt_db,
                                      double p_pk_db,
                                      double lambda_p,
                                      uint32_t n_relays,
                                      struct CgrScenario **out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void cgr_scenario_free(struct CgrScenario *scenario);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum CgrStatus cgr_power_budget(const struct CgrScenario *scenario, struct CgrPowerBudget *out);

/**
 * Closed-form outage. Returns `OUTSIDE_VALIDITY` when the reduction does
 * not apply to the scenario.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum CgrStatus cgr_closed_form(const struct CgrScenario *scenario, struct CgrClosedForm *out);

/**
 * Outage by nested quadrature. `combine` is `CGR_COMBINE_MRC_WITH_DIRECT`
 * or `CGR_COMBINE_RELAY_ONLY`; `abs_error` may be null.
 *
 * # Safety
 * Pointers must be valid or null (`abs_error` optional).
 */
enum CgrStatus cgr_quadrature(const struct CgrScenario *scenario,
                              uint32_t combine,
                              double *value,
                              double *abs_error);

/**
 * Monte Carlo outage estimate with a 95% Wilson interval. Relays are
 * selected by the chosen model's own score.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum CgrStatus cgr_monte_carlo(const struct CgrScenario *scenario,
                               uint64_t samples,
                               uint64_t seed,
                               uint32_t model,
                               uint32_t combine,
                               struct CgrEstimate *out);

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cgr_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *cgr_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGRELAY_H */
