#ifndef SURESHRINK_H
#define SURESHRINK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Estimation methods selectable through the ABI.
 */
typedef enum SureshrinkMethod {
  SureshrinkMethod_LinearSure = 0,
  SureshrinkMethod_PwlUpperBound = 1,
  SureshrinkMethod_PwlPlugin = 2,
  SureshrinkMethod_PwlCv = 3,
  SureshrinkMethod_PwcMonotone = 4,
  SureshrinkMethod_PwcTv = 5,
  SureshrinkMethod_Bg = 6,
  SureshrinkMethod_JzNpmle = 7,
} SureshrinkMethod;

/**
 * Status codes returned by every entry point.
 */
typedef enum SureshrinkStatus {
  SureshrinkStatus_Ok = 0,
  SureshrinkStatus_NullPointer = 1,
  SureshrinkStatus_InvalidInput = 2,
  SureshrinkStatus_ConfigError = 3,
  SureshrinkStatus_SolverError = 4,
  /**
   * The fit finished but the solver flagged non-convergence; the handle
   * is still valid.
   */
  SureshrinkStatus_NotConverged = 5,
  SureshrinkStatus_Utf8Error = 6,
  SureshrinkStatus_JsonError = 7,
  SureshrinkStatus_Panic = 8,
} SureshrinkStatus;

/**
 * Opaque fitted-rule handle.
 */
typedef struct SureshrinkRule SureshrinkRule;

/**
 * Opaque sample handle.
 */
typedef struct SureshrinkSample SureshrinkSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static C string.
 */
const char *sureshrink_version(void);

/**
 * Create a sample from `len` observations with known noise scale `sigma`.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to a writable
 * handle slot.
 */
enum SureshrinkStatus sureshrink_sample_new(const double *values,
                                            uintptr_t len,
                                            double sigma,
                                            struct SureshrinkSample **out);

/**
 * Release a sample handle. Null is a no-op.
 *
 * # Safety
 * `sample` must be a live handle from [`sureshrink_sample_new`] or null.
 */
void sureshrink_sample_free(struct SureshrinkSample *sample);

/**
 * Fit a rule to the sample. On `Ok` or `NotConverged` a rule handle is
 * written to `out`.
 *
 * # Safety
 * `sample` must be a live sample handle and `out` writable.
 */
enum SureshrinkStatus sureshrink_fit(const struct SureshrinkSample *sample,
                                     enum SureshrinkMethod method,
                                     uint64_t seed,
                                     struct SureshrinkRule **out);

/**
 * Release a rule handle. Null is a no-op.
 *
 * # Safety
 * `rule` must be a live handle from [`sureshrink_fit`] /
 * [`sureshrink_rule_from_json`] or null.
 */
void sureshrink_rule_free(struct SureshrinkRule *rule);

/**
 * Evaluate the rule at one point.
 *
 * # Safety
 * `rule` must be live; `out` writable.
 */
enum SureshrinkStatus sureshrink_rule_evaluate(const struct SureshrinkRule *rule,
                                               double x,
                                               double *out);

/**
 * Evaluate the rule over `len` points into a caller-provided buffer.
 *
 * # Safety
 * `xs` must point to `len` readable doubles, `out` to `len` writable ones.
 */
enum SureshrinkStatus sureshrink_rule_evaluate_many(const struct SureshrinkRule *rule,
                                                    const double *xs,
                                                    uintptr_t len,
                                                    double *out);

/**
 * Almost-everywhere derivative of the rule at one point.
 *
 * # Safety
 * `rule` must be live; `out` writable.
 */
enum SureshrinkStatus sureshrink_rule_derivative(const struct SureshrinkRule *rule,
                                                 double x,
                                                 double *out);

/**
 * Achieved risk estimate of the fit.
 *
 * # Safety
 * `rule` must be live; `out` writable.
 */
enum SureshrinkStatus sureshrink_rule_risk_estimate(const struct SureshrinkRule *rule, double *out);

/**
 * Whether the underlying solver converged (1) or was flagged (0).
 *
 * # Safety
 * `rule` must be live; `out` writable.
 */
enum SureshrinkStatus sureshrink_rule_converged(const struct SureshrinkRule *rule, int32_t *out);

/**
 * Serialize the fitted rule to JSON. The returned string is released with
 * [`sureshrink_string_free`].
 *
 * # Safety
 * `rule` must be live; `out` writable.
 */
enum SureshrinkStatus sureshrink_rule_to_json(const struct SureshrinkRule *rule, char **out);

/**
 * Rebuild a rule handle from its JSON form. The handle reports a NaN risk
 * estimate (no sample is attached).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` writable.
 */
enum SureshrinkStatus sureshrink_rule_from_json(const char *json, struct SureshrinkRule **out);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from [`sureshrink_rule_to_json`] or be null.
 */
void sureshrink_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SURESHRINK_H */
