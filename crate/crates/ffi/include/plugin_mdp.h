#ifndef PLUGIN_MDP_H
#define PLUGIN_MDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum {
  PMDP_STATUS_OK = 0,
  /**
   * Malformed input: bad dimensions, out-of-range parameters, rows that
   * do not sum to one.
   */
  PMDP_STATUS_INVALID_INPUT = 1,
  /**
   * An MDP file could not be parsed.
   */
  PMDP_STATUS_PARSE_ERROR = 2,
  PMDP_STATUS_IO_ERROR = 3,
  /**
   * The requested bound is vacuous at this sample size.
   */
  PMDP_STATUS_VACUOUS_BOUND = 4,
  /**
   * A required pointer argument was null.
   */
  PMDP_STATUS_NULL_POINTER = 5,
  /**
   * Internal invariant failure; indicates a bug.
   */
  PMDP_STATUS_INTERNAL_ERROR = 6,
} PmdpStatus;

/**
 * Planner selector for [`pmdp_plan`].
 */
typedef enum {
  PMDP_PLANNER_VALUE_ITERATION = 0,
  PMDP_PLANNER_POLICY_ITERATION = 1,
} PmdpPlanner;

/**
 * Opaque MDP handle.
 */
typedef struct PmdpMdp PmdpMdp;

/**
 * Closed-form bound inputs, mirroring the library's parameter struct.
 */
typedef struct {
  uintptr_t n_states;
  uintptr_t n_actions;
  double discount;
  double delta;
  uint64_t n;
  double c;
} PmdpBoundParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name of a status code.
 */
const char *pmdp_status_name(PmdpStatus status);

/**
 * Build an MDP from dense row-major arrays.
 *
 * `reward` has `n_states * n_actions` entries ordered `(s, a)`;
 * `transition` has `n_states * n_actions * n_states` entries ordered
 * `(s, a, s2)`. Rows must sum to one.
 *
 * # Safety
 * `reward` and `transition` must point to arrays of the stated lengths and
 * `out` must be a valid location to store the new handle.
 */
PmdpStatus pmdp_mdp_new(uintptr_t n_states,
                        uintptr_t n_actions,
                        double discount,
                        const double *reward,
                        const double *transition,
                        PmdpMdp **out);

/**
 * Load an MDP from a text-format file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid location
 * to store the new handle.
 */
PmdpStatus pmdp_mdp_load(const char *path, PmdpMdp **out);

/**
 * Write an MDP to a text-format file.
 *
 * # Safety
 * `m` must be a live handle and `path` a valid NUL-terminated string.
 */
PmdpStatus pmdp_mdp_save(const PmdpMdp *m, const char *path);

/**
 * Release a handle. Null is a no-op.
 *
 * # Safety
 * `m` must have come from this library and not been freed before.
 */
void pmdp_mdp_free(PmdpMdp *m);

/**
 * Number of states, or 0 for a null handle.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
uintptr_t pmdp_mdp_n_states(const PmdpMdp *m);

/**
 * Number of actions, or 0 for a null handle.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
uintptr_t pmdp_mdp_n_actions(const PmdpMdp *m);

/**
 * Discount factor, or NaN for a null handle.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
double pmdp_mdp_discount(const PmdpMdp *m);

/**
 * Plan an `eps_opt`-optimal policy.
 *
 * `actions_out` receives `n_states` entries. `q_out` is optional; when
 * non-null it receives the planner's `n_states * n_actions` action values
 * in `(s, a)` order.
 *
 * # Safety
 * `m` must be a live handle; out-pointers must be null or sized as stated.
 */
PmdpStatus pmdp_plan(const PmdpMdp *m,
                     PmdpPlanner planner,
                     double eps_opt,
                     uintptr_t *actions_out,
                     double *q_out);

/**
 * Evaluate a deterministic policy exactly.
 *
 * `actions` holds `n_states` action indices. `v_out` (length `n_states`)
 * and `q_out` (length `n_states * n_actions`) are each optional.
 *
 * # Safety
 * `m` must be a live handle; `actions` must hold `n_states` entries;
 * out-pointers must be null or sized as stated.
 */
PmdpStatus pmdp_policy_value(const PmdpMdp *m,
                             const uintptr_t *actions,
                             double *v_out,
                             double *q_out);

/**
 * Draw `n` generative-model samples per pair and return the plug-in MDP
 * as a new handle. Deterministic in `(seed, stream)`.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid location for the new handle.
 */
PmdpStatus pmdp_sample_empirical(const PmdpMdp *m,
                                 uint64_t n,
                                 uint64_t seed,
                                 uint64_t stream,
                                 PmdpMdp **out);

/**
 * Crude Hoeffding value bound.
 *
 * # Safety
 * `out` must be a valid f64 location.
 */
PmdpStatus pmdp_crude_delta(PmdpBoundParams params, double *out);

/**
 * Contraction factor `alpha`.
 *
 * # Safety
 * `out` must be a valid f64 location.
 */
PmdpStatus pmdp_alpha(PmdpBoundParams params, double *out);

/**
 * Discretization residual `delta_prime`.
 *
 * # Safety
 * `out` must be a valid f64 location.
 */
PmdpStatus pmdp_delta_prime(PmdpBoundParams params, double *out);

/**
 * Sample size per pair that the main guarantee requires at accuracy
 * `epsilon`. The `n` field of `params` is ignored.
 *
 * # Safety
 * `out` must be a valid u64 location.
 */
PmdpStatus pmdp_required_n(PmdpBoundParams params, double epsilon, uint64_t *out);

/**
 * The two final value-error bounds: `rhs_planned` for the planned policy,
 * `rhs_optimal` for the true optimal policy evaluated in the empirical
 * model. Fails with `VACUOUS_BOUND` when `alpha >= 1`.
 *
 * # Safety
 * `rhs_planned` and `rhs_optimal` must be valid f64 locations.
 */
PmdpStatus pmdp_final_bound(PmdpBoundParams params,
                            double eps_opt,
                            double *rhs_planned,
                            double *rhs_optimal);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLUGIN_MDP_H */
