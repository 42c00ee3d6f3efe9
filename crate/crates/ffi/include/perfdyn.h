#ifndef PERFDYN_H
#define PERFDYN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum PdStatus {
  PdStatus_Ok = 0,
  /**
   * Bad arguments or configuration.
   */
  PdStatus_InvalidArgument = 1,
  /**
   * The computation ran but failed numerically.
   */
  PdStatus_NumericalFailure = 2,
  /**
   * A required pointer was null.
   */
  PdStatus_NullPointer = 3,
  /**
   * An output buffer has the wrong length.
   */
  PdStatus_BadBufferLength = 4,
} PdStatus;

/**
 * Opaque market handle.
 */
typedef struct PdMarket PdMarket;

/**
 * Result of a period-3 certificate attempt.
 */
typedef struct PdPeriod3 {
  /**
   * 1 when the orbit was certified, 0 otherwise (see the last error
   * message for the failed inequality).
   */
  int32_t certified;
  double x0;
  double x1;
  double x2;
  double x3;
  /**
   * x0 - x3.
   */
  double margin_low;
  /**
   * x1 - x0.
   */
  double margin_high;
  /**
   * |f(x0) - x1| after bisection.
   */
  double residual;
} PdPeriod3;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (truncating if
 * needed, always nul-terminated when `cap > 0`) and returns the full
 * length of the message including the terminator.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes (or be null).
 */
uintptr_t pd_last_error_message(char *buf, uintptr_t cap);

/**
 * Builds a market from raw arrays (`a` is row-major `d*d`).
 *
 * # Safety
 * `lambda`, `theta0`, `a`, `c` must point to arrays of the stated lengths
 * and `out` must be a valid pointer to receive the handle.
 */
enum PdStatus pd_market_new(uintptr_t d,
                            uintptr_t n,
                            const double *lambda,
                            const double *theta0,
                            const double *a,
                            const double *c,
                            double sigma0_sq,
                            struct PdMarket **out);

/**
 * Loads the market keys of a TOML experiment file.
 *
 * # Safety
 * `path` must be a nul-terminated UTF-8 string; `out` must be valid.
 */
enum PdStatus pd_market_from_file(const char *path, struct PdMarket **out);

/**
 * Releases a market handle. Null is ignored.
 *
 * # Safety
 * `market` must have come from `pd_market_new`/`pd_market_from_file` and
 * must not be used afterwards.
 */
void pd_market_free(struct PdMarket *market);

/**
 * Reports the feature dimension and agent count.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PdStatus pd_market_dims(const struct PdMarket *market, uintptr_t *out_d, uintptr_t *out_n);

/**
 * Solves for the performative stable point; writes the `n*d` profile into
 * `out_theta` and the first-order residual into `out_residual`.
 * `out_proper` receives 1 when the point is proper.
 *
 * # Safety
 * Buffers must match the market dimensions.
 */
enum PdStatus pd_stable_point(const struct PdMarket *market,
                              double tol,
                              uintptr_t max_iters,
                              double *out_theta,
                              uintptr_t out_theta_len,
                              double *out_residual,
                              int32_t *out_proper);

/**
 * Evaluates the convex potential at a profile.
 *
 * # Safety
 * Buffers must match the market dimensions.
 */
enum PdStatus pd_potential(const struct PdMarket *market,
                           const double *theta,
                           uintptr_t theta_len,
                           double *out);

/**
 * Largest learning rate passing the conservative descent conditions for
 * the supplied stable point.
 *
 * # Safety
 * Buffers must match the market dimensions.
 */
enum PdStatus pd_safe_learning_rate(const struct PdMarket *market,
                                    const double *theta_star,
                                    uintptr_t theta_len,
                                    double r_eta,
                                    double *out_eta);

/**
 * Runs `steps` exact update rounds and writes all `steps + 1` states
 * (row-major by round, then agent, then coordinate) into `out_states`.
 *
 * # Safety
 * `out_states_len` must equal `(steps + 1) * n * d`.
 */
enum PdStatus pd_simulate(const struct PdMarket *market,
                          const double *initial,
                          uintptr_t initial_len,
                          const double *eta,
                          uintptr_t eta_len,
                          uintptr_t steps,
                          double *out_states,
                          uintptr_t out_states_len);

/**
 * Stochastic counterpart of `pd_simulate` with batch size `m` and master
 * seed `seed`; `shared_batches != 0` makes all agents share one batch per
 * round.
 *
 * # Safety
 * `out_states_len` must equal `(steps + 1) * n * d`.
 */
enum PdStatus pd_stochastic_simulate(const struct PdMarket *market,
                                     const double *initial,
                                     uintptr_t initial_len,
                                     const double *eta,
                                     uintptr_t eta_len,
                                     uintptr_t steps,
                                     uintptr_t m,
                                     uint64_t seed,
                                     int32_t shared_batches,
                                     double *out_states,
                                     uintptr_t out_states_len);

/**
 * Integrates the continuous-time flow to `t_end` with fixed step `dt` and
 * writes the final profile into `out_theta`.
 *
 * # Safety
 * Buffers must match the market dimensions.
 */
enum PdStatus pd_integrate_ode(const struct PdMarket *market,
                               const double *initial,
                               uintptr_t initial_len,
                               const double *eta,
                               uintptr_t eta_len,
                               double t_end,
                               double dt,
                               double *out_theta,
                               uintptr_t out_theta_len);

/**
 * Reduced-map parameters of a two-feature market at a common rate and a
 * collective influence.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PdStatus pd_reduced_map_params(const struct PdMarket *market,
                                    double eta,
                                    double influence,
                                    double *out_alpha,
                                    double *out_beta);

/**
 * One application of the scalar map with parameters (`alpha`, `beta`).
 *
 * # Safety
 * `out` must be valid.
 */
enum PdStatus pd_reduced_map_apply(double alpha, double beta, double x, double *out);

/**
 * Orbit-averaged Lyapunov exponent of the scalar map.
 *
 * # Safety
 * `out` must be valid.
 */
enum PdStatus pd_lyapunov_exponent(double alpha,
                                   double beta,
                                   double x0,
                                   uintptr_t burn_in,
                                   uintptr_t iters,
                                   double *out);

/**
 * Attempts the period-3 certificate at (`alpha`, `beta`). A failed bracket
 * is reported through `certified = 0` with status `Ok`; the violated
 * inequality is available from `pd_last_error_message`.
 *
 * # Safety
 * `out` must be valid.
 */
enum PdStatus pd_period3_certificate(double alpha, double beta, struct PdPeriod3 *out);

/**
 * Smallest certified collective influence in `[l_min, l_max]`.
 * `out_permuted` reports whether the feature coordinates were swapped.
 *
 * # Safety
 * All pointers must be valid.
 */
enum PdStatus pd_carrying_capacity(const struct PdMarket *market,
                                   double eta,
                                   double l_min,
                                   double l_max,
                                   double tol,
                                   double *out_influence,
                                   int32_t *out_permuted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERFDYN_H */
