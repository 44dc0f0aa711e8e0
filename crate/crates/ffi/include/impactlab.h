#ifndef IMPACTLAB_H
#define IMPACTLAB_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum ImpactlabStatus {
  IMPACTLAB_STATUS_OK = 0,
  IMPACTLAB_STATUS_NULL_POINTER = 1,
  IMPACTLAB_STATUS_INVALID_ARGUMENT = 2,
  // Stability bound or degenerate numerics.
  IMPACTLAB_STATUS_NUMERIC = 3,
  IMPACTLAB_STATUS_UNSUPPORTED = 4,
  IMPACTLAB_STATUS_BUFFER_TOO_SMALL = 5,
  IMPACTLAB_STATUS_INTERNAL = 6,
} ImpactlabStatus;

// Opaque density on the tick grid x_i = i/n, i = 0..=n.
typedef struct ImpactlabDensity ImpactlabDensity;

// Opaque model parameters.
typedef struct ImpactlabModel ImpactlabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *impactlab_version(void);

// Message of the last failed call on this thread, or an empty string.
//
// The pointer stays valid until the next failing call on the same thread.
const char *impactlab_last_error(void);

// Creates the reference market: uniform F on [−1.2, 1.2], α = 10, γ = 1,
// θ = 0.2, σ ≡ 1.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum ImpactlabStatus impactlab_model_reference(struct ImpactlabModel **out);

// Creates a model with uniform F on [−a, a] and volatility scale `rho`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum ImpactlabStatus impactlab_model_uniform(double a,
                                             double alpha,
                                             double gamma,
                                             double theta,
                                             double rho,
                                             struct ImpactlabModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle from this library not yet freed.
void impactlab_model_free(struct ImpactlabModel *model);

// Diffusion coefficients at participation `theta` and tick position `y`:
// the market drift, the meta-order drift and the squared volatility.
//
// # Safety
// `model` must be a live handle; each output must point to one writable double.
enum ImpactlabStatus impactlab_model_coefficients(const struct ImpactlabModel *model,
                                                  double theta,
                                                  double y,
                                                  double *mu0,
                                                  double *mu1,
                                                  double *sigma2);

// Stationary density of the price position without the meta-order, on n cells.
//
// # Safety
// `model` must be a live handle and `out` valid storage for one handle.
enum ImpactlabStatus impactlab_psi(const struct ImpactlabModel *model,
                                   size_t n,
                                   struct ImpactlabDensity **out);

// Stationary density of the price position during a meta-order at
// participation `theta`, on n cells.
//
// # Safety
// `model` must be a live handle and `out` valid storage for one handle.
enum ImpactlabStatus impactlab_chi(const struct ImpactlabModel *model,
                                   double theta,
                                   size_t n,
                                   struct ImpactlabDensity **out);

// Unweighted stationary density f(theta, ·) on n cells.
//
// # Safety
// `model` must be a live handle and `out` valid storage for one handle.
enum ImpactlabStatus impactlab_stationary_f(const struct ImpactlabModel *model,
                                            double theta,
                                            size_t n,
                                            struct ImpactlabDensity **out);

// Releases a density. Null is ignored.
//
// # Safety
// `density` must be null or a handle from this library not yet freed.
void impactlab_density_free(struct ImpactlabDensity *density);

// Number of nodes (n + 1), or 0 for a null handle.
//
// # Safety
// `density` must be null or a live handle.
size_t impactlab_density_len(const struct ImpactlabDensity *density);

// Copies the nodal values into `buf`, which must hold at least
// [`impactlab_density_len`] doubles.
//
// # Safety
// `density` must be a live handle and `buf` valid for `len` writes.
enum ImpactlabStatus impactlab_density_values(const struct ImpactlabDensity *density,
                                              double *buf,
                                              size_t len);

// Boundary value of the density at the integer price.
//
// # Safety
// `density` must be a live handle and `out` point to one writable double.
enum ImpactlabStatus impactlab_density_wing(const struct ImpactlabDensity *density, double *out);

// Expected impact at each executed volume in `q` (increasing, starting at or
// above 0), computed on n cells with the largest stable step.
//
// # Safety
// `model` must be a live handle; `q` and `out` must each be valid for `len` doubles.
enum ImpactlabStatus impactlab_impact_curve(const struct ImpactlabModel *model,
                                            double theta,
                                            const double *q,
                                            size_t len,
                                            size_t n,
                                            double *out);

// Price resilience at each post-trade volume in `v` after a meta-order at
// participation `theta`.
//
// # Safety
// `model` must be a live handle; `v` and `out` must each be valid for `len` doubles.
enum ImpactlabStatus impactlab_resilience_curve(const struct ImpactlabModel *model,
                                                double theta,
                                                const double *v,
                                                size_t len,
                                                size_t n,
                                                double *out);

// Splits a trade's volume across `k` imbalance bins by the time its
// depletion path spends in each. `is_buy` nonzero for a buy.
//
// # Safety
// `out` must be valid for `k` doubles.
enum ImpactlabStatus impactlab_continuous_bin_masses(int32_t is_buy,
                                                     double vb,
                                                     double va,
                                                     double size,
                                                     size_t k,
                                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPACTLAB_H */
