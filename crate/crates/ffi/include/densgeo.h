#ifndef DENSGEO_H
#define DENSGEO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which quantity `dg_distance` computes.
 */
typedef enum DgDistance {
  /**
   * `√μ(M) · arccos BC`.
   */
  DG_DISTANCE_SPHERICAL = 0,
  /**
   * `‖√a − √b‖`.
   */
  DG_DISTANCE_HELLINGER = 1,
  /**
   * The affinity `BC` itself.
   */
  DG_DISTANCE_BHATTACHARYYA = 2,
  /**
   * Twice the spherical distance.
   */
  DG_DISTANCE_FISHER_RAO = 3,
} DgDistance;

/**
 * Result code of every fallible call.
 */
typedef enum DgStatus {
  DG_STATUS_OK = 0,
  DG_STATUS_NULL_POINTER = 1,
  /**
   * Output buffer length differs from the grid size.
   */
  DG_STATUS_BAD_LENGTH = 2,
  DG_STATUS_INVALID_GRID = 3,
  DG_STATUS_INVALID_ARGUMENT = 4,
  DG_STATUS_GRID_MISMATCH = 5,
  DG_STATUS_NON_ZERO_MEAN = 6,
  DG_STATUS_NEGATIVE_DENSITY = 7,
  DG_STATUS_MASS_MISMATCH = 8,
  DG_STATUS_PARSE = 9,
  /**
   * Requested time at or past the blowup time.
   */
  DG_STATUS_BEYOND_BLOWUP = 10,
  DG_STATUS_STEP_TOO_LARGE = 11,
  /**
   * Any other numerical failure.
   */
  DG_STATUS_NUMERICAL = 12,
  DG_STATUS_PANIC = 13,
} DgStatus;

/**
 * Density handle.
 */
typedef struct DgDensity DgDensity;

/**
 * Periodic grid handle.
 */
typedef struct DgGrid DgGrid;

/**
 * Closed-form Hunter-Saxton geodesic handle.
 */
typedef struct DgHsGeodesic DgHsGeodesic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *dg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dg_version(void);

/**
 * Circle of `n` nodes and length `length`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DgStatus dg_grid_new_1d(size_t n, double length, struct DgGrid **out);

/**
 * Torus of `nx × ny` nodes; node values are row-major, index `ix * ny + iy`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DgStatus dg_grid_new_2d(size_t nx, size_t ny, double lx, double ly, struct DgGrid **out);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle from `dg_grid_new_*`.
 */
size_t dg_grid_len(const struct DgGrid *grid);

/**
 * # Safety
 * `grid` must be null or a live handle; it is invalid afterwards.
 */
void dg_grid_free(struct DgGrid *grid);

/**
 * Sample an expression in `x` (and `y` on the torus) at the grid nodes.
 *
 * # Safety
 * `grid` must be a live handle, `expr` a NUL-terminated string and `out`
 * point to `len` writable doubles.
 */
enum DgStatus dg_expr_sample(const struct DgGrid *grid, const char *expr, double *out, size_t len);

/**
 * Density from node values, which must already integrate to `mass`.
 *
 * # Safety
 * `grid` must be a live handle, `values` point to `len` doubles and `out`
 * to storage for one handle.
 */
enum DgStatus dg_density_new(const struct DgGrid *grid,
                             const double *values,
                             size_t len,
                             double mass,
                             struct DgDensity **out);

/**
 * # Safety
 * `d` must be null or a live handle; it is invalid afterwards.
 */
void dg_density_free(struct DgDensity *d);

/**
 * Total mass of a density, NaN for a null handle.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
double dg_density_mass(const struct DgDensity *d);

/**
 * # Safety
 * `a`, `b` must be live handles and `out` a writable double.
 */
enum DgStatus dg_distance(const struct DgDensity *a,
                          const struct DgDensity *b,
                          enum DgDistance kind,
                          double *out);

/**
 * Density at parameter `t ∈ [0, 1]` on the geodesic from `a` to `b`.
 *
 * # Safety
 * `a`, `b` must be live handles and `out` point to `len` writable doubles.
 */
enum DgStatus dg_geodesic_density(const struct DgDensity *a,
                                  const struct DgDensity *b,
                                  double t,
                                  double *out,
                                  size_t len);

/**
 * Geodesic with initial velocity divergence `div_u0` (mean zero).
 *
 * # Safety
 * `grid` must be a live handle, `div_u0` point to `len` doubles and `out`
 * to storage for one handle.
 */
enum DgStatus dg_hs_new(const struct DgGrid *grid,
                        const double *div_u0,
                        size_t len,
                        struct DgHsGeodesic **out);

/**
 * # Safety
 * `h` must be null or a live handle; it is invalid afterwards.
 */
void dg_hs_free(struct DgHsGeodesic *h);

/**
 * Angular frequency κ, NaN for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
double dg_hs_kappa(const struct DgHsGeodesic *h);

/**
 * Blowup time (may be +inf), NaN for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
double dg_hs_t_max(const struct DgHsGeodesic *h);

/**
 * `ρ(t, η(t, x))` at the grid nodes.
 *
 * # Safety
 * `h` must be a live handle and `out` point to `len` writable doubles.
 */
enum DgStatus dg_hs_rho(const struct DgHsGeodesic *h, double t, double *out, size_t len);

/**
 * Jacobian of the flow at the grid nodes.
 *
 * # Safety
 * `h` must be a live handle and `out` point to `len` writable doubles.
 */
enum DgStatus dg_hs_jacobian(const struct DgHsGeodesic *h, double t, double *out, size_t len);

/**
 * One RK4 step of the α-geodesic equation on the circle, in place.
 *
 * # Safety
 * `grid` must be a live 1D handle and `u` point to `len` doubles.
 */
enum DgStatus dg_alpha_step(const struct DgGrid *grid,
                            double alpha,
                            double *u,
                            size_t len,
                            double dt);

/**
 * Probabilities `(P(a), P(b), P(c))` at time `t` on the simplex demo geodesic.
 *
 * # Safety
 * `out` must point to 3 writable doubles.
 */
enum DgStatus dg_simplex_probs(double t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DENSGEO_H */
