#ifndef BRENIER_H
#define BRENIER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BrenierStatus {
  BRENIER_STATUS_OK = 0,
  BRENIER_STATUS_NULL_POINTER = 1,
  BRENIER_STATUS_INVALID_ARGUMENT = 2,
  BRENIER_STATUS_INVALID_TARGET = 3,
  BRENIER_STATUS_INVALID_DOMAIN = 4,
  // The solver stopped early; the partial solution is still returned.
  BRENIER_STATUS_NOT_CONVERGED = 5,
  BRENIER_STATUS_UNSUPPORTED = 6,
  BRENIER_STATUS_PANIC = 7,
} BrenierStatus;

typedef struct BrenierDomain BrenierDomain;

typedef struct BrenierSolution BrenierSolution;

typedef struct BrenierTarget BrenierTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *brenier_last_error(void);

// Axis-aligned box `∏ [lo_k, hi_k]` of dimension `dim`.
//
// # Safety
// `lo` and `hi` must point to `dim` readable doubles; `out` must be writable.
enum BrenierStatus brenier_domain_box(size_t dim,
                                      const double *lo,
                                      const double *hi,
                                      uint64_t seed,
                                      struct BrenierDomain **out);

// Planar disk.
//
// # Safety
// `out` must be writable.
enum BrenierStatus brenier_domain_disk(double cx,
                                       double cy,
                                       double radius,
                                       uint64_t seed,
                                       struct BrenierDomain **out);

// # Safety
// `domain` must come from a domain constructor and not be freed twice.
void brenier_domain_free(struct BrenierDomain *domain);

// Target of `n` points in dimension `dim` (row-major). A null `weights`
// means uniform weights; otherwise they must sum to 1 within
// `mass_tolerance` and are rescaled exactly.
//
// # Safety
// `points` must hold `n * dim` doubles, `weights` null or `n` doubles.
enum BrenierStatus brenier_target_new(size_t dim,
                                      size_t n,
                                      const double *points,
                                      const double *weights,
                                      double mass_tolerance,
                                      struct BrenierTarget **out);

// Number of target points, 0 for null.
//
// # Safety
// `target` must be null or a live handle.
size_t brenier_target_len(const struct BrenierTarget *target);

// # Safety
// `target` must come from [`brenier_target_new`] and not be freed twice.
void brenier_target_free(struct BrenierTarget *target);

// Solves for the heights. `mode` 0 is the exact planar Newton solver, 1 the
// Monte Carlo solver with `samples` frozen samples. Non-positive
// `tolerance` or zero `max_iterations`/`samples` select the defaults. On
// `NotConverged` the partial solution is still written to `out`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum BrenierStatus brenier_solve(const struct BrenierDomain *domain,
                                 const struct BrenierTarget *target,
                                 uint32_t mode,
                                 double tolerance,
                                 size_t max_iterations,
                                 size_t samples,
                                 struct BrenierSolution **out);

// Number of cells, 0 for null.
//
// # Safety
// `solution` must be null or a live handle.
size_t brenier_solution_len(const struct BrenierSolution *solution);

// Newton or gradient iterations taken.
//
// # Safety
// `solution` must be null or a live handle.
size_t brenier_solution_iterations(const struct BrenierSolution *solution);

// Final `max_i |w_i − ν_i|`, NaN for null.
//
// # Safety
// `solution` must be null or a live handle.
double brenier_solution_residual(const struct BrenierSolution *solution);

// Copies the gauge-normalized heights (minimum 0) into `out`.
//
// # Safety
// `out` must have room for `len` doubles.
enum BrenierStatus brenier_solution_heights(const struct BrenierSolution *solution,
                                            double *out,
                                            size_t len);

// Copies the final cell measures into `out`.
//
// # Safety
// `out` must have room for `len` doubles.
enum BrenierStatus brenier_solution_measures(const struct BrenierSolution *solution,
                                             double *out,
                                             size_t len);

// Cell index of each of `count` row-major points.
//
// # Safety
// `points` must hold `count * dim` doubles and `cells` room for `count`
// entries.
enum BrenierStatus brenier_solution_assign(const struct BrenierSolution *solution,
                                           const double *points,
                                           size_t count,
                                           size_t *cells);

// # Safety
// `solution` must come from [`brenier_solve`] and not be freed twice.
void brenier_solution_free(struct BrenierSolution *solution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRENIER_H */
