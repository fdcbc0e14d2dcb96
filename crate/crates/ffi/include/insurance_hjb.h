/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef INSURANCE_HJB_H
#define INSURANCE_HJB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IhjbJumpRule {
  IHJB_JUMP_RULE_LINEAR = 0,
  IHJB_JUMP_RULE_NEAREST = 1,
} IhjbJumpRule;

typedef enum IhjbStatus {
  IHJB_STATUS_OK = 0,
  IHJB_STATUS_VALIDATION = 1,
  IHJB_STATUS_NON_CONVERGENCE = 2,
  IHJB_STATUS_RECONSTRUCTION = 3,
  IHJB_STATUS_NULL_POINTER = 4,
  IHJB_STATUS_INDEX = 5,
  IHJB_STATUS_IO = 6,
  IHJB_STATUS_PANIC = 7,
} IhjbStatus;

typedef enum IhjbRegion {
  IHJB_REGION_NO_JUMP = 0,
  IHJB_REGION_JUMP = 1,
} IhjbRegion;

// Opaque reconstructed path.
typedef struct IhjbPath IhjbPath;

// Opaque solved surface.
typedef struct IhjbSolution IhjbSolution;

typedef struct IhjbModelParams {
  double eta;
  double alpha;
  double beta;
  double r;
  double delta;
  double intensity;
  double horizon;
} IhjbModelParams;

typedef struct IhjbSolverSpec {
  double tol;
  size_t max_iter;
  double control_min;
  double control_max;
  size_t control_count;
  enum IhjbJumpRule jump_rule;
} IhjbSolverSpec;

typedef struct IhjbGridSpec {
  size_t time_steps;
  size_t state_steps;
} IhjbGridSpec;

typedef struct IhjbPathStep {
  double t;
  double theta;
  double wealth;
  double z;
  double d;
  double y;
  double rho;
  uint32_t claims;
} IhjbPathStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *ihjb_last_error(void);

// Parameters of the reference experiment.
struct IhjbModelParams ihjb_reference_model(void);

// Default solver settings: tolerance 1e-9, 200 iterations, 101 controls on
// [1e-3, 1e3], linear jump interpolation.
struct IhjbSolverSpec ihjb_default_solver(void);

// Solves the backward problem on a uniform grid.
//
// # Safety
// `model`, `grid` and `solver` must point to valid structs; `out` must be
// writable. On success `*out` owns a handle to release with
// [`ihjb_solution_free`].
enum IhjbStatus ihjb_solve(const struct IhjbModelParams *model,
                           const struct IhjbGridSpec *grid,
                           const struct IhjbSolverSpec *solver,
                           struct IhjbSolution **out_solution);

// # Safety
// `solution` must be null or a handle from [`ihjb_solve`] not yet freed.
void ihjb_solution_free(struct IhjbSolution *solution);

// Number of time layers (`N + 1`) and state nodes.
//
// # Safety
// `solution` must be a live handle; the out pointers must be writable.
enum IhjbStatus ihjb_solution_dims(const struct IhjbSolution *solution,
                                   size_t *out_layers,
                                   size_t *out_nodes);

// Time `t_i`.
//
// # Safety
// `solution` must be a live handle; `out_value` must be writable.
enum IhjbStatus ihjb_solution_time(const struct IhjbSolution *solution,
                                   size_t i,
                                   double *out_value);

// Compact state `ỹ_j`.
//
// # Safety
// `solution` must be a live handle; `out_value` must be writable.
enum IhjbStatus ihjb_solution_state(const struct IhjbSolution *solution,
                                    size_t j,
                                    double *out_value);

// Discounted dual value `v̄(t_i, ỹ_j)`.
//
// # Safety
// `solution` must be a live handle; `out_value` must be writable.
enum IhjbStatus ihjb_solution_value(const struct IhjbSolution *solution,
                                    size_t i,
                                    size_t j,
                                    double *out_value);

// Optimal control at `(t_i, ỹ_j)`, `i < N`.
//
// # Safety
// `solution` must be a live handle; `out_value` must be writable.
enum IhjbStatus ihjb_solution_control(const struct IhjbSolution *solution,
                                      size_t i,
                                      size_t j,
                                      double *out_value);

// Region of `(t_i, ỹ_j)`, `i < N`.
//
// # Safety
// `solution` must be a live handle; `out_region` must be writable.
enum IhjbStatus ihjb_solution_region(const struct IhjbSolution *solution,
                                     size_t i,
                                     size_t j,
                                     enum IhjbRegion *out_region);

// Copies layer `i` of the value surface into `buf`, which must hold
// exactly as many entries as there are state nodes.
//
// # Safety
// `solution` must be a live handle; `buf` must be valid for `len` writes.
enum IhjbStatus ihjb_solution_copy_layer(const struct IhjbSolution *solution,
                                         size_t i,
                                         double *buf,
                                         size_t len);

// Reconstructs the optimal strategy and wealth from initial wealth `x`
// along claims at `claim_times` (strictly increasing, in `(0, T]`), each of
// the model's claim size.
//
// # Safety
// `solution` must be a live handle; `claim_times` must be valid for
// `n_claims` reads (it may be null when `n_claims` is 0); `out_path` must be
// writable. Release the path with [`ihjb_path_free`].
enum IhjbStatus ihjb_reconstruct(const struct IhjbSolution *solution,
                                 const double *claim_times,
                                 size_t n_claims,
                                 double x,
                                 struct IhjbPath **out_path);

// # Safety
// `path` must be null or a handle from [`ihjb_reconstruct`] not yet freed.
void ihjb_path_free(struct IhjbPath *path);

// # Safety
// `path` must be a live handle; `out_len` must be writable.
enum IhjbStatus ihjb_path_len(const struct IhjbPath *path, size_t *out_len);

// # Safety
// `path` must be a live handle; `out_step` must be writable.
enum IhjbStatus ihjb_path_step(const struct IhjbPath *path,
                               size_t k,
                               struct IhjbPathStep *out_step);

// Largest one-step mismatch of the path against the wealth equation.
//
// # Safety
// `path` must be a live handle; `out_value` must be writable.
enum IhjbStatus ihjb_path_sde_residual(const struct IhjbPath *path, double *out_value);

// Runs the full command-line pipeline from a TOML file. `out_dir` may be
// null to keep the configured directory.
//
// # Safety
// `config_path` must be a NUL-terminated UTF-8 string; `out_dir` must be
// null or a NUL-terminated UTF-8 string.
enum IhjbStatus ihjb_run_config(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INSURANCE_HJB_H */
