#ifndef ALIGNLAB_H
#define ALIGNLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum AlStatus {
  AlOk = 0,
  AlNullPointer = 1,
  AlInvalidInput = 2,
  AlNumericalFailure = 3,
} AlStatus;

/**
 * Parsed run configuration (opaque).
 */
typedef struct AlConfig AlConfig;

/**
 * Snapshot trajectory of either system (opaque).
 */
typedef struct AlTrajectory AlTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread; the pointer stays valid
 * until the next failing call on the same thread.
 */
const char *al_last_error_message(void);

/**
 * Parses a NUL-terminated config in the flat `section.key = value` format.
 * Returns NULL on failure (see `al_last_error_message`).
 */
struct AlConfig *al_config_parse(const char *text);

void al_config_free(struct AlConfig *config);

/**
 * Runs the stiff ε-particle system from well-prepared initial data.
 */
struct AlTrajectory *al_simulate_run(const struct AlConfig *config);

/**
 * Runs the overdamped limit system from the same well-prepared positions.
 */
struct AlTrajectory *al_limit_run(const struct AlConfig *config);

void al_trajectory_free(struct AlTrajectory *traj);

uintptr_t al_trajectory_snapshot_count(const struct AlTrajectory *traj);

uintptr_t al_trajectory_dim(const struct AlTrajectory *traj);

uintptr_t al_trajectory_particle_count(const struct AlTrajectory *traj);

/**
 * Borrows snapshot `index`: time plus row-major position/velocity arrays of
 * length `n·dim`, valid while the trajectory handle lives.
 */
enum AlStatus al_trajectory_snapshot(const struct AlTrajectory *traj,
                                     uintptr_t index,
                                     double *time_out,
                                     const double **positions_out,
                                     const double **velocities_out);

/**
 * Max per-step energy-balance residual (NaN for limit trajectories, which
 * carry no ledger).
 */
enum AlStatus al_trajectory_max_energy_residual(const struct AlTrajectory *traj, double *out);

/**
 * p-Wasserstein distance between two 1-D uniform point clouds (quantile
 * formula; the clouds may have different sizes).
 */
enum AlStatus al_wasserstein_1d(const double *a,
                                uintptr_t a_count,
                                const double *b,
                                uintptr_t b_count,
                                double p,
                                double *out);

/**
 * p-Wasserstein distance via exact assignment between two equally sized
 * point clouds in R^dim (row-major coordinates).
 */
enum AlStatus al_wasserstein_assignment(const double *a,
                                        const double *b,
                                        uintptr_t count,
                                        uintptr_t dim,
                                        double p,
                                        double *out);

/**
 * Squared Cramér distance ∫(F_a − F_b)² dx between two 1-D uniform point
 * clouds (the modulated Coulomb energy up to a factor of 2).
 */
enum AlStatus al_cramer_energy_1d(const double *a,
                                  uintptr_t a_count,
                                  const double *b,
                                  uintptr_t b_count,
                                  double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ALIGNLAB_H */
