#ifndef AGGSYNC_H
#define AGGSYNC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AggStatus {
  AGG_STATUS_OK = 0,
  AGG_STATUS_DOMAIN = 1,
  AGG_STATUS_NON_FINITE = 2,
  AGG_STATUS_CFL = 3,
  AGG_STATUS_KERNEL_HYPOTHESIS = 4,
  AGG_STATUS_HYPOTHESIS = 5,
  AGG_STATUS_BOUNDARY_LEAK = 6,
  AGG_STATUS_CONFIG = 7,
  AGG_STATUS_VALIDATION = 8,
  AGG_STATUS_IO = 9,
  AGG_STATUS_FORMAT = 10,
  AGG_STATUS_NULL_POINTER = 11,
  AGG_STATUS_PANIC = 12,
} AggStatus;

typedef enum AggEventKind {
  AGG_EVENT_KIND_MERGE_SAME_SPECIES = 0,
  AGG_EVENT_KIND_GLUE = 1,
  AGG_EVENT_KIND_CROSS = 2,
  AGG_EVENT_KIND_UNGLUE = 3,
  AGG_EVENT_KIND_FINAL_COLLAPSE = 4,
} AggEventKind;

/**
 * Finite-volume solver state.
 */
typedef struct AggFv AggFv;

/**
 * Sticky-particle solver state and the events logged so far.
 */
typedef struct AggParticles AggParticles;

typedef struct AggParams {
  double chi1;
  double chi2;
  double theta1;
  double theta2;
  double psi1;
  double psi2;
} AggParams;

typedef struct AggSyncResult {
  bool holds;
  double lhs;
  double rhs;
  /**
   * Selection `w` of the glued velocity.
   */
  double w;
} AggSyncResult;

/**
 * Particle event; `gamma`, `lhs`, `rhs` are NaN for same-species events.
 */
typedef struct AggEvent {
  double time;
  enum AggEventKind kind;
  double position;
  double m1;
  double m2;
  double gamma;
  double lhs;
  double rhs;
} AggEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *agg_last_error_message(void);

/**
 * Parameters with unit weights and tumbling rates.
 */
struct AggParams agg_params_default(double chi1, double chi2);

/**
 * Synchronising condition for a colliding pair of masses `m1`, `m2` under
 * external attraction `gamma`.
 *
 * # Safety
 * `p` and `out` must be valid pointers.
 */
enum AggStatus agg_sync_condition(const struct AggParams *p,
                                  double gamma,
                                  double m1,
                                  double m2,
                                  struct AggSyncResult *out);

/**
 * Quadratic Wasserstein distance between two discrete measures after
 * normalization. Positions must be strictly increasing.
 *
 * # Safety
 * Each array must be valid for its length; `out` must be valid.
 */
enum AggStatus agg_wasserstein2(const double *pos_a,
                                const double *mass_a,
                                size_t len_a,
                                const double *pos_b,
                                const double *mass_b,
                                size_t len_b,
                                double *out);

/**
 * Creates a finite-volume state from cell masses on `[xmin, xmax]` with
 * spacing `dx`; `cells` must equal `round((xmax - xmin)/dx)`.
 *
 * # Safety
 * `rho1`, `rho2` must be valid for `cells` reads; `p`, `out` must be valid.
 */
enum AggStatus agg_fv_new(const struct AggParams *p,
                          double xmin,
                          double xmax,
                          double dx,
                          const double *rho1,
                          const double *rho2,
                          size_t cells,
                          struct AggFv **out);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
size_t agg_fv_cells(const struct AggFv *h);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
double agg_fv_time(const struct AggFv *h);

/**
 * Largest stable step for the current state with the given safety factor.
 *
 * # Safety
 * `h`, `out` must be valid.
 */
enum AggStatus agg_fv_cfl_dt(const struct AggFv *h, double safety, double *out);

/**
 * One upwind step of length `dt`; refused with `Cfl` when unstable.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum AggStatus agg_fv_step(struct AggFv *h, double dt);

/**
 * Advances to `t_final` with CFL steps, landing exactly on `t_final`.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum AggStatus agg_fv_advance(struct AggFv *h, double t_final, double safety);

/**
 * Copies the cell masses of `species` (1 or 2) into `out`, which holds `len`
 * values; `len` must equal the cell count.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for `len` writes.
 */
enum AggStatus agg_fv_copy_density(const struct AggFv *h,
                                   uint32_t species,
                                   double *out,
                                   size_t len);

/**
 * # Safety
 * `h` must be null or a handle from [`agg_fv_new`] not yet freed.
 */
void agg_fv_free(struct AggFv *h);

/**
 * Creates a particle state from `len` clusters with per-species masses.
 *
 * # Safety
 * The arrays must be valid for `len` reads; `p`, `out` must be valid.
 */
enum AggStatus agg_particles_new(const struct AggParams *p,
                                 const double *positions,
                                 const double *m1,
                                 const double *m2,
                                 size_t len,
                                 struct AggParticles **out);

/**
 * Runs to `t_final` (or until one cluster remains), appending events.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum AggStatus agg_particles_run(struct AggParticles *h,
                                 double t_final,
                                 double dt_max,
                                 double gap_tol);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
size_t agg_particles_len(const struct AggParticles *h);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
double agg_particles_time(const struct AggParticles *h);

/**
 * Copies cluster positions and masses; `len` must equal the cluster count.
 *
 * # Safety
 * `h` must be a live handle and each array valid for `len` writes.
 */
enum AggStatus agg_particles_copy(const struct AggParticles *h,
                                  double *positions,
                                  double *m1,
                                  double *m2,
                                  size_t len);

/**
 * # Safety
 * `h` must be null or a live handle.
 */
size_t agg_particles_event_count(const struct AggParticles *h);

/**
 * Copies up to `len` events into `out`; `written` receives the count.
 *
 * # Safety
 * `h` must be a live handle, `out` valid for `len` writes, `written` valid.
 */
enum AggStatus agg_particles_copy_events(const struct AggParticles *h,
                                         struct AggEvent *out,
                                         size_t len,
                                         size_t *written);

/**
 * # Safety
 * `h` must be null or a handle from [`agg_particles_new`] not yet freed.
 */
void agg_particles_free(struct AggParticles *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGGSYNC_H */
