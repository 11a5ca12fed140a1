#ifndef SDOM_H
#define SDOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum SdomStatus {
  SDOM_STATUS_OK = 0,
  SDOM_STATUS_NULL_POINTER = 1,
  SDOM_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed or mistyped JSON.
   */
  SDOM_STATUS_PARSE = 3,
  SDOM_STATUS_INVALID_ARGUMENT = 4,
  SDOM_STATUS_PRECONDITION = 5,
  SDOM_STATUS_NOT_DINI = 6,
  SDOM_STATUS_NON_FINITE_KERNEL = 7,
  SDOM_STATUS_INVARIANT = 8,
  /**
   * Config rejected or experiment could not run.
   */
  SDOM_STATUS_USAGE = 9,
  SDOM_STATUS_PANIC = 10,
} SdomStatus;

/**
 * Cube family for maximal operators and the builder.
 */
typedef enum SdomMode {
  SDOM_MODE_DYADIC = 0,
  SDOM_MODE_ALL_GRID_CUBES = 1,
  SDOM_MODE_DYADIC_SHIFTED = 2,
} SdomMode;

typedef struct SdomFamily SdomFamily;

typedef struct SdomFunction SdomFunction;

typedef struct SdomGrid SdomGrid;

typedef struct SdomKernel SdomKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *sdom_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdom_version(void);

/**
 * Releases a string returned by the library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sdom_string_free(char *s);

/**
 * Parses a grid, e.g. `{"n":1,"L":8,"origin":[0.0],"side":1.0}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SdomStatus sdom_grid_from_json(const char *json, struct SdomGrid **out);

/**
 * # Safety
 * `grid` must be null or a live handle.
 */
void sdom_grid_free(struct SdomGrid *grid);

/**
 * Number of cells, or 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
size_t sdom_grid_num_cells(const struct SdomGrid *grid);

/**
 * Function with `len` row-major cell values on `grid`.
 *
 * # Safety
 * `values` must point to `len` doubles; `grid` must be a live handle.
 */
enum SdomStatus sdom_function_new(const struct SdomGrid *grid,
                                  const double *values,
                                  size_t len,
                                  struct SdomFunction **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SdomStatus sdom_function_from_json(const char *json, struct SdomFunction **out);

/**
 * Copies up to `len` cell values into `buf` and stores the cell count in `count`.
 *
 * # Safety
 * `f` must be a live handle; `buf` must hold `len` doubles; `count` writable.
 */
enum SdomStatus sdom_function_values(const struct SdomFunction *f,
                                     double *buf,
                                     size_t len,
                                     size_t *count);

/**
 * # Safety
 * `f` must be null or a live handle.
 */
void sdom_function_free(struct SdomFunction *f);

/**
 * Parses a kernel, e.g. `{"variant":"MPTExample","m":1,"beta":1.0,"r":2.0}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SdomStatus sdom_kernel_from_json(const char *json, struct SdomKernel **out);

/**
 * Linearity `m` of the kernel, or 0 for a null handle.
 *
 * # Safety
 * `kernel` must be null or a live handle.
 */
size_t sdom_kernel_m(const struct SdomKernel *kernel);

/**
 * # Safety
 * `kernel` must be null or a live handle.
 */
void sdom_kernel_free(struct SdomKernel *kernel);

/**
 * Sampled `K_r` estimate over the sample plan in `plan_json`.
 *
 * # Safety
 * Handles must be live; `plan_json` NUL-terminated; `out` writable.
 */
enum SdomStatus sdom_hormander_constant(const struct SdomKernel *kernel,
                                        const struct SdomGrid *grid,
                                        double r,
                                        const char *plan_json,
                                        double *out);

/**
 * Sampled H2 constant with exponent `delta`.
 *
 * # Safety
 * Handles must be live; `plan_json` NUL-terminated; `out` writable.
 */
enum SdomStatus sdom_h2_constant(const struct SdomKernel *kernel,
                                 const struct SdomGrid *grid,
                                 double r,
                                 double delta,
                                 const char *plan_json,
                                 double *out);

/**
 * Dini norm of a modulus, e.g. `{"kind":"power","c":1.0,"eps":0.5}`.
 *
 * # Safety
 * `modulus_json` NUL-terminated; `out` writable.
 */
enum SdomStatus sdom_dini_norm(const char *modulus_json, double *out);

/**
 * Builds the sparse family for `m` inputs supported in the root cube
 * (`{"level":2,"index":[1]}`).
 *
 * # Safety
 * Handles must be live; `fs` must hold `m` function handles; `out` writable.
 */
enum SdomStatus sdom_build_family(const struct SdomKernel *kernel,
                                  const struct SdomGrid *grid,
                                  const struct SdomFunction *const *fs,
                                  size_t m,
                                  const char *root_json,
                                  double r,
                                  int mode,
                                  struct SdomFamily **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum SdomStatus sdom_family_from_json(const char *json, struct SdomFamily **out);

/**
 * Number of cubes in the family, or 0 for a null handle.
 *
 * # Safety
 * `family` must be null or a live handle.
 */
size_t sdom_family_len(const struct SdomFamily *family);

/**
 * Serializes the family; free the result with [`sdom_string_free`].
 *
 * # Safety
 * `family` must be a live handle; `out` writable.
 */
enum SdomStatus sdom_family_to_json(const struct SdomFamily *family, char **out);

/**
 * # Safety
 * `family` must be null or a live handle.
 */
void sdom_family_free(struct SdomFamily *family);

/**
 * Empirical domination constant of `T` by the sparse form of `family`.
 * `support_flag` is set to 1 where the sparse form vanishes but `T` does not.
 *
 * # Safety
 * Handles must be live; `fs` must hold `m` function handles; outputs writable.
 */
enum SdomStatus sdom_domination_constant(const struct SdomKernel *kernel,
                                         const struct SdomGrid *grid,
                                         const struct SdomFunction *const *fs,
                                         size_t m,
                                         const struct SdomFamily *family,
                                         double r,
                                         double *c_emp,
                                         int *support_flag);

/**
 * Runs a CLI-style experiment config, writing reports into `out_dir`.
 * `exit_code` receives the CLI exit status (0, 1 or 2) whenever the config
 * was readable.
 *
 * # Safety
 * Strings NUL-terminated; `exit_code` writable.
 */
enum SdomStatus sdom_run_experiment(const char *config_json, const char *out_dir, int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDOM_H */
