#ifndef SHEETSPDE_H
#define SHEETSPDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Status codes. Values 2 to 4 match the exit codes of the command-line tool.
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  // Null pointer, invalid UTF-8 or index out of range.
  SS_STATUS_INVALID_ARGUMENT = 1,
  SS_STATUS_CONFIG = 2,
  // A numerical precondition failed, e.g. no function-valued solution exists.
  SS_STATUS_CRITERION = 3,
  SS_STATUS_IO = 4,
  SS_STATUS_PANIC = 5,
} SsStatus;

// A scalar lattice field, stored row-major with time as the slow index.
typedef struct SsField SsField;

// Lattice description.
typedef struct SsGrid SsGrid;

// One Brownian sheet sample on the extended lattice.
typedef struct SsSheet SsSheet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next
// failing call on the same thread.
const char *ss_last_error(void);

// Library version as a static NUL-terminated string.
const char *ss_version(void);

// # Safety
// `out` must be valid for writes.
enum SsStatus ss_grid_new(double t_max, double x_max, double h, struct SsGrid **out);

// Number of time and space steps (nodes minus one).
//
// # Safety
// `grid` must come from `ss_grid_new`; `n_t` and `n_x` must be valid for writes.
enum SsStatus ss_grid_steps(const struct SsGrid *grid, size_t *n_t, size_t *n_x);

// # Safety
// `grid` must come from `ss_grid_new` or be null; it must not be used afterwards.
void ss_grid_free(struct SsGrid *grid);

// Samples the sheet for `grid` with `seed`.
//
// # Safety
// `grid` must be a live handle; `out` must be valid for writes.
enum SsStatus ss_sheet_sample(const struct SsGrid *grid, uint64_t seed, struct SsSheet **out);

// Sheet value at time node `i`, space node `j` of the extended lattice.
//
// # Safety
// `sheet` must be a live handle; `out` must be valid for writes.
enum SsStatus ss_sheet_value(const struct SsSheet *sheet, size_t i, size_t j, double *out);

// Sheet measure of the lattice-aligned rectangle `[t_lo, t_hi] x [x_lo, x_hi]`.
//
// # Safety
// `sheet` must be a live handle; `out` must be valid for writes.
enum SsStatus ss_sheet_rect_measure(const struct SsSheet *sheet,
                                    double t_lo,
                                    double t_hi,
                                    double x_lo,
                                    double x_hi,
                                    double *out);

// # Safety
// `sheet` must come from `ss_sheet_sample` or be null; it must not be used afterwards.
void ss_sheet_free(struct SsSheet *sheet);

// Solves from a `simulate` TOML document (the `command` key may be omitted).
// `solution` and `noise` receive new field handles; `noise` may be null.
//
// # Safety
// `config_toml` must be a NUL-terminated string; the out pointers must be valid for
// writes or, for `noise`, null.
enum SsStatus ss_solve_config(const char *config_toml,
                              struct SsField **solution,
                              struct SsField **noise);

// Number of time and space nodes of a field.
//
// # Safety
// `field` must be a live handle; `rows` and `cols` must be valid for writes.
enum SsStatus ss_field_shape(const struct SsField *field, size_t *rows, size_t *cols);

// # Safety
// `field` must be a live handle; `out` must be valid for writes.
enum SsStatus ss_field_get(const struct SsField *field, size_t i, size_t j, double *out);

// Copies the field row-major into `buf`, which must hold `rows * cols` values.
//
// # Safety
// `field` must be a live handle; `buf` must be valid for `len` writes.
enum SsStatus ss_field_copy(const struct SsField *field, double *buf, size_t len);

// # Safety
// `field` must come from this library or be null; it must not be used afterwards.
void ss_field_free(struct SsField *field);

// Quadratic variation over `[x_lo, x_hi]` with `n` equal cells of a profile sampled at
// spacing `h` from `x = 0`.
//
// # Safety
// `values` must be valid for `len` reads; `out` must be valid for writes.
enum SsStatus ss_qv_estimate(const double *values,
                             size_t len,
                             double h,
                             double x_lo,
                             double x_hi,
                             size_t n,
                             double *out);

// Runs a command as the command-line tool would. `config_path` may be null for the
// defaults; `out_dir` may be null to keep the configured directory. The status equals
// the tool's exit code.
//
// # Safety
// Non-null string arguments must be NUL-terminated.
enum SsStatus ss_run(const char *command, const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHEETSPDE_H */
