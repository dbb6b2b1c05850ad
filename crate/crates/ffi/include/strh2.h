#ifndef STRH2_H
#define STRH2_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible function.
typedef enum Strh2Status {
  STRH2_STATUS_OK = 0,
  STRH2_STATUS_NULL_POINTER = 1,
  STRH2_STATUS_INVALID_ARGUMENT = 2,
  STRH2_STATUS_PARSE = 3,
  STRH2_STATUS_UNSTABLE = 4,
  STRH2_STATUS_NUMERICAL = 5,
  STRH2_STATUS_OPTIMIZER = 6,
  STRH2_STATUS_PANIC = 7,
} Strh2Status;

// A loaded model.
typedef struct Strh2Model Strh2Model;

// A condition report.
typedef struct Strh2Report Strh2Report;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *strh2_last_error_message(void);

// # Safety
// `s` must come from this library and not have been freed.
void strh2_string_free(char *s);

// Parse a model from its JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum Strh2Status strh2_model_from_json(const char *json, struct Strh2Model **out);

// Read a model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum Strh2Status strh2_model_load(const char *path, struct Strh2Model **out);

// Serialize a model to JSON; free the result with [`strh2_string_free`].
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum Strh2Status strh2_model_to_json(const struct Strh2Model *model, char **out);

// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void strh2_model_free(struct Strh2Model *model);

// State dimension, inputs and outputs.
//
// # Safety
// `model` must be a live handle; the out pointers must be valid.
enum Strh2Status strh2_model_dims(const struct Strh2Model *model, size_t *n, size_t *m, size_t *p);

// `H(s)` as `p·m` complex entries, column-major, interleaved re/im in
// `out` of length `len ≥ 2·p·m`.
//
// # Safety
// `model` must be a live handle and `out` valid for `len` doubles.
enum Strh2Status strh2_eval_transfer(const struct Strh2Model *model,
                                     double re,
                                     double im,
                                     double *out,
                                     size_t len);

// H2 norm by quadrature on the automatic grid.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum Strh2Status strh2_h2_norm(const struct Strh2Model *model, double *out);

// `‖H − Ĥ‖_{H2}` by quadrature on a grid fitted to both models.
//
// # Safety
// Both handles must be live and `out` a valid pointer.
enum Strh2Status strh2_h2_error(const struct Strh2Model *fom,
                                const struct Strh2Model *rom,
                                double *out);

// Optimality conditions of `rom` for `fom`. `structure` may be null to
// infer it from the ROM ("unstructured", "so", "ph" or "delay").
//
// # Safety
// Both handles must be live, `structure` null or NUL-terminated, `out` valid.
enum Strh2Status strh2_check_conditions(const struct Strh2Model *fom,
                                        const struct Strh2Model *rom,
                                        const char *structure,
                                        struct Strh2Report **out);

// 1 if every relative residual is below `tol`, 0 if not, −1 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
int strh2_report_passed(const struct Strh2Report *report, double tol);

// Largest relative residual, NaN for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double strh2_report_max_relative(const struct Strh2Report *report);

// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum Strh2Status strh2_report_to_json(const struct Strh2Report *report, char **out);

// # Safety
// `report` must be null or a live handle; it is invalid afterwards.
void strh2_report_free(struct Strh2Report *report);

// Multi-start structured reduction of `fom` to order `r`. The best model
// is returned in `out` even when it did not converge; check it with
// [`strh2_check_conditions`].
//
// # Safety
// `fom` must be a live handle, `structure` NUL-terminated, `out` valid.
enum Strh2Status strh2_reduce(const struct Strh2Model *fom,
                              const char *structure,
                              size_t r,
                              size_t restarts,
                              uint64_t seed,
                              struct Strh2Model **out);

// Branch `k` of the Lambert W function at `re + i·im`.
//
// # Safety
// `out_re` and `out_im` must be valid pointers.
enum Strh2Status strh2_lambert_w(int64_t k, double re, double im, double *out_re, double *out_im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRH2_H */
