#ifndef FRACTEL_H
#define FRACTEL_H

#include <stddef.h>

typedef enum FractelStatus {
  FRACTEL_STATUS_OK = 0,
  FRACTEL_STATUS_NULL_POINTER = 1,
  FRACTEL_STATUS_INVALID_UTF8 = 2,
  FRACTEL_STATUS_CONFIGURATION = 3,
  FRACTEL_STATUS_DOMAIN = 4,
  FRACTEL_STATUS_DEGENERATE_FUNCTIONAL = 5,
  FRACTEL_STATUS_NON_CONVERGENCE = 6,
  FRACTEL_STATUS_UNSUPPORTED = 7,
  FRACTEL_STATUS_NUMERICAL = 8,
  FRACTEL_STATUS_STATE = 9,
  FRACTEL_STATUS_BUFFER_TOO_SMALL = 10,
  FRACTEL_STATUS_PANIC = 11,
} FractelStatus;

// Opaque solver session.
typedef struct FractelSession FractelSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *fractel_last_error(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library and not yet freed.
void fractel_string_free(char *s);

// Two-parameter Mittag-Leffler function `E_{ρ,μ}(z)`.
//
// # Safety
// `out_re` and `out_im` must be valid for writes.
enum FractelStatus fractel_ml2(double rho,
                               double mu,
                               double z_re,
                               double z_im,
                               double *out_re,
                               double *out_im);

// Three-parameter (Prabhakar) function `E^γ_{ρ,μ}(z)`.
//
// # Safety
// `out_re` and `out_im` must be valid for writes.
enum FractelStatus fractel_ml3(double rho,
                               double mu,
                               double gamma,
                               double z_re,
                               double z_im,
                               double *out_re,
                               double *out_im);

// Validates `config_json` and prepares a session in `*out`.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` valid for writes.
enum FractelStatus fractel_session_new(const char *config_json, struct FractelSession **out);

// # Safety
// `session` must be NULL or a live pointer from [`fractel_session_new`].
void fractel_session_free(struct FractelSession *session);

// Solves the forward problem with the configured `p(t)`.
//
// # Safety
// `session` must be NULL or a live session pointer.
enum FractelStatus fractel_session_forward(struct FractelSession *session);

// Recovers `p(t)` from the configured measurement.
//
// # Safety
// `session` must be NULL or a live session pointer.
enum FractelStatus fractel_session_inverse(struct FractelSession *session);

// Number of time nodes (steps + 1); 0 for a NULL session.
//
// # Safety
// `session` must be NULL or a live session pointer.
size_t fractel_session_nodes(const struct FractelSession *session);

// Number of spectral modes; 0 for a NULL session.
//
// # Safety
// `session` must be NULL or a live session pointer.
size_t fractel_session_modes(const struct FractelSession *session);

// Copies the time nodes into `buf` (capacity `len`).
//
// # Safety
// `buf` must be valid for `len` writes.
enum FractelStatus fractel_session_times(const struct FractelSession *session,
                                         double *buf,
                                         size_t len);

// Copies the time coefficients of mode `mode` (zero-based) of the last
// solution.
//
// # Safety
// `re` and `im` must each be valid for `len` writes.
enum FractelStatus fractel_session_coefficients(const struct FractelSession *session,
                                                size_t mode,
                                                double *re,
                                                double *im,
                                                size_t len);

// Copies the recovered source `p(t)` of the last inverse run.
//
// # Safety
// `re` and `im` must each be valid for `len` writes.
enum FractelStatus fractel_session_source(const struct FractelSession *session,
                                          double *re,
                                          double *im,
                                          size_t len);

// Copies `μ(t)` of the last inverse run.
//
// # Safety
// `re` and `im` must each be valid for `len` writes.
enum FractelStatus fractel_session_mu(const struct FractelSession *session,
                                      double *re,
                                      double *im,
                                      size_t len);

// Diagnostics of the last run as a JSON string; free with
// [`fractel_string_free`].
//
// # Safety
// `out` must be valid for writes.
enum FractelStatus fractel_session_diagnostics(const struct FractelSession *session, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACTEL_H */
