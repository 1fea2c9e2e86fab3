/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef CSAUDIT_H
#define CSAUDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Overall audit state reported by `csa_session_record`.
 */
#define CSA_OPEN 0

#define CSA_CERTIFIED 1

#define CSA_EXHAUSTED 2

/*
 Result of every fallible call.
 */
typedef enum CsaStatus {
  CSA_STATUS_OK = 0,
  CSA_STATUS_NULL_POINTER = 1,
  CSA_STATUS_INVALID_UTF8 = 2,
  CSA_STATUS_INVALID_ARGUMENT = 3,
  /*
   Contest CSV, config or snapshot could not be parsed.
   */
  CSA_STATUS_PARSE = 4,
  /*
   The engine rejected the ballot (wrong id, bad vote, already recorded).
   */
  CSA_STATUS_REJECTED = 5,
  /*
   Every ballot has been drawn.
   */
  CSA_STATUS_EXHAUSTED = 6,
  CSA_STATUS_INTERNAL = 7,
  CSA_STATUS_PANIC = 8,
} CsaStatus;

/*
 Weight family for the grid helpers.
 */
typedef enum CsaWeights {
  CSA_WEIGHTS_CONSTANT = 0,
  CSA_WEIGHTS_LINEAR = 1,
  CSA_WEIGHTS_SQUARE = 2,
} CsaWeights;

/*
 Opaque audit session.
 */
typedef struct CsaSession CsaSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Free with
 `csa_string_free`.
 */
char *csa_last_error(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void csa_string_free(char *s);

/*
 Creates a session for `contest_id` (NULL when the CSV holds one contest)
 from contest CSV text and a JSON config such as
 `{"alpha":0.05,"strategy":"sqkelly","mode":"rla","seed":1}`.

 # Safety
 String arguments must be nul-terminated; `out` must be writable.
 */
enum CsaStatus csa_session_create(const char *contests_csv,
                                  const char *contest_id,
                                  const char *config_json,
                                  struct CsaSession **out);

/*
 Rebuilds a session from `csa_session_snapshot` output.

 # Safety
 `snapshot_json` must be nul-terminated; `out` must be writable.
 */
enum CsaStatus csa_session_restore(const char *snapshot_json, struct CsaSession **out);

/*
 Destroys a session. NULL is ignored.

 # Safety
 `s` must come from `csa_session_create` or `csa_session_restore`.
 */
void csa_session_free(struct CsaSession *s);

/*
 Id of the ballot to retrieve next. Repeats the pending id until it is
 recorded.

 # Safety
 `s` must be a live session; `ballot_id` must be writable.
 */
enum CsaStatus csa_session_draw(struct CsaSession *s, char **ballot_id);

/*
 Records the vote on the pending ballot and writes `CSA_OPEN`,
 `CSA_CERTIFIED` or `CSA_EXHAUSTED` to `overall` (which may be NULL).

 # Safety
 `s` must be a live session; strings must be nul-terminated.
 */
enum CsaStatus csa_session_record(struct CsaSession *s,
                                  const char *ballot_id,
                                  const char *vote,
                                  int32_t *overall);

/*
 Number of ballots recorded so far.

 # Safety
 `s` must be a live session; `out` must be writable.
 */
enum CsaStatus csa_session_ballots_recorded(struct CsaSession *s, uint64_t *out);

/*
 Certification report as JSON.

 # Safety
 `s` must be a live session; `out` must be writable.
 */
enum CsaStatus csa_session_status_json(struct CsaSession *s, char **out);

/*
 Versioned JSON snapshot of the whole session.

 # Safety
 `s` must be a live session; `out` must be writable.
 */
enum CsaStatus csa_session_snapshot(struct CsaSession *s, char **out);

/*
 Trajectory CSV, the same bytes the command line writes.

 # Safety
 `s` must be a live session; `out` must be writable.
 */
enum CsaStatus csa_session_export_csv(struct CsaSession *s, char **out);

/*
 Fixed bet for reported winner and loser totals.

 # Safety
 `out` must be writable.
 */
enum CsaStatus csa_apriori_kelly_lambda(uint64_t winner_votes, uint64_t loser_votes, double *out);

/*
 Lower confidence bound after observing `values[0..len]` from a
 population of `population_size` values in `[0, 1]`, with the one-sided
 grid mixture of `grid_size` bets.

 # Safety
 `values` must hold `len` doubles; `out` must be writable.
 */
enum CsaStatus csa_lower_bound(const double *values,
                               size_t len,
                               uint64_t population_size,
                               enum CsaWeights weights,
                               size_t grid_size,
                               double alpha,
                               double *out);

/*
 Anytime p-value of the null mean `null` after `values[0..len]`.

 # Safety
 `values` must hold `len` doubles; `out` must be writable.
 */
enum CsaStatus csa_anytime_p_value(const double *values,
                                   size_t len,
                                   uint64_t population_size,
                                   enum CsaWeights weights,
                                   size_t grid_size,
                                   double null,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSAUDIT_H */
