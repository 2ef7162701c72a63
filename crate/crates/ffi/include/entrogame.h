#ifndef ENTROGAME_H
#define ENTROGAME_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The first four match the command-line exit codes.
 */
typedef enum EgStatus {
  EG_STATUS_OK = 0,
  EG_STATUS_USAGE = 1,
  EG_STATUS_VALIDATION = 2,
  EG_STATUS_RESOURCE_CAP = 3,
  EG_STATUS_INVARIANT = 4,
  EG_STATUS_NULL_POINTER = 5,
  EG_STATUS_PANIC = 6,
} EgStatus;

/**
 * A payoff matrix with its cached value and parameters.
 */
typedef struct EgGame EgGame;

/**
 * A joint distribution of a randomness source `X` and side information `Y`.
 */
typedef struct EgSource EgSource;

/**
 * Value and payoff range of a game, as doubles.
 */
typedef struct EgValue {
  double w_star;
  double v;
  double m_lo;
  double m_hi;
} EgValue;

/**
 * The min-entropy function and its bounds at one payoff level.
 */
typedef struct EgBounds {
  double f;
  double g1;
  double g1_relaxed;
  double g2;
  double g3;
  double g4;
  double q1;
  double q2;
  double q3;
} EgBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *eg_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void eg_string_free(char *s);

/**
 * Parses a game from `{"matrix": [[...], ...]}` and solves it.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum EgStatus eg_game_from_json(const char *json, struct EgGame **out);

/**
 * # Safety
 * `game` must come from [`eg_game_from_json`] and not be freed twice. Null is ignored.
 */
void eg_game_free(struct EgGame *game);

/**
 * Number of rows (the maximizer's actions), or 0 for a null handle.
 *
 * # Safety
 * `game` must be null or a live handle.
 */
size_t eg_game_rows(const struct EgGame *game);

/**
 * Number of columns, or 0 for a null handle.
 *
 * # Safety
 * `game` must be null or a live handle.
 */
size_t eg_game_cols(const struct EgGame *game);

/**
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum EgStatus eg_game_value(const struct EgGame *game, struct EgValue *out);

/**
 * Exact value as JSON `{"w_star", "nash", "v", "m_lo", "m_hi"}` with `"p/q"` strings.
 * Release the result with [`eg_string_free`].
 *
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum EgStatus eg_game_value_json(const struct EgGame *game, char **out);

/**
 * Writes an optimal mixed strategy of the maximizer into `probs[0..len]`.
 * `len` must equal the number of rows.
 *
 * # Safety
 * `probs` must point to `len` writable doubles.
 */
enum EgStatus eg_game_nash(const struct EgGame *game, double *probs, size_t len);

/**
 * Least entropy (bits) of a mixed strategy securing payoff `w`, given as a decimal or
 * `"p/q"` string. Zero at or below `v`, infinite above `w_star`.
 *
 * # Safety
 * `game` must be a live handle, `w` a nul-terminated string and `out` writable.
 */
enum EgStatus eg_min_entropy(const struct EgGame *game, const char *w, double *out);

/**
 * Min-entropy function and all bounds at payoff `w`.
 *
 * # Safety
 * As for [`eg_min_entropy`].
 */
enum EgStatus eg_bounds(const struct EgGame *game, const char *w, struct EgBounds *out);

/**
 * Upper concave envelope of the payoff-versus-entropy curve at `h` bits, sampled on
 * `grid` points.
 *
 * # Safety
 * `game` must be a live handle and `out` writable.
 */
enum EgStatus eg_j_cav(const struct EgGame *game, double h, size_t grid, double *out);

/**
 * Parses a source from `{"pxy": [[...], ...]}`, rows indexed by `x`.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` writable.
 */
enum EgStatus eg_source_from_json(const char *json, struct EgSource **out);

/**
 * # Safety
 * `source` must come from [`eg_source_from_json`] and not be freed twice. Null is ignored.
 */
void eg_source_free(struct EgSource *source);

/**
 * H(X|Y) in bits.
 *
 * # Safety
 * `source` must be a live handle and `out` writable.
 */
enum EgStatus eg_conditional_entropy(const struct EgSource *source, double *out);

/**
 * Maxmin value per stage of the repeated game where the maximizer's only randomness is
 * the source and the opponent sees its side information.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum EgStatus eg_theoretical_maxmin(const struct EgGame *game,
                                    const struct EgSource *source,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENTROGAME_H */
