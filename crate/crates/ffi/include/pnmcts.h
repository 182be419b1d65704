#ifndef PNMCTS_H
#define PNMCTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum PnmctsCode {
  PNMCTS_CODE_OK = 0,
  PNMCTS_CODE_NULL_ARGUMENT = 1,
  PNMCTS_CODE_INVALID_UTF8 = 2,
  PNMCTS_CODE_IO = 3,
  PNMCTS_CODE_PARSE = 4,
  PNMCTS_CODE_INVALID_LAYOUT = 5,
  PNMCTS_CODE_INVALID_SCENARIO = 6,
  PNMCTS_CODE_CAPACITY = 7,
  PNMCTS_CODE_ILLEGAL_ACTION = 8,
  PNMCTS_CODE_NO_LEGAL_ACTION = 9,
  PNMCTS_CODE_DIMENSION = 10,
  PNMCTS_CODE_CHECKPOINT = 11,
  PNMCTS_CODE_REJECTION_BUDGET = 12,
  PNMCTS_CODE_CONFIG = 13,
  PNMCTS_CODE_PANIC = 99,
} PnmctsCode;

/**
 * Episode status, mirrors the library's terminal states.
 */
typedef enum PnmctsStatus {
  PNMCTS_STATUS_SOLVED = 0,
  PNMCTS_STATUS_FAIL_STEPS = 1,
  PNMCTS_STATUS_FAIL_TIME = 2,
} PnmctsStatus;

/**
 * Opaque traffic board.
 */
typedef struct PnmctsBoard PnmctsBoard;

/**
 * Opaque intersection layout.
 */
typedef struct PnmctsLayout PnmctsLayout;

/**
 * Opaque policy/value network.
 */
typedef struct PnmctsNet PnmctsNet;

typedef struct PnmctsOutcome {
  enum PnmctsStatus status;
  /**
   * Crossing time of the schedule, s.
   */
  double t_cross;
  uint32_t steps;
  double reward;
} PnmctsOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *pnmcts_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *pnmcts_version(void);

/**
 * The bundled four-way, three-lane layout.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PnmctsCode pnmcts_layout_default(struct PnmctsLayout **out_layout);

/**
 * Loads a layout from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_layout` a valid pointer.
 */
enum PnmctsCode pnmcts_layout_load(const char *path, struct PnmctsLayout **out_layout);

/**
 * # Safety
 * `layout` must come from this library or be null.
 */
void pnmcts_layout_free(struct PnmctsLayout *layout);

/**
 * Number of collision areas of a layout.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PnmctsCode pnmcts_layout_num_areas(const struct PnmctsLayout *layout, uint32_t *out_areas);

/**
 * Builds a board from a scenario given as JSON text.
 *
 * # Safety
 * `scenario_json` must be a NUL-terminated string; other pointers valid.
 */
enum PnmctsCode pnmcts_board_from_scenario(const struct PnmctsLayout *layout,
                                           const char *scenario_json,
                                           struct PnmctsBoard **out_board);

/**
 * # Safety
 * `board` must come from this library or be null.
 */
void pnmcts_board_free(struct PnmctsBoard *board);

/**
 * Occupied rows, whether any two rows conflict, and the crossing time.
 *
 * # Safety
 * Pointers must be valid; any out pointer may be null to skip it.
 */
enum PnmctsCode pnmcts_board_info(const struct PnmctsBoard *board,
                                  uint32_t *out_rows,
                                  bool *out_has_conflict,
                                  double *out_t_cross);

/**
 * Delays `row` by `moves` ticks in place.
 *
 * # Safety
 * `board` must be a valid board.
 */
enum PnmctsCode pnmcts_board_apply(struct PnmctsBoard *board, uint32_t row, uint32_t moves);

/**
 * Loads a network checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_net` a valid pointer.
 */
enum PnmctsCode pnmcts_net_load(const char *path, struct PnmctsNet **out_net);

/**
 * # Safety
 * `net` must come from this library or be null.
 */
void pnmcts_net_free(struct PnmctsNet *net);

/**
 * Schedules a board with short-path tree search, then pulls every delayed
 * platoon into the earliest gap that stays conflict-free.
 *
 * `net` may be null for uniform priors. `simulations` of 0 keeps the
 * default. When `out_board` is non-null it receives the final board.
 *
 * # Safety
 * Pointers must be valid or null where allowed.
 */
enum PnmctsCode pnmcts_solve(const struct PnmctsBoard *board,
                             const struct PnmctsNet *net,
                             uint32_t simulations,
                             uint64_t seed,
                             struct PnmctsOutcome *out_outcome,
                             struct PnmctsBoard **out_board);

/**
 * Schedules a board first-come-first-served.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PnmctsCode pnmcts_fifo(const struct PnmctsBoard *board, struct PnmctsOutcome *out_outcome);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNMCTS_H */
