#ifndef AUTOREASON_H
#define AUTOREASON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum ArStatus {
  ArOk = 0,
  ArErrNullPointer = 1,
  ArErrUtf8 = 2,
  ArErrInvalidArgument = 3,
  ArErrEmptyInput = 4,
  ArErrNoRationales = 5,
  ArErrParse = 6,
  ArErrIo = 7,
} ArStatus;

/**
 * Opaque handle over the prompt template set.
 */
typedef struct ArLibrary ArLibrary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread; valid until the next
 * failing call.
 */
const char *ar_last_error(void);

/**
 * Release a string returned by this library.
 */
void ar_string_free(char *s);

/**
 * Create a library handle backed by the built-in template set.
 */
enum ArStatus ar_library_new(struct ArLibrary **out);

/**
 * Create a library handle from a directory of template fixture files.
 */
enum ArStatus ar_library_from_dir(const char *dir, struct ArLibrary **out);

void ar_library_free(struct ArLibrary *library);

/**
 * Render the rationale-extraction prompt. `out` receives the prompt as a
 * JSON object: `{"messages": [{"role": "...", "content": "..."}]}`.
 */
enum ArStatus ar_render_extraction(const struct ArLibrary *library,
                                   const char *question,
                                   char **out);

/**
 * Render the direct-answer prompt for a dataset kind (0 = strategyqa,
 * 1 = hotpotqa). Same JSON shape as `ar_render_extraction`.
 */
enum ArStatus ar_render_base(const struct ArLibrary *library,
                             uint32_t kind,
                             const char *question,
                             char **out);

/**
 * Render the few-shot chain-of-thought prompt.
 */
enum ArStatus ar_render_cot(const struct ArLibrary *library,
                            uint32_t kind,
                            const char *question,
                            char **out);

/**
 * Render the second-stage answering prompt. `traces_json` is a JSON array
 * of sub-question strings.
 */
enum ArStatus ar_render_final_answer(const struct ArLibrary *library,
                                     uint32_t kind,
                                     const char *question,
                                     const char *traces_json,
                                     char **out);

/**
 * Render the judge prompt scoring `answer` against `correct_answer`.
 */
enum ArStatus ar_render_scorer(const struct ArLibrary *library,
                               const char *question,
                               const char *answer,
                               const char *correct_answer,
                               char **out);

/**
 * Parse reasoning traces out of a raw extraction response. `out` receives
 * a JSON array of sub-question strings.
 */
enum ArStatus ar_parse_rationales(const char *text, char **out);

/**
 * Parse the 0-10 judge score from a free-form response.
 */
enum ArStatus ar_parse_score(const char *text, uint8_t *out);

/**
 * Canonicalize a raw model answer for a dataset kind (0 = strategyqa,
 * 1 = hotpotqa).
 */
enum ArStatus ar_normalize_answer(uint32_t kind, const char *raw, char **out);

/**
 * Deterministic per-(iteration, run) sub-seed derived from the master seed.
 */
uint64_t ar_derive_subseed(uint64_t seed, uint32_t iteration, uint32_t run);

/**
 * Fill `out` (length `n`) with the seeded shuffle of indices `0..n`.
 */
enum ArStatus ar_shuffle_indices(uint64_t seed, uintptr_t n, uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOREASON_H */
