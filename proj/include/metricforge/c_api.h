/* Flat C boundary over the evaluator, for scripting-language bindings.
 *
 * Every function returns 0 on success or a non-zero error code; the message
 * for the most recent failure on the calling thread is available from
 * mf_last_error_message(). Strings are UTF-8; output buffers are owned by
 * the caller. */
#ifndef METRICFORGE_C_API_H_
#define METRICFORGE_C_API_H_

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mf_evaluator mf_evaluator;

#define MF_OK 0
#define MF_ERR_INVALID_ARGUMENT 100
#define MF_ERR_BUFFER_TOO_SMALL 101
#define MF_ERR_INTERNAL 102

/* config_json: object with keys model_file, vocab_file, like, quiet, fp16,
 * cpu_threads, mini_batch, maxi_batch, max_length, average, eager.
 * Unknown keys are rejected. */
int mf_evaluator_create(const char* config_json, mf_evaluator** out);

/* Scores n_lines TAB-joined lines; writes n_lines segment scores. */
int mf_evaluator_evaluate(mf_evaluator* ev, const char* const* lines, size_t n_lines, double* scores,
                          size_t capacity, size_t* n_written);

/* Applies the evaluator's configured average mode to a full score list. */
int mf_evaluator_apply_average(const mf_evaluator* ev, const double* scores, size_t n_scores, double* out,
                               size_t capacity, size_t* n_written);

/* "comet-qe", "comet" or "bleurt"; the string is static. */
int mf_evaluator_kind(const mf_evaluator* ev, const char** like);

void mf_evaluator_destroy(mf_evaluator* ev);

int mf_last_error_code(void);
const char* mf_last_error_message(void);

#ifdef __cplusplus
}
#endif

#endif /* METRICFORGE_C_API_H_ */
