/* C API for the tail library: training, evaluation, benchmarking and
 * property verification of the transformer-based few-shot learner.
 *
 * All entry points take a JSON configuration document (see README.md for the
 * schema) and communicate failures through tail_status codes; a detailed
 * message for the most recent failure on the calling thread is available via
 * tail_last_error(). Models are opaque handles created by tail_run_train or
 * tail_model_load and released with tail_model_free.
 */
#ifndef TAIL_TAIL_H
#define TAIL_TAIL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined _WIN32
#define TAIL_API __declspec(dllexport)
#else
#define TAIL_API __attribute__((visibility("default")))
#endif

typedef struct tail_model tail_model;

typedef enum tail_status {
  TAIL_OK = 0,
  TAIL_ERR_CONFIG = 1,       /* invalid or rejected configuration */
  TAIL_ERR_IO = 2,           /* file system failure */
  TAIL_ERR_FORMAT = 3,       /* unrecognized or wrong-version file */
  TAIL_ERR_CHECKSUM = 4,     /* corrupted or truncated file */
  TAIL_ERR_INCOMPATIBLE = 5, /* model/task dimension mismatch */
  TAIL_ERR_DIVERGED = 6,     /* training loss became non-finite */
  TAIL_ERR_PROPERTY = 7,     /* a verify property failed */
  TAIL_ERR_INVALID = 8,      /* contract violation (bad argument) */
  TAIL_ERR_INTERNAL = 9
} tail_status;

TAIL_API const char* tail_version(void);

TAIL_API const char* tail_status_name(tail_status status);

/* Message for the most recent error on this thread; empty string if none.
 * Valid until the next tail_* call on the same thread. */
TAIL_API const char* tail_last_error(void);

/* Frees strings returned through char** out-parameters. */
TAIL_API void tail_string_free(char* s);

/* Runs training per the config, writing model.tailck, train_loss.csv and
 * config.json into the configured output directory. If out_model is non-NULL
 * it receives the trained model (also on TAIL_ERR_DIVERGED, which preserves
 * the state at the point of divergence). */
TAIL_API tail_status tail_run_train(const char* config_json, tail_model** out_model);

/* Loads / saves a checkpoint (format TAILCK01). */
TAIL_API tail_status tail_model_load(const char* path, tail_model** out_model);
TAIL_API tail_status tail_model_save(const tail_model* model, const char* path);
TAIL_API void tail_model_free(tail_model* model);

/* JSON description of a model: dimensions, precision, episode counter. */
TAIL_API tail_status tail_model_info(const tail_model* model, char** out_json);

/* Evaluation protocol; writes eval_summary.csv and eval_episodes.csv.
 * out_summary (optional) receives a one-line human-readable summary. */
TAIL_API tail_status tail_run_eval(const tail_model* model, const char* config_json, char** out_summary);

/* Label-space extrapolation sweep; writes extrapolation.csv. */
TAIL_API tail_status tail_run_extrapolate(const tail_model* model, const char* config_json,
                                          char** out_summary);

/* Inline vs per-query efficiency benchmark; writes bench.csv. */
TAIL_API tail_status tail_run_bench(const tail_model* model, const char* config_json, char** out_summary);

/* Property suite. model may be NULL (a fresh random model is used). The
 * report (one PASS/FAIL line per property) is returned through out_report
 * and written to verify.txt. Returns TAIL_ERR_PROPERTY if any property
 * fails. */
TAIL_API tail_status tail_run_verify(const tail_model* model, const char* config_json, char** out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TAIL_TAIL_H */
