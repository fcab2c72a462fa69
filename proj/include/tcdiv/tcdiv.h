/* tcdiv — diverse classifier collections via conditional total correlation.
 *
 * C interface to the experiment pipeline: dataset generation, adversarial
 * training of model collections, rapid-adaptation evaluation, and result
 * aggregation. All functions are thread-compatible; the error message
 * returned by tcdiv_last_error() is thread-local.
 *
 * Conventions:
 *   - Functions returning tcdiv_status never throw or abort; on any status
 *     other than TCDIV_OK (and TCDIV_PARTIAL_FAILURE, see below) output
 *     parameters are left NULL/unchanged and tcdiv_last_error() describes
 *     the problem.
 *   - Objects are created through tcdiv_*_create/load calls and released
 *     with the matching tcdiv_*_destroy; destroy functions accept NULL.
 *   - Strings returned through const char* out-parameters are owned by the
 *     object they came from and remain valid until it is destroyed.
 */

#ifndef TCDIV_TCDIV_H
#define TCDIV_TCDIV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TCDIV_API __declspec(dllexport)
#else
#define TCDIV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tcdiv_status {
    TCDIV_OK = 0,
    /* Bad argument: NULL handle, unknown key, out-of-range value, ... */
    TCDIV_INVALID_ARGUMENT = 1,
    /* Filesystem problem: missing input, refused overwrite, write failure. */
    TCDIV_IO_ERROR = 2,
    /* Parse failure: config file, IDX file, or stored artifact. */
    TCDIV_FORMAT_ERROR = 3,
    /* Non-finite loss or other numerical breakdown during training. */
    TCDIV_NUMERIC_ERROR = 4,
    /* The pipeline ran, but at least one seed failed; results are still
     * returned and carry one `failed` row per aborted seed. */
    TCDIV_PARTIAL_FAILURE = 5,
    /* Unexpected internal failure. */
    TCDIV_INTERNAL_ERROR = 6,
} tcdiv_status;

/* Experiment configuration: variant, method, seeds, training and data
 * parameters, directories. Opaque; manipulated via key=value strings using
 * the same vocabulary as configuration files. */
typedef struct tcdiv_config tcdiv_config;

/* Aggregated results of a run: one row per (protocol, condition) with the
 * mean and population standard deviation of test accuracy over seeds, in
 * percentage points. */
typedef struct tcdiv_results tcdiv_results;

/* Library version, e.g. "0.1.0". Static storage; never NULL. */
TCDIV_API const char* tcdiv_version(void);

/* Human-readable name of a status code. Static storage; never NULL. */
TCDIV_API const char* tcdiv_status_string(tcdiv_status status);

/* Message from the most recent failing call on this thread, or "" if none.
 * Valid until the next failing call on the same thread. */
TCDIV_API const char* tcdiv_last_error(void);

/* --- configuration -------------------------------------------------------
 *
 * Keys accepted by tcdiv_config_set and configuration files:
 *   variant            cmnist | rcmnist | tcmnist (resets epochs and
 *                      critic_ratio to the variant's published defaults)
 *   method             conditional_tc | unconditional_tc | erm
 *   seeds              comma-separated list, e.g. "0,1,2"
 *   n_models           models trained jointly (erm forces 1)
 *   beta               diversity pressure coefficient (>= 0)
 *   batch_size         minibatch rows (>= 2)
 *   m_negatives        permuted negatives per estimator batch (>= 1)
 *   epochs             training epochs (>= 0)
 *   critic_ratio       critic steps per model step (>= 1)
 *   lr                 RMSProp learning rate (> 0)
 *   label_flip_prob    label noise in the training environments
 *   colour_flip_prob_env0 / colour_flip_prob_env1
 *                      colour-label disagreement per environment
 *   colour2_flip_prob  second colour channel disagreement (tcmnist)
 *   rotation_flip_prob rotation-label disagreement (rcmnist)
 *   mnist_dir          directory with the four IDX files (falls back to the
 *                      TCDIV_MNIST_DIR environment variable)
 *   output_dir         run directory for artifacts and caches
 *   overwrite          true | false
 *   workers            parallel seed workers (>= 1)
 */

/* New configuration with published defaults (cmnist, conditional_tc,
 * seeds 0..9). */
TCDIV_API tcdiv_status tcdiv_config_create(tcdiv_config** out_config);

/* Load `key = value` lines ('#' comments, blank lines ignored) and apply
 * defaults for everything unspecified. */
TCDIV_API tcdiv_status tcdiv_config_load(const char* path, tcdiv_config** out_config);

/* Set one key. Unknown keys and unparsable values are rejected. */
TCDIV_API tcdiv_status tcdiv_config_set(tcdiv_config* config, const char* key,
                                        const char* value);

TCDIV_API void tcdiv_config_destroy(tcdiv_config* config);

/* --- pipeline verbs ------------------------------------------------------
 *
 * Each verb validates the configuration, so a malformed configuration is
 * reported by the verb rather than at set time. Verbs with an out_results
 * parameter populate it on TCDIV_OK and on TCDIV_PARTIAL_FAILURE.
 */

/* Generate and cache every seed's datasets under output_dir/datasets. */
TCDIV_API tcdiv_status tcdiv_generate(const tcdiv_config* config);

/* Full pipeline over all configured seeds: generate, train, evaluate,
 * aggregate; writes results.csv, manifest.json, and per-seed artifacts
 * under output_dir. Refuses an already-emitted run unless overwrite. */
TCDIV_API tcdiv_status tcdiv_run(const tcdiv_config* config, tcdiv_results** out_results);

/* Train a single seed and write output_dir/seed-<seed>/{checkpoint.bin,
 * metrics.jsonl, report.json}. Refuses an existing checkpoint unless
 * overwrite. Does not touch results.csv; use tcdiv_report to aggregate. */
TCDIV_API tcdiv_status tcdiv_train(const tcdiv_config* config, uint64_t seed,
                                   tcdiv_results** out_results);

/* Re-score the stored checkpoint of a single trained seed on its test
 * conditions and rewrite its report.json. */
TCDIV_API tcdiv_status tcdiv_evaluate(const tcdiv_config* config, uint64_t seed,
                                      tcdiv_results** out_results);

/* Aggregate the existing per-seed reports under output_dir into
 * results.csv and manifest.json; missing seeds become failure rows. */
TCDIV_API tcdiv_status tcdiv_report(const tcdiv_config* config, tcdiv_results** out_results);

/* --- results -------------------------------------------------------------*/

/* Whole table as CSV (header + one line per row). */
TCDIV_API tcdiv_status tcdiv_results_csv(const tcdiv_results* results, const char** out_csv);

TCDIV_API tcdiv_status tcdiv_results_row_count(const tcdiv_results* results,
                                               size_t* out_count);

/* One row. Any out-parameter may be NULL to skip that field. Accuracies are
 * percentages; n_seeds counts the seeds that completed. Failure rows use
 * protocol "failed" and condition "seed <N>". */
TCDIV_API tcdiv_status tcdiv_results_row(const tcdiv_results* results, size_t index,
                                         const char** out_method, const char** out_protocol,
                                         const char** out_condition, double* out_mean,
                                         double* out_sd, int32_t* out_n_seeds);

/* 1 when at least one seed failed, else 0 (NULL counts as failed). */
TCDIV_API int tcdiv_results_any_failed(const tcdiv_results* results);

TCDIV_API void tcdiv_results_destroy(tcdiv_results* results);

#ifdef __cplusplus
}
#endif

#endif /* TCDIV_TCDIV_H */
