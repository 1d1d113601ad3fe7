#ifndef TEMLM_H
#define TEMLM_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Artifact document kinds.
 */
typedef enum TemlmDocKind {
  TEMLM_DOC_KIND_DATASHEET = 0,
  TEMLM_DOC_KIND_CARD = 1,
} TemlmDocKind;

/**
 * Result codes.
 */
typedef enum TemlmStatus {
  TEMLM_STATUS_OK = 0,
  TEMLM_STATUS_NULL_POINTER = 1,
  TEMLM_STATUS_INVALID_UTF8 = 2,
  TEMLM_STATUS_IO = 3,
  TEMLM_STATUS_PARSE = 4,
  TEMLM_STATUS_INVALID_INPUT = 5,
  TEMLM_STATUS_VALIDATION = 6,
  TEMLM_STATUS_COMPUTATION = 7,
  TEMLM_STATUS_PANIC = 8,
} TemlmStatus;

/**
 * A loaded note corpus.
 */
typedef struct TemlmCorpus TemlmCorpus;

/**
 * Outcome of a release gate run.
 */
typedef struct TemlmGateReport TemlmGateReport;

/**
 * Agreement statistic with its bootstrap interval.
 */
typedef struct TemlmAgreement {
  double value;
  double p_o;
  double p_e;
  double ci_low;
  double ci_high;
} TemlmAgreement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *temlm_version(void);

/**
 * Message for the most recent failure on this thread, or NULL.
 * The pointer is valid until the next library call on this thread.
 */
const char *temlm_last_error(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void temlm_string_free(char *s);

/**
 * Population stability index between two histograms of equal length.
 *
 * # Safety
 * `baseline` and `period` must point to `n` readable doubles.
 */
enum TemlmStatus temlm_psi(const double *baseline, const double *period, size_t n, double *out);

/**
 * Cohen's kappa for two raters labelling `n` items.
 *
 * # Safety
 * `labels_a` and `labels_b` must point to `n` readable values.
 */
enum TemlmStatus temlm_cohen_kappa(const uint32_t *labels_a,
                                   const uint32_t *labels_b,
                                   size_t n,
                                   size_t bootstrap_b,
                                   uint64_t seed,
                                   struct TemlmAgreement *out);

/**
 * Fleiss' kappa from a row-major `n_items` by `n_categories` count matrix.
 *
 * # Safety
 * `counts` must point to `n_items * n_categories` readable values.
 */
enum TemlmStatus temlm_fleiss_kappa(const uint64_t *counts,
                                    size_t n_items,
                                    size_t n_categories,
                                    size_t bootstrap_b,
                                    uint64_t seed,
                                    struct TemlmAgreement *out);

/**
 * Completeness of a datasheet or model card against the shipped schema.
 * Any of the output pointers may be NULL.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum TemlmStatus temlm_completeness(const char *path,
                                    enum TemlmDocKind kind,
                                    double *out_c,
                                    size_t *out_populated,
                                    size_t *out_total);

/**
 * Loads a JSONL corpus.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TemlmStatus temlm_corpus_load(const char *path, struct TemlmCorpus **out);

/**
 * Number of notes in a corpus, or 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t temlm_corpus_len(const struct TemlmCorpus *corpus);

/**
 * PSI trace of `feature` ("icd", "note_type" or "length") against the
 * `baseline` year over every later year, as `year psi` text.
 *
 * # Safety
 * `corpus` must be a live handle, `feature` NUL-terminated, `out` writable.
 */
enum TemlmStatus temlm_corpus_psi_trace(const struct TemlmCorpus *corpus,
                                        const char *feature,
                                        int32_t baseline,
                                        char **out);

/**
 * Releases a corpus handle. NULL is ignored.
 *
 * # Safety
 * `corpus` must be NULL or a handle not yet freed.
 */
void temlm_corpus_free(struct TemlmCorpus *corpus);

/**
 * Runs the release gate on a bundle directory. `policy_path` may be NULL
 * for the shipped policy.
 *
 * # Safety
 * Strings must be NUL-terminated and `out` writable.
 */
enum TemlmStatus temlm_gate_run(const char *bundle_path,
                                const char *policy_path,
                                struct TemlmGateReport **out);

/**
 * 1 when every blocking check passed, 0 otherwise or for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
int32_t temlm_gate_report_passed(const struct TemlmGateReport *report);

/**
 * Number of checks in the report, or 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
size_t temlm_gate_report_check_count(const struct TemlmGateReport *report);

/**
 * Report as JSON. Free the result with [`temlm_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum TemlmStatus temlm_gate_report_json(const struct TemlmGateReport *report, char **out);

/**
 * Releases a gate report. NULL is ignored.
 *
 * # Safety
 * `report` must be NULL or a handle not yet freed.
 */
void temlm_gate_report_free(struct TemlmGateReport *report);

/**
 * Recomputes a bundle's metrics and hashes. Writes 1 to `out_consistent`
 * when nothing disagrees.
 *
 * # Safety
 * `bundle_path` must be NUL-terminated and `out_consistent` writable.
 */
enum TemlmStatus temlm_verify_bundle(const char *bundle_path, int32_t *out_consistent);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEMLM_H */
