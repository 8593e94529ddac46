#ifndef REGDISTILL_H
#define REGDISTILL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of a fallible call. `Config`, `Data` and `Numeric` mirror the
// command-line exit codes; unreadable or malformed files report `Data`.
typedef enum RdStatus {
  RD_STATUS_OK = 0,
  RD_STATUS_NULL_POINTER = 1,
  RD_STATUS_INVALID_ARGUMENT = 2,
  RD_STATUS_CONFIG = 3,
  RD_STATUS_DATA = 4,
  RD_STATUS_NUMERIC = 5,
  RD_STATUS_IO = 6,
  RD_STATUS_PANIC = 7,
} RdStatus;

typedef enum RdMode {
  RD_MODE_CONVENTIONAL = 0,
  RD_MODE_SIGNIFICANCE = 1,
  RD_MODE_REGULATED = 2,
  RD_MODE_HYBRID = 3,
} RdMode;

typedef struct RdDataset RdDataset;

typedef struct RdLedger RdLedger;

typedef struct RdModel RdModel;

typedef struct RdReport RdReport;

typedef struct RdTable RdTable;

typedef struct RdGateDecision {
  bool included;
  size_t predicted;
  double margin;
  double threshold;
} RdGateDecision;

typedef struct RdEfficiency {
  uint64_t participations;
  uint64_t available;
  double zeta;
} RdEfficiency;

typedef struct RdTrainOptions {
  size_t epochs;
  size_t batch_size;
  double lr;
  // Seeds the per-epoch shuffles.
  uint64_t seed;
  // Rows per parallel shard; 0 selects the default.
  size_t shard_size;
} RdTrainOptions;

typedef struct RdDistillOptions {
  enum RdMode mode;
  double tau;
  double lambda;
  // Regulation rate for regulated/hybrid; `INFINITY` opens the gate.
  double alpha;
  bool tau_squared;
  struct RdTrainOptions train;
} RdDistillOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next `rd_*` call on the same thread.
const char *rd_last_error(void);

// Library version as a static NUL-terminated string.
const char *rd_version(void);

// Frees a string returned by this library.
void rd_string_free(char *s);

enum RdStatus rd_dataset_blobs(size_t classes,
                               size_t per_class,
                               size_t dim,
                               double separation,
                               uint64_t seed,
                               struct RdDataset **out);

// Builds a dataset from `count` row-major samples of `sample_shape`.
enum RdStatus rd_dataset_from_arrays(const char *name,
                                     size_t classes,
                                     const size_t *sample_shape,
                                     size_t rank,
                                     const double *images,
                                     const size_t *labels,
                                     size_t count,
                                     struct RdDataset **out);

// Loads an IDX image/label pair (optionally gzip-compressed).
enum RdStatus rd_dataset_load_idx(const char *images,
                                  const char *labels,
                                  const char *name,
                                  struct RdDataset **out);

// Loads and concatenates CIFAR-10 binary batch files.
enum RdStatus rd_dataset_load_cifar10(const char *const *paths, size_t n, struct RdDataset **out);

size_t rd_dataset_len(const struct RdDataset *ds);

size_t rd_dataset_classes(const struct RdDataset *ds);

// Values per sample.
size_t rd_dataset_sample_len(const struct RdDataset *ds);

void rd_dataset_free(struct RdDataset *ds);

// Builds a named architecture (`mlp:64,64`, `linear`, `lenet5`,
// `lenet5-half`, `alexnet`, `alexnet-half`) for the given input and classes.
enum RdStatus rd_model_new(const char *arch_name,
                           const size_t *input_shape,
                           size_t rank,
                           size_t classes,
                           uint64_t seed,
                           struct RdModel **out);

enum RdStatus rd_model_load(const char *path, struct RdModel **out);

enum RdStatus rd_model_save(const struct RdModel *model, const char *path);

size_t rd_model_classes(const struct RdModel *model);

size_t rd_model_param_count(const struct RdModel *model);

// Logits for `batch` samples laid out row-major in `input`; writes
// `batch * classes` values to `logits`.
enum RdStatus rd_model_forward(const struct RdModel *model,
                               const double *input,
                               size_t batch,
                               double *logits,
                               size_t logits_len);

void rd_model_free(struct RdModel *model);

// Softmax of `logits / tau` into `out` (both of length `n`).
enum RdStatus rd_softmax(const double *logits, size_t n, double tau, double *out);

// `1 - exp(-alpha * epoch)`.
enum RdStatus rd_threshold(double alpha, size_t epoch, double *out);

enum RdStatus rd_margin(const double *probs, size_t n, double *out);

enum RdStatus rd_gate(const double *probs,
                      size_t n,
                      size_t label,
                      double eta,
                      struct RdGateDecision *out);

enum RdStatus rd_efficiency(uint64_t participations,
                            uint64_t epochs,
                            uint64_t samples,
                            struct RdEfficiency *out);

// Trains `model` in place with gate rate `alpha` (`INFINITY` for
// conventional training). `test` may be null. Either output may be null.
enum RdStatus rd_train_teacher(struct RdModel *model,
                               const struct RdDataset *train,
                               const struct RdDataset *test,
                               double alpha,
                               const struct RdTrainOptions *options,
                               struct RdLedger **ledger_out,
                               struct RdReport **report_out);

// Class-wise min-max normalised participation counts.
enum RdStatus rd_significance(const struct RdLedger *ledger,
                              const struct RdDataset *dataset,
                              struct RdTable **out);

// Distils the frozen `teacher` into `student`. `table` is required for the
// significance and hybrid modes and must be null otherwise.
enum RdStatus rd_distill(const struct RdModel *teacher,
                         struct RdModel *student,
                         const struct RdDataset *train,
                         const struct RdDataset *test,
                         const struct RdDistillOptions *options,
                         const struct RdTable *table,
                         struct RdLedger **ledger_out,
                         struct RdReport **report_out);

// Fraction of samples whose largest logit is the label.
enum RdStatus rd_evaluate(const struct RdModel *model,
                          const struct RdDataset *dataset,
                          double *accuracy);

size_t rd_ledger_len(const struct RdLedger *ledger);

size_t rd_ledger_epochs(const struct RdLedger *ledger);

uint64_t rd_ledger_total(const struct RdLedger *ledger);

// Copies the per-sample counts into `out`, which must hold `len` entries.
enum RdStatus rd_ledger_counts(const struct RdLedger *ledger, uint64_t *out, size_t len);

enum RdStatus rd_ledger_save(const struct RdLedger *ledger, const char *path);

enum RdStatus rd_ledger_load(const char *path, struct RdLedger **out);

void rd_ledger_free(struct RdLedger *ledger);

size_t rd_table_len(const struct RdTable *table);

enum RdStatus rd_table_values(const struct RdTable *table, double *out, size_t len);

enum RdStatus rd_table_save(const struct RdTable *table, const char *path);

enum RdStatus rd_table_load(const char *path, struct RdTable **out);

void rd_table_free(struct RdTable *table);

enum RdStatus rd_report_efficiency(const struct RdReport *report, struct RdEfficiency *out);

// Fails with `Config` when the run had no test set.
enum RdStatus rd_report_test_accuracy(const struct RdReport *report, double *out);

// The report as JSON; release with `rd_string_free`.
char *rd_report_json(const struct RdReport *report);

enum RdStatus rd_report_save(const struct RdReport *report, const char *path);

void rd_report_free(struct RdReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGDISTILL_H */
