#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "regdistill.h"

#define CHECK(call)                                                       \
  do {                                                                    \
    RdStatus s_ = (call);                                                 \
    if (s_ != RD_STATUS_OK) {                                             \
      fprintf(stderr, "%s failed (%d): %s\n", #call, s_, rd_last_error()); \
      return 1;                                                           \
    }                                                                     \
  } while (0)

int main(void) {
  RdDataset *train = NULL, *test = NULL;
  CHECK(rd_dataset_blobs(3, 40, 3, 6.0, 7, &train));
  CHECK(rd_dataset_blobs(3, 20, 3, 6.0, 8, &test));

  size_t shape[1] = {3};
  RdModel *teacher = NULL, *student = NULL;
  CHECK(rd_model_new("mlp:16", shape, 1, 3, 7, &teacher));
  CHECK(rd_model_new("mlp:4", shape, 1, 3, 8, &student));

  RdTrainOptions opts = {.epochs = 5, .batch_size = 16, .lr = 0.01, .seed = 7, .shard_size = 0};
  RdLedger *ledger = NULL;
  CHECK(rd_train_teacher(teacher, train, test, 0.05, &opts, &ledger, NULL));
  if (rd_ledger_len(ledger) != 120 || rd_ledger_epochs(ledger) != 5) return 1;

  RdTable *table = NULL;
  CHECK(rd_significance(ledger, train, &table));

  RdDistillOptions d = {.mode = RD_MODE_HYBRID, .tau = 20.0, .lambda = 0.3,
                        .alpha = 0.05, .tau_squared = false, .train = opts};
  RdReport *report = NULL;
  CHECK(rd_distill(teacher, student, train, test, &d, table, NULL, &report));
  RdEfficiency eff;
  CHECK(rd_report_efficiency(report, &eff));
  if (eff.available != 600 || eff.zeta < 0.0 || eff.zeta > 1.0) return 1;

  char *json = rd_report_json(report);
  if (json == NULL) return 1;
  rd_string_free(json);

  double acc = -1.0;
  CHECK(rd_evaluate(student, test, &acc));

  double bad = 0.0;
  if (rd_threshold(-1.0, 3, &bad) != RD_STATUS_CONFIG) return 1;
  if (rd_last_error()[0] == '\0') return 1;
  if (rd_model_forward(NULL, NULL, 0, NULL, 0) != RD_STATUS_NULL_POINTER) return 1;


  printf("%s %.6f %.6f\n", rd_version(), acc, eff.zeta);

  rd_report_free(report);
  rd_table_free(table);
  rd_ledger_free(ledger);
  rd_model_free(student);
  rd_model_free(teacher);
  rd_dataset_free(test);
  rd_dataset_free(train);
  return 0;
}
