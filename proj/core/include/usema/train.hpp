#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "usema/config.hpp"
#include "usema/dataset.hpp"
#include "usema/metrics.hpp"
#include "usema/usema_net.hpp"

namespace usema {

struct EpochRecord {
  std::int64_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_dsc = 0.0;
  double val_nsd = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::unique_ptr<UsemaNet<float>> net;
  bool reached_target = false;
};

// Mini-batch AdamW on combined_ds_loss with the restarting cosine schedule
// applied per epoch. Sample order is reshuffled each epoch from the config seed.
// DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Header `epoch,lr,train_loss,val_dsc,val_nsd`, one row per record.
std::string history_csv(const std::vector<EpochRecord>& history);

// Argmax over classes of the finest logits, one grid per sample.
std::vector<LabelGrid> predict(const UsemaNet<float>& net, const Dataset& data,
                               std::int64_t batch_size = 4);

// Per-sample metrics of the network's predictions.
std::vector<MetricReport> evaluate(const UsemaNet<float>& net, const Dataset& data, double tau = 1.0,
                                   std::int64_t batch_size = 4);

// Caps BLAS worker threads. Results do not depend on the value.
void set_worker_threads(int threads);

}  // namespace usema
