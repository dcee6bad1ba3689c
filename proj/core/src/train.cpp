#include "usema/train.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numeric>

#include "usema/losses.hpp"
#include "usema/ops.hpp"
#include "usema/optim.hpp"

namespace usema {
namespace {

Var<float> stack_images(const Dataset& data, const std::vector<std::size_t>& order,
                        std::size_t begin, std::size_t end) {
  const Shape& s = data.samples[order[begin]].image.shape();
  Tensor<float> batch({static_cast<std::int64_t>(end - begin), s[0], s[1], s[2]});
  const std::int64_t per = shape_numel(s);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& img = data.samples[order[i]].image;
    std::copy(img.ptr(), img.ptr() + per, batch.ptr() + static_cast<std::int64_t>(i - begin) * per);
  }
  return constant(std::move(batch));
}

void check_dataset(const Dataset& data, const UsemaConfig& model, const char* which) {
  data.validate();
  const Shape& s = data.samples.front().image.shape();
  if (s[0] != model.in_channels) {
    throw DataError(std::string(which) + " images have " + std::to_string(s[0]) +
                    " channels, config expects " + std::to_string(model.in_channels));
  }
  if (data.label_count() > model.classes) {
    throw DataError(std::string(which) + " labels reach " + std::to_string(data.label_count() - 1) +
                    " but config has " + std::to_string(model.classes) + " classes");
  }
  try {
    model.validate_input(s[1], s[2]);
  } catch (const ConfigError& e) {
    throw DataError(std::string(which) + " images: " + e.what());
  }
}

}  // namespace

std::vector<LabelGrid> predict(const UsemaNet<float>& net, const Dataset& data,
                               std::int64_t batch_size) {
  NoGradGuard no_grad;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabelGrid> out;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(batch_size));
    const auto logits = net.forward(stack_images(data, order, b, e)).front();
    const std::int64_t K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(e - b); ++i) {
      LabelGrid g(H, W);
      const float* z = logits.value().ptr() + i * K * H * W;
      for (std::int64_t p = 0; p < H * W; ++p) {
        std::int32_t best = 0;
        for (std::int64_t k = 1; k < K; ++k) {
          if (z[k * H * W + p] > z[best * H * W + p]) best = static_cast<std::int32_t>(k);
        }
        g.data[static_cast<std::size_t>(p)] = best;
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

std::vector<MetricReport> evaluate(const UsemaNet<float>& net, const Dataset& data, double tau,
                                   std::int64_t batch_size) {
  const auto preds = predict(net, data, batch_size);
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    reports.push_back(evaluate_segmentation(preds[i], data.samples[i].labels,
                                            static_cast<std::int32_t>(net.config().classes), tau));
  }
  return reports;
}

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  TrainResult result;
  result.net = std::make_unique<UsemaNet<float>>(config.model, config.seed);
  if (config.epochs == 0) return result;
  check_dataset(train_set, config.model, "train");
  if (val_set.size() > 0) check_dataset(val_set, config.model, "val");

  UsemaNet<float>& net = *result.net;
  AdamW<float> opt(net.params(), config.optim);
  Rng shuffle_rng = Rng(config.seed).split();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.t_max, config.optim.lr, config.eta_min);
    opt.set_lr(lr);
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      LabelBatch labels;
      for (std::size_t i = b; i < e; ++i) labels.push_back(train_set.samples[order[i]].labels);
      const auto logits = net.forward(stack_images(train_set, order, b, e));
      const Var<float> loss =
          combined_ds_loss(logits, labels, deep_supervision_weights(logits.size()));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw DivergenceError(static_cast<int>(epoch + 1),
                              "non-finite training loss at epoch " + std::to_string(epoch + 1));
      }
      net.params().zero_grad();
      backward(loss);
      opt.step();
      loss_sum += value;
      ++batches;
    }
    EpochRecord rec{epoch + 1, lr, loss_sum / double(batches), std::nan(""), std::nan("")};
    if (val_set.size() > 0) {
      const MetricReport m = mean_report(evaluate(net, val_set, config.nsd_tau));
      rec.val_dsc = m.dsc;
      rec.val_nsd = m.nsd;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.target_val_dsc > 0 && rec.val_dsc >= config.target_val_dsc) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_dsc,val_nsd\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.6f,%.6f\n", static_cast<long long>(r.epoch),
                  r.lr, r.train_loss, r.val_dsc, r.val_nsd);
    out += buf;
  }
  return out;
}

void set_worker_threads(int threads) { Eigen::setNbThreads(std::max(1, threads)); }

}  // namespace usema
