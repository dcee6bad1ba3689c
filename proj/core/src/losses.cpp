#include "usema/losses.hpp"

#include <cmath>
#include <string>

#include "usema/ops.hpp"

namespace usema {
namespace {

struct Layout {
  std::int64_t batch, classes, pixels;
};

template <typename T>
Layout layout_of(const Var<T>& logits, const char* op) {
  if (logits.value().rank() != 4) {
    throw DimensionError(std::string(op) + ": logits must be [B, K, H, W], got " +
                         shape_str(logits.shape()));
  }
  return {logits.dim(0), logits.dim(1), logits.dim(2) * logits.dim(3)};
}

// Softmax over the class axis of [B, K, P].
template <typename T>
Tensor<T> class_softmax(const Tensor<T>& z, const Layout& L) {
  Tensor<T> p(z.shape());
  for (std::int64_t b = 0; b < L.batch; ++b) {
    const T* zb = z.ptr() + b * L.classes * L.pixels;
    T* pb = p.ptr() + b * L.classes * L.pixels;
    for (std::int64_t i = 0; i < L.pixels; ++i) {
      T mx = zb[i];
      for (std::int64_t k = 1; k < L.classes; ++k) mx = std::max(mx, zb[k * L.pixels + i]);
      T total = 0;
      for (std::int64_t k = 0; k < L.classes; ++k) {
        const T e = std::exp(zb[k * L.pixels + i] - mx);
        pb[k * L.pixels + i] = e;
        total += e;
      }
      for (std::int64_t k = 0; k < L.classes; ++k) pb[k * L.pixels + i] /= total;
    }
  }
  return p;
}

void check_labels(const LabelBatch& labels, std::int64_t batch, std::int64_t h, std::int64_t w,
                  std::int64_t classes, const char* op) {
  if (static_cast<std::int64_t>(labels.size()) != batch) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " label maps for batch " + std::to_string(batch));
  }
  for (const auto& g : labels) {
    if (g.height != h || g.width != w) {
      throw DimensionError(std::string(op) + ": label map " + std::to_string(g.height) + "x" +
                           std::to_string(g.width) + " vs logits " + std::to_string(h) + "x" +
                           std::to_string(w));
    }
    for (auto v : g.data) {
      if (v < 0 || v >= classes) {
        throw ValidationError(std::string(op) + ": label " + std::to_string(v) +
                              " outside [0, " + std::to_string(classes) + ")");
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> one_hot(const LabelBatch& labels, std::int64_t classes) {
  if (labels.empty()) throw DimensionError("one_hot: empty batch");
  const std::int64_t h = labels.front().height, w = labels.front().width;
  check_labels(labels, static_cast<std::int64_t>(labels.size()), h, w, classes, "one_hot");
  Tensor<T> t({static_cast<std::int64_t>(labels.size()), classes, h, w});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    T* tb = t.ptr() + static_cast<std::int64_t>(b) * classes * h * w;
    for (std::int64_t i = 0; i < h * w; ++i) tb[labels[b].data[static_cast<std::size_t>(i)] * h * w + i] = T{1};
  }
  return t;
}

template <typename T>
Var<T> dice_loss(const Var<T>& logits, const Tensor<T>& target, T smooth) {
  const Layout L = layout_of(logits, "dice_loss");
  if (target.shape() != logits.shape()) {
    throw DimensionError("dice_loss: target " + shape_str(target.shape()) + " vs logits " +
                         shape_str(logits.shape()));
  }
  Tensor<T> p = class_softmax(logits.value(), L);
  std::vector<double> inter(static_cast<std::size_t>(L.classes)), denom(inter.size());
  for (std::int64_t b = 0; b < L.batch; ++b)
    for (std::int64_t k = 0; k < L.classes; ++k) {
      const std::int64_t off = (b * L.classes + k) * L.pixels;
      for (std::int64_t i = 0; i < L.pixels; ++i) {
        inter[static_cast<std::size_t>(k)] += double(p[off + i]) * double(target[off + i]);
        denom[static_cast<std::size_t>(k)] += double(p[off + i]) + double(target[off + i]);
      }
    }
  double score = 0;
  for (std::int64_t k = 0; k < L.classes; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    score += (2 * inter[kk] + smooth) / (denom[kk] + smooth);
  }
  const double loss = 1.0 - score / double(L.classes);
  return record<T>(
      "dice_loss", Tensor<T>({1}, static_cast<T>(loss)), {logits},
      [p = std::move(p), target, inter, denom, L, smooth](Node<T>& self) {
        const double g = self.grad[0];
        // dL/dp per element, then the class-axis softmax Jacobian.
        std::vector<double> a(static_cast<std::size_t>(L.classes)), c(a.size());
        for (std::int64_t k = 0; k < L.classes; ++k) {
          const auto kk = static_cast<std::size_t>(k);
          const double D = denom[kk] + smooth;
          a[kk] = -g * 2.0 / (double(L.classes) * D);
          c[kk] = g * (2 * inter[kk] + smooth) / (double(L.classes) * D * D);
        }
        Tensor<T> dz(p.shape());
        std::vector<double> dp(static_cast<std::size_t>(L.classes));
        for (std::int64_t b = 0; b < L.batch; ++b) {
          const std::int64_t base = b * L.classes * L.pixels;
          for (std::int64_t i = 0; i < L.pixels; ++i) {
            double dot = 0;
            for (std::int64_t k = 0; k < L.classes; ++k) {
              const auto kk = static_cast<std::size_t>(k);
              const std::int64_t e = base + k * L.pixels + i;
              dp[kk] = a[kk] * double(target[e]) + c[kk];
              dot += dp[kk] * double(p[e]);
            }
            for (std::int64_t k = 0; k < L.classes; ++k) {
              const std::int64_t e = base + k * L.pixels + i;
              dz[e] = static_cast<T>(double(p[e]) * (dp[static_cast<std::size_t>(k)] - dot));
            }
          }
        }
        self.parents[0]->accumulate(std::move(dz));
      });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const LabelBatch& labels) {
  const Layout L = layout_of(logits, "cross_entropy");
  check_labels(labels, L.batch, logits.dim(2), logits.dim(3), L.classes, "cross_entropy");
  Tensor<T> p = class_softmax(logits.value(), L);
  const double count = double(L.batch * L.pixels);
  double total = 0;
  for (std::int64_t b = 0; b < L.batch; ++b) {
    const T* zb = logits.value().ptr() + b * L.classes * L.pixels;
    for (std::int64_t i = 0; i < L.pixels; ++i) {
      // log-sum-exp in double for the loss value.
      double mx = zb[i];
      for (std::int64_t k = 1; k < L.classes; ++k) mx = std::max(mx, double(zb[k * L.pixels + i]));
      double s = 0;
      for (std::int64_t k = 0; k < L.classes; ++k) s += std::exp(double(zb[k * L.pixels + i]) - mx);
      const auto y = labels[static_cast<std::size_t>(b)].data[static_cast<std::size_t>(i)];
      total += mx + std::log(s) - double(zb[y * L.pixels + i]);
    }
  }
  return record<T>("cross_entropy", Tensor<T>({1}, static_cast<T>(total / count)), {logits},
                   [p = std::move(p), labels, L, count](Node<T>& self) {
                     const double g = self.grad[0] / count;
                     Tensor<T> dz(p.shape());
                     for (std::int64_t b = 0; b < L.batch; ++b) {
                       const std::int64_t base = b * L.classes * L.pixels;
                       const auto& lb = labels[static_cast<std::size_t>(b)].data;
                       for (std::int64_t k = 0; k < L.classes; ++k)
                         for (std::int64_t i = 0; i < L.pixels; ++i) {
                           const std::int64_t e = base + k * L.pixels + i;
                           const double t = lb[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0;
                           dz[e] = static_cast<T>(g * (double(p[e]) - t));
                         }
                     }
                     self.parents[0]->accumulate(std::move(dz));
                   });
}

LabelGrid downsample_labels(const LabelGrid& labels, std::int64_t factor) {
  if (factor < 1 || labels.height % factor != 0 || labels.width % factor != 0) {
    throw DimensionError("downsample_labels: " + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width) + " not divisible by " +
                         std::to_string(factor));
  }
  LabelGrid out(labels.height / factor, labels.width / factor);
  for (std::int64_t r = 0; r < out.height; ++r)
    for (std::int64_t c = 0; c < out.width; ++c) out(r, c) = labels(r * factor, c * factor);
  return out;
}

std::vector<double> deep_supervision_weights(std::size_t scales) {
  std::vector<double> w(scales);
  double total = 0, v = 1;
  for (auto& x : w) {
    x = v;
    total += v;
    v *= 0.5;
  }
  for (auto& x : w) x /= total;
  return w;
}

template <typename T>
Var<T> combined_ds_loss(const std::vector<Var<T>>& logits, const LabelBatch& labels,
                        const std::vector<double>& weights) {
  if (logits.empty() || logits.size() != weights.size()) {
    throw DimensionError("combined_ds_loss: " + std::to_string(logits.size()) + " scales, " +
                         std::to_string(weights.size()) + " weights");
  }
  if (labels.empty()) throw DimensionError("combined_ds_loss: empty batch");
  Var<T> total;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const std::int64_t h = logits[s].dim(2);
    if (h < 1 || labels.front().height % h != 0) {
      throw DimensionError("combined_ds_loss: scale " + std::to_string(s) + " height " +
                           std::to_string(h) + " does not divide label height " +
                           std::to_string(labels.front().height));
    }
    const std::int64_t factor = labels.front().height / h;
    LabelBatch scaled;
    scaled.reserve(labels.size());
    for (const auto& g : labels) scaled.push_back(factor == 1 ? g : downsample_labels(g, factor));
    const std::int64_t classes = logits[s].dim(1);
    const Var<T> term =
        scale(add(dice_loss(logits[s], one_hot<T>(scaled, classes)), cross_entropy(logits[s], scaled)),
              static_cast<T>(weights[s]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

#define USEMA_INSTANTIATE(T)                                                             \
  template Tensor<T> one_hot(const LabelBatch&, std::int64_t);                           \
  template Var<T> dice_loss(const Var<T>&, const Tensor<T>&, T);                         \
  template Var<T> cross_entropy(const Var<T>&, const LabelBatch&);                       \
  template Var<T> combined_ds_loss(const std::vector<Var<T>>&, const LabelBatch&,        \
                                   const std::vector<double>&);

USEMA_INSTANTIATE(float)
USEMA_INSTANTIATE(double)
#undef USEMA_INSTANTIATE

}  // namespace usema
