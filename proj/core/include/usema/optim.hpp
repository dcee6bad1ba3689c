#pragma once

#include <cstdint>
#include <vector>

#include "usema/params.hpp"

namespace usema {

struct AdamWOptions {
  double lr = 3e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  Tensor<T> m, v;
};

// One AdamW update of p in place at 1-based step t:
//   p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
// An empty grad is treated as zero.
template <typename T>
void adamw_update(Tensor<T>& p, const Tensor<T>& grad, AdamMoments<T>& moments, std::int64_t t,
                  const AdamWOptions& options);

template <typename T>
class AdamW {
 public:
  explicit AdamW(ParamSet<T>& params, AdamWOptions options = {});

  // Consumes the current grads of every parameter.
  void step();
  void set_lr(double lr) { options_.lr = lr; }
  const AdamWOptions& options() const { return options_; }
  std::int64_t steps() const { return step_; }
  const std::vector<AdamMoments<T>>& moments() const { return moments_; }

 private:
  ParamSet<T>* params_;
  AdamWOptions options_;
  std::vector<AdamMoments<T>> moments_;
  std::int64_t step_ = 0;
};

// Restarting cosine schedule: eta_min + (lr0 - eta_min)(1 + cos(pi (epoch mod T)/T)) / 2.
double cosine_lr(std::int64_t epoch, std::int64_t t_max, double lr0, double eta_min = 0.0);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace usema
