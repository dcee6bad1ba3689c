#include "usema/optim.hpp"

#include <cmath>
#include <numbers>

namespace usema {

template <typename T>
void adamw_update(Tensor<T>& p, const Tensor<T>& grad, AdamMoments<T>& moments, std::int64_t t,
                  const AdamWOptions& o) {
  if (!grad.empty()) require_same_shape(p.shape(), grad.shape(), "adamw");
  if (moments.m.empty()) {
    moments.m = Tensor<T>(p.shape());
    moments.v = Tensor<T>(p.shape());
  }
  if (t < 1) throw ValidationError("adamw: step index must be >= 1");
  const double c1 = 1.0 - std::pow(o.beta1, double(t));
  const double c2 = 1.0 - std::pow(o.beta2, double(t));
  const double decay = 1.0 - o.lr * o.weight_decay;
  T* pp = p.ptr();
  T* pm = moments.m.ptr();
  T* pv = moments.v.ptr();
  const T* pg = grad.empty() ? nullptr : grad.ptr();
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    const double g = pg ? double(pg[i]) : 0.0;
    const double m = o.beta1 * double(pm[i]) + (1.0 - o.beta1) * g;
    const double v = o.beta2 * double(pv[i]) + (1.0 - o.beta2) * g * g;
    pm[i] = static_cast<T>(m);
    pv[i] = static_cast<T>(v);
    const double decayed = double(pp[i]) * decay;
    pp[i] = static_cast<T>(decayed - o.lr * (m / c1) / (std::sqrt(v / c2) + o.eps));
  }
}

template <typename T>
AdamW<T>::AdamW(ParamSet<T>& params, AdamWOptions options)
    : params_(&params), options_(options), moments_(params.size()) {}

template <typename T>
void AdamW<T>::step() {
  ++step_;
  auto& entries = params_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var<T> p = entries[i].second;
    adamw_update(p.mutable_value(), p.grad(), moments_[i], step_, options_);
  }
}

double cosine_lr(std::int64_t epoch, std::int64_t t_max, double lr0, double eta_min) {
  if (t_max < 1) throw ConfigError("cosine_lr: T_max must be >= 1");
  const double phase = double(epoch % t_max) / double(t_max);
  return eta_min + (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
}

template class AdamW<float>;
template class AdamW<double>;
template void adamw_update(Tensor<float>&, const Tensor<float>&, AdamMoments<float>&,
                           std::int64_t, const AdamWOptions&);
template void adamw_update(Tensor<double>&, const Tensor<double>&, AdamMoments<double>&,
                           std::int64_t, const AdamWOptions&);

}  // namespace usema
