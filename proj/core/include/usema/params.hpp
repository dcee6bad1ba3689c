#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "usema/autodiff.hpp"
#include "usema/rng.hpp"

namespace usema {

// Ordered registry of trainable leaves. Names are hierarchical ("enc.0.res0.conv1.weight")
// and stable: they are the checkpoint contract.
template <typename T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Var<T>>;

  Var<T> add(std::string name, Tensor<T> init);
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Throws ConfigError for unknown names.
  const Var<T>& get(const std::string& name) const;
  std::int64_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

// Uniform(-b, b) with b = sqrt(6 / ((1 + a^2) * fan_in)); a = sqrt(5) gives
// b = 1/sqrt(fan_in).
template <typename T>
Tensor<T> kaiming_uniform(Rng& rng, Shape shape, std::int64_t fan_in, double a = 2.2360679774997896);

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace usema
