#include "usema/params.hpp"

#include <cmath>

namespace usema {

template <typename T>
Var<T> ParamSet<T>::add(std::string name, Tensor<T> init) {
  for (const auto& e : entries_) {
    if (e.first == name) throw ConfigError("duplicate parameter name " + name);
  }
  Var<T> v(std::move(init), true);
  entries_.emplace_back(std::move(name), v);
  return v;
}

template <typename T>
const Var<T>& ParamSet<T>::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw ConfigError("unknown parameter " + name);
}

template <typename T>
std::int64_t ParamSet<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.second.value().numel();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
Tensor<T> kaiming_uniform(Rng& rng, Shape shape, std::int64_t fan_in, double a) {
  const double bound = std::sqrt(6.0 / ((1.0 + a * a) * static_cast<double>(fan_in)));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template class ParamSet<float>;
template class ParamSet<double>;
template Tensor<float> kaiming_uniform(Rng&, Shape, std::int64_t, double);
template Tensor<double> kaiming_uniform(Rng&, Shape, std::int64_t, double);

}  // namespace usema
