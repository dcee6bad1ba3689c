#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "usema/autodiff.hpp"

namespace usema {

struct GradCheckOptions {
  double step = 1e-5;          // central-difference h
  // Floor of the relative-error denominator.
  double denominator_eps = 1e-12;
  // Skips coordinates whose +h and -h evaluations take different leaky_relu
  // branches: the central difference there straddles a kink.
  bool skip_kinks = true;
  // Coordinates checked per input; 0 checks every coordinate. Sampled
  // coordinates are drawn deterministically from `seed`.
  std::int64_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;  // max over coordinates of |a-n| / max(|a|, |n|, eps)
  double analytic_norm = 0.0;  // L2 over the checked coordinates
  double numeric_norm = 0.0;
  std::int64_t coords_checked = 0;
  std::int64_t kinks_skipped = 0;  // not counted in coords_checked
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  std::int64_t coords_checked() const;
  std::int64_t kinks_skipped() const;
  bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

using NamedLeaf = std::pair<std::string, Var<double>>;

// Compares reverse-mode gradients of the scalar `loss()` with respect to each
// leaf against central differences. Leaf values are perturbed in place and
// restored. Throws EvaluationError if the loss is non-finite.
GradCheckReport grad_check(const std::function<Var<double>()>& loss,
                           const std::vector<NamedLeaf>& leaves,
                           const GradCheckOptions& options = {});

// Convenience form: `f` receives fresh leaves built from `inputs`.
GradCheckReport grad_check(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
    const std::vector<Tensor<double>>& inputs, const GradCheckOptions& options = {});

}  // namespace usema
