#include "usema/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usema/rng.hpp"

namespace usema {
namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

Evaluation evaluate(const std::function<Var<double>()>& loss) {
  NoGradGuard guard;
  BranchTrace trace;
  const Var<double> out = loss();
  if (out.value().numel() != 1) {
    throw DimensionError("grad_check: loss must be scalar, got " + shape_str(out.shape()));
  }
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw EvaluationError("grad_check: non-finite loss value");
  return {v, trace.digest()};
}

}  // namespace

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::int64_t GradCheckReport::coords_checked() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.coords_checked;
  return n;
}

std::int64_t GradCheckReport::kinks_skipped() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.kinks_skipped;
  return n;
}

GradCheckReport grad_check(const std::function<Var<double>()>& loss,
                           const std::vector<NamedLeaf>& leaves,
                           const GradCheckOptions& options) {
  for (const auto& [name, leaf] : leaves) {
    leaf.node()->grad = Tensor<double>();
    if (!leaf.requires_grad()) {
      throw EvaluationError("grad_check: leaf '" + name + "' does not require grad");
    }
  }
  {
    const Var<double> out = loss();
    if (!std::isfinite(out.value()[0])) {
      throw EvaluationError("grad_check: non-finite loss value");
    }
    backward(out);
  }

  Rng rng(options.seed);
  GradCheckReport report;
  for (const auto& [name, leaf] : leaves) {
    Var<double> v = leaf;
    Tensor<double> analytic =
        leaf.grad().empty() ? Tensor<double>(leaf.shape()) : leaf.grad();
    const std::int64_t n = v.value().numel();
    std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords > 0 && options.max_coords < n) {
      rng.shuffle(coords);
      coords.resize(static_cast<std::size_t>(options.max_coords));
      std::sort(coords.begin(), coords.end());
    }
    GradCheckEntry entry{name};
    double an2 = 0.0, nn2 = 0.0;
    for (auto i : coords) {
      double& x = v.mutable_value()[i];
      const double saved = x;
      x = saved + options.step;
      const Evaluation up = evaluate(loss);
      x = saved - options.step;
      const Evaluation down = evaluate(loss);
      x = saved;
      if (options.skip_kinks && up.branches != down.branches) {
        ++entry.kinks_skipped;
        continue;
      }
      ++entry.coords_checked;
      const double numeric = (up.value - down.value) / (2.0 * options.step);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_eps});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
      an2 += a * a;
      nn2 += numeric * numeric;
    }
    entry.analytic_norm = std::sqrt(an2);
    entry.numeric_norm = std::sqrt(nn2);
    report.entries.push_back(std::move(entry));
  }
  for (const auto& [name, leaf] : leaves) leaf.node()->grad = Tensor<double>();
  return report;
}

GradCheckReport grad_check(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
    const std::vector<Tensor<double>>& inputs, const GradCheckOptions& options) {
  std::vector<NamedLeaf> leaves;
  std::vector<Var<double>> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.emplace_back(inputs[i], true);
    leaves.emplace_back("input" + std::to_string(i), vars.back());
  }
  return grad_check([&] { return f(vars); }, leaves, options);
}

}  // namespace usema
