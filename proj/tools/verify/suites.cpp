#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "oracles.hpp"
#include "usema/attention.hpp"
#include "usema/errors.hpp"
#include "usema/gradcheck.hpp"
#include "usema/losses.hpp"
#include "usema/mamba.hpp"
#include "usema/metrics.hpp"
#include "usema/ops.hpp"
#include "usema/optim.hpp"
#include "usema/sema_block.hpp"
#include "usema/usema_net.hpp"

namespace usema::verify {
namespace {

using attention::AttentionInputs;

Tensor<double> random_tensor(Rng& rng, Shape shape, double stddev = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double e = std::abs(a[i] - b[i]);
    if (!(e <= m)) m = e;  // NaN propagates as a failure
  }
  return m;
}

// Running maximum of one named error.
struct Tracker {
  Check check;
  explicit Tracker(std::string name, double tol) : check{std::move(name), 0.0, tol} {}
  void observe(double e) {
    if (!(e <= check.error)) check.error = e;
  }
};

// Columns [c0, c0 + width) of row-major [n x d] rows starting at `src`.
Tensor<double> columns(const double* src, std::int64_t n, std::int64_t d, std::int64_t c0,
                       std::int64_t width) {
  Tensor<double> out({n, width});
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < width; ++c) out[r * width + c] = src[r * d + c0 + c];
  return out;
}

// Dot product of x rotated to position m with y rotated to position j.
double rotated_dot(const Tensor<double>& x, const Tensor<double>& y, std::int64_t m,
                   std::int64_t j) {
  const std::int64_t d = x.dim(1);
  const std::int64_t n = std::max(m, j) + 1;
  Tensor<double> xs({n, d}), ys({n, d});
  std::copy(x.ptr(), x.ptr() + d, xs.ptr() + m * d);
  std::copy(y.ptr(), y.ptr() + d, ys.ptr() + j * d);
  const auto rx = attention::rope_apply(xs);
  const auto ry = attention::rope_apply(ys);
  double dot = 0.0;
  for (std::int64_t c = 0; c < d; ++c) dot += rx[m * d + c] * ry[j * d + c];
  return dot;
}

}  // namespace

bool SuiteResult::passed() const { return first_failure() == nullptr; }

const Check* SuiteResult::first_failure() const {
  for (const auto& c : checks)
    if (!c.passed()) return &c;
  return nullptr;
}

void SuiteResult::print(std::ostream& out) const {
  char line[256];
  for (const auto& c : checks) {
    std::snprintf(line, sizeof line, "%-6s %-10s %-36s max_err %.3e  tol %.1e",
                  c.passed() ? "ok" : "FAILED", suite.c_str(), c.name.c_str(), c.error,
                  c.tolerance);
    out << line;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << "\n";
  }
}

SuiteResult attention_suite(std::uint64_t seed, int instances) {
  Rng rng(seed);
  Tracker window("window_vs_masked_full", 1e-10);
  Tracker window_weights("window_weights_rows_stochastic", 1e-12);
  Tracker composition("sema_minus_window_is_value_mean", 1e-12);
  Tracker full("sema_full_window_vs_full_plus_mean", 1e-10);
  Tracker full_oracle("full_vs_unmasked_oracle", 1e-10);
  Tracker scaled("unscaled_window_vs_oracle", 1e-10);
  const std::int64_t widths[] = {1, 3, 4, 16, 0};  // 0 stands for w = n
  for (int t = 0; t < instances; ++t) {
    const auto n = static_cast<std::int64_t>(1 + rng.below(64));
    const auto d = static_cast<std::int64_t>(1 + rng.below(16));
    std::int64_t w = widths[t % 5];
    if (w == 0) w = n;
    AttentionInputs<double> in{random_tensor(rng, {n, d}), random_tensor(rng, {n, d}),
                               random_tensor(rng, {n, d})};
    const double s = attention::default_scale<double>(d);
    const auto win = attention::window_attention(in, w);
    window.observe(max_abs_diff(win, oracle::masked_window_attention(in.q, in.k, in.v, w, s)));
    scaled.observe(max_abs_diff(attention::window_attention(in, w, std::optional<double>(1.0)),
                                oracle::masked_window_attention(in.q, in.k, in.v, w, 1.0)));

    const auto weights = attention::window_weights(in, w);
    for (std::int64_t r = 0; r < n; ++r) {
      double total = 0.0;
      for (std::int64_t c = 0; c < n; ++c) total += weights[r * n + c];
      window_weights.observe(std::abs(total - 1.0));
    }

    const auto sema = attention::sema_attention(in, w);
    const auto mean = oracle::column_mean_broadcast(in.v);
    for (std::int64_t i = 0; i < n * d; ++i)
      composition.observe(std::abs((sema[i] - win[i]) - mean[i]));

    const auto wide = attention::sema_attention(in, n + static_cast<std::int64_t>(rng.below(8)));
    const auto dense = attention::full_attention(in);
    Tensor<double> expect(dense.shape());
    for (std::int64_t i = 0; i < n * d; ++i) expect[i] = dense[i] + mean[i];
    full.observe(max_abs_diff(wide, expect));
    full_oracle.observe(
        max_abs_diff(dense, oracle::masked_window_attention(in.q, in.k, in.v, n, s)));
  }

  // Batched multi-head forms against the single-head oracle, head by head.
  Tracker multi_window("multihead_window_vs_oracle", 1e-10);
  Tracker multi_full("multihead_full_vs_oracle", 1e-10);
  Tracker multi_sema("multihead_sema_vs_oracle", 1e-10);
  for (int t = 0; t < 20; ++t) {
    const std::int64_t batch = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t heads = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t hd = 1 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t d = heads * hd;
    const auto n = static_cast<std::int64_t>(1 + rng.below(40));
    const std::int64_t w = widths[t % 4];
    const double s = 1.0 / std::sqrt(static_cast<double>(hd));
    const auto q = constant(random_tensor(rng, {batch, n, d}));
    const auto k = constant(random_tensor(rng, {batch, n, d}));
    const auto v = constant(random_tensor(rng, {batch, n, d}));
    const auto yw = attention::window_attention(q, k, v, heads, w, s).value();
    const auto yf = attention::full_attention(q, k, v, heads, s).value();
    const auto ys = attention::sema_attention(q, k, v, heads, w, s).value();
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t off = b * n * d;
      for (std::int64_t h = 0; h < heads; ++h) {
        const auto qh = columns(q.value().ptr() + off, n, d, h * hd, hd);
        const auto kh = columns(k.value().ptr() + off, n, d, h * hd, hd);
        const auto vh = columns(v.value().ptr() + off, n, d, h * hd, hd);
        const auto ow = oracle::masked_window_attention(qh, kh, vh, w, s);
        const auto of = oracle::masked_window_attention(qh, kh, vh, n, s);
        const auto mean = oracle::column_mean_broadcast(vh);
        for (std::int64_t r = 0; r < n; ++r)
          for (std::int64_t c = 0; c < hd; ++c) {
            const std::int64_t at = off + r * d + h * hd + c;
            const std::int64_t o = r * hd + c;
            multi_window.observe(std::abs(yw[at] - ow[o]));
            multi_full.observe(std::abs(yf[at] - of[o]));
            multi_sema.observe(std::abs(ys[at] - (ow[o] + mean[o])));
          }
      }
    }
  }

  // Rotary embedding: q.k after rotation depends only on the offset and norms are kept.
  Tracker rope_offset("rope_relative_position", 1e-10);
  Tracker rope_norm("rope_preserves_norm", 1e-10);
  for (int t = 0; t < 20; ++t) {
    const std::int64_t d = 2 * (1 + static_cast<std::int64_t>(rng.below(8)));
    const auto x = random_tensor(rng, {1, d});
    const auto y = random_tensor(rng, {1, d});
    const auto m = static_cast<std::int64_t>(rng.below(50));
    const auto j = static_cast<std::int64_t>(rng.below(50));
    const auto shift = static_cast<std::int64_t>(rng.below(50));
    rope_offset.observe(std::abs(rotated_dot(x, y, m, j) - rotated_dot(x, y, m + shift, j + shift)));
    rope_norm.observe(std::abs(rotated_dot(x, x, m, m) - rotated_dot(x, x, 0, 0)));
  }

  return {"attention",
          {window.check, scaled.check, window_weights.check, composition.check, full.check,
           full_oracle.check, multi_window.check, multi_full.check, multi_sema.check,
           rope_offset.check, rope_norm.check}};
}

SuiteResult mamba_suite(std::uint64_t seed, int instances) {
  Rng rng(seed);
  Tracker scan_unrolled("scan_vs_unrolled", 1e-10);
  Tracker scan_oracle("scan_vs_loop_oracle", 1e-10);
  Tracker terms("unrolled_terms_reconstruct", 1e-10);
  Tracker bound("forgetting_weight_above_a_pow", 0.0);
  Tracker contribution("forgetting_contribution_bound", 1e-12);
  for (int t = 0; t < instances; ++t) {
    const auto n = static_cast<std::int64_t>(1 + rng.below(32));
    const auto d = static_cast<std::int64_t>(1 + rng.below(8));
    const double a = rng.uniform(0.5, 0.99);
    const auto params = mamba::random_params(rng, n, d, 0.0, a);
    const auto x = random_tensor(rng, {n, d});
    const auto ys = mamba::scan(x, params);
    scan_unrolled.observe(max_abs_diff(ys, mamba::unrolled(x, params)));
    scan_oracle.observe(max_abs_diff(ys, oracle::mamba_scan(x, params)));
    const auto tm = mamba::unrolled_terms(x, params);
    terms.observe(max_abs_diff(ys, mamba::reconstruct(tm)));

    // Every A entry <= a, so prod A <= a^(m-i) entrywise and the key-value term
    // injected at i is at most a^(m-i) times its undecayed size.
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n)));
    const auto profile = mamba::forgetting_profile(params, m);
    for (std::int64_t i = 1; i <= m; ++i) {
      const double cap = std::pow(a, static_cast<double>(m - i));
      for (std::int64_t e = 0; e < d * d; ++e) {
        const double wgt = profile.weights[(i - 1) * d * d + e];
        bound.observe(std::max(0.0, wgt - cap * (1.0 + 1e-12)));
        const auto& s = params.steps[static_cast<std::size_t>(i - 1)];
        const std::int64_t r = e / d, c = e % d;
        const double fresh = std::abs(s.b[r] * s.delta[c] * x[(i - 1) * d + c]);
        const double kv = std::abs(tm.kv[((m - 1) * n + (i - 1)) * d * d + e]);
        contribution.observe(std::max(0.0, kv - cap * fresh * (1.0 + 1e-12)));
      }
    }
  }
  return {"mamba",
          {scan_unrolled.check, scan_oracle.check, terms.check, bound.check, contribution.check}};
}

namespace {

using Vars = std::vector<Var<double>>;
using Fn = std::function<Var<double>(const Vars&)>;

// Reduces an arbitrary-shape output to a well-conditioned scalar.
Var<double> project(const Var<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(y.shape());
  for (auto& v : w.data()) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return weighted_sum(y, w);
}

std::string worst_leaf(const GradCheckReport& rep) {
  const auto it = std::max_element(rep.entries.begin(), rep.entries.end(),
                                   [](const auto& a, const auto& b) {
                                     return a.max_rel_error < b.max_rel_error;
                                   });
  return it == rep.entries.end() ? std::string() : it->name;
}

struct OpCase {
  std::string name;
  Fn f;
  std::vector<Tensor<double>> inputs;
};

constexpr double kTol = 1e-4;
// Central differences carry roundoff near 1e-11 |loss| / h, so relative error
// is measured against max(|a|, |n|, 1e-6) for losses of order one.
constexpr double kDenominatorFloor = 1e-6;
// Guard against a degenerate check in which most coordinates straddle a kink.
constexpr double kMaxKinkFraction = 0.25;

void add_report(SuiteResult& result, const std::string& name, const GradCheckReport& rep) {
  result.checks.push_back({name, rep.max_rel_error(), kTol, worst_leaf(rep)});
  const auto skipped = rep.kinks_skipped();
  if (skipped > 0) {
    const double total = static_cast<double>(skipped + rep.coords_checked());
    result.checks.push_back({name + "_kink_share", static_cast<double>(skipped) / total,
                             kMaxKinkFraction,
                             std::to_string(skipped) + " of " +
                                 std::to_string(skipped + rep.coords_checked()) + " skipped"});
  }
}

Tensor<double> away_from_zero(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(0.1, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return t;
}

}  // namespace

SuiteResult grads_suite(std::uint64_t seed) {
  Rng rng(seed);
  auto g = [&](Shape s) { return random_tensor(rng, std::move(s)); };
  std::vector<OpCase> cases;
  cases.push_back({"add", [](const Vars& v) { return project(add(v[0], v[1]), 1); }, {g({3, 4}), g({3, 4})}});
  cases.push_back({"sub", [](const Vars& v) { return project(sub(v[0], v[1]), 2); }, {g({3, 4}), g({3, 4})}});
  cases.push_back({"mul", [](const Vars& v) { return project(mul(v[0], v[1]), 3); }, {g({3, 4}), g({3, 4})}});
  cases.push_back({"scale", [](const Vars& v) { return project(scale(v[0], -1.7), 4); }, {g({5})}});
  cases.push_back({"matmul", [](const Vars& v) { return project(matmul(v[0], v[1]), 5); }, {g({3, 5}), g({5, 2})}});
  cases.push_back({"linear", [](const Vars& v) { return project(linear(v[0], v[1], v[2]), 6); },
                   {g({2, 3, 4}), g({4, 5}), g({5})}});
  cases.push_back({"sum", [](const Vars& v) { return sum(mul(v[0], v[0])); }, {g({3, 3})}});
  cases.push_back({"mean", [](const Vars& v) { return mean(mul(v[0], v[0])); }, {g({3, 3})}});
  cases.push_back({"reshape", [](const Vars& v) { return project(reshape(v[0], {6, 2}), 7); }, {g({3, 4})}});
  cases.push_back({"image_to_tokens", [](const Vars& v) { return project(image_to_tokens(v[0]), 8); }, {g({2, 3, 2, 4})}});
  cases.push_back({"tokens_to_image", [](const Vars& v) { return project(tokens_to_image(v[0], 2, 3), 9); }, {g({2, 6, 3})}});
  cases.push_back({"concat_channels", [](const Vars& v) { return project(concat_channels(v[0], v[1]), 10); },
                   {g({2, 2, 3, 3}), g({2, 3, 3, 3})}});
  cases.push_back({"slice_last", [](const Vars& v) { return project(slice_last(v[0], 1, 3), 11); }, {g({2, 3, 5})}});
  cases.push_back({"softmax_rows", [](const Vars& v) { return project(softmax_rows(v[0]), 12); }, {g({4, 6})}});
  cases.push_back({"conv2d", [](const Vars& v) { return project(conv2d(v[0], v[1], v[2], {1, 1, 1}), 13); },
                   {g({2, 3, 5, 5}), g({4, 3, 3, 3}), g({4})}});
  cases.push_back({"conv2d_stride2", [](const Vars& v) { return project(conv2d(v[0], v[1], v[2], {2, 1, 1}), 14); },
                   {g({1, 2, 6, 6}), g({3, 2, 3, 3}), g({3})}});
  cases.push_back({"conv2d_depthwise", [](const Vars& v) { return project(conv2d(v[0], v[1], Var<double>(), {1, 1, 4}), 15); },
                   {g({2, 4, 4, 4}), g({4, 1, 3, 3})}});
  cases.push_back({"conv_transpose2d", [](const Vars& v) { return project(conv_transpose2d(v[0], v[1], v[2], 2, 0), 16); },
                   {g({2, 3, 3, 3}), g({3, 2, 2, 2}), g({2})}});
  cases.push_back({"instance_norm", [](const Vars& v) { return project(instance_norm(v[0], v[1], v[2]), 17); },
                   {g({2, 3, 4, 4}), g({3}), g({3})}});
  cases.push_back({"layer_norm", [](const Vars& v) { return project(layer_norm(v[0], v[1], v[2]), 18); },
                   {g({3, 6}), g({6}), g({6})}});
  cases.push_back({"leaky_relu", [](const Vars& v) { return project(leaky_relu(v[0]), 19); }, {away_from_zero(rng, {4, 5})}});
  cases.push_back({"silu", [](const Vars& v) { return project(silu(v[0]), 20); }, {g({4, 5})}});
  cases.push_back({"gelu", [](const Vars& v) { return project(gelu(v[0]), 21); }, {g({4, 5})}});

  const double s = 0.5;
  cases.push_back({"window_attention", [s](const Vars& v) { return project(attention::window_attention(v[0], v[1], v[2], 2, 3, s), 22); },
                   {g({2, 7, 4}), g({2, 7, 4}), g({2, 7, 4})}});
  cases.push_back({"full_attention", [s](const Vars& v) { return project(attention::full_attention(v[0], v[1], v[2], 2, s), 23); },
                   {g({2, 5, 4}), g({2, 5, 4}), g({2, 5, 4})}});
  cases.push_back({"global_average", [](const Vars& v) { return project(attention::global_average(v[0]), 24); }, {g({2, 5, 3})}});
  cases.push_back({"sema_attention", [s](const Vars& v) { return project(attention::sema_attention(v[0], v[1], v[2], 1, 4, s), 25); },
                   {g({1, 9, 4}), g({1, 9, 4}), g({1, 9, 4})}});
  cases.push_back({"rope_apply", [](const Vars& v) { return project(attention::rope_apply(v[0], 2), 26); }, {g({2, 5, 8})}});
  cases.push_back({"cpe", [](const Vars& v) { return project(cpe(v[0], v[1]), 27); }, {g({1, 3, 4, 4}), g({3, 1, 3, 3})}});
  cases.push_back({"lepe", [](const Vars& v) { return project(lepe(v[0], v[1], 3, 4, v[2]), 28); },
                   {g({2, 12, 3}), g({2, 12, 3}), g({3, 1, 3, 3})}});

  LabelBatch labels;
  for (int b = 0; b < 2; ++b) {
    LabelGrid lg(4, 4);
    for (auto& l : lg.data) l = static_cast<std::int32_t>(rng.below(3));
    labels.push_back(lg);
  }
  const auto target = one_hot<double>(labels, 3);
  cases.push_back({"dice_loss", [target](const Vars& v) { return dice_loss(v[0], target); }, {g({2, 3, 4, 4})}});
  cases.push_back({"cross_entropy", [labels](const Vars& v) { return cross_entropy(v[0], labels); }, {g({2, 3, 4, 4})}});
  cases.push_back({"combined_ds_loss",
                   [labels](const Vars& v) {
                     return combined_ds_loss<double>({v[0], v[1]}, labels, deep_supervision_weights(2));
                   },
                   {g({2, 3, 4, 4}), g({2, 3, 2, 2})}});

  SuiteResult result{"grads", {}};
  for (const auto& c : cases) {
    GradCheckOptions opts;
    opts.denominator_eps = kDenominatorFloor;
    add_report(result, c.name, grad_check(c.f, c.inputs, opts));
  }

  // Composite blocks with their registered parameters as leaves. Zero-initialised
  // kernels are randomised so every path carries gradient.
  auto check_params = [&](const std::string& name, ParamSet<double>& ps,
                          const std::function<Var<double>()>& loss, std::int64_t max_coords) {
    std::vector<NamedLeaf> leaves;
    for (auto& [pname, var] : ps.entries()) {
      for (auto& v : var.node()->value.data()) v += rng.normal(0.0, 0.2);
      leaves.emplace_back(pname, var);
    }
    GradCheckOptions opts;
    opts.max_coords = max_coords;
    opts.seed = seed;
    opts.denominator_eps = kDenominatorFloor;
    add_report(result, name, grad_check(loss, leaves, opts));
  };

  {
    ParamSet<double> ps;
    Rng init(seed + 1);
    SemaBlockConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.window = 4;
    SemaBlock<double> block(ps, "sema", cfg, init);
    const auto x = parameter(g({1, 12, 8}));
    std::vector<NamedLeaf> leaves;
    for (auto& [pname, var] : ps.entries()) {
      for (auto& v : var.node()->value.data()) v += rng.normal(0.0, 0.2);
      leaves.emplace_back(pname, var);
    }
    leaves.emplace_back("input", x);
    GradCheckOptions opts;
    opts.max_coords = 24;
    opts.denominator_eps = kDenominatorFloor;
    add_report(result, "sema_block",
               grad_check([&] { return project(block.forward(x, 3, 4), 40); }, leaves, opts));
  }
  {
    ParamSet<double> ps;
    Rng init(seed + 2);
    ResidualBlock<double> block(ps, "res", 2, 3, init);
    const auto x = constant(g({1, 2, 5, 5}));
    check_params("residual_block", ps, [&] { return project(block.forward(x), 41); }, 0);
  }
  {
    UsemaConfig cfg;
    cfg.stages = 2;
    cfg.base_channels = 4;
    cfg.classes = 2;
    cfg.head_dim = 4;
    cfg.windows = {16};
    UsemaNet<double> net(cfg, seed + 3);
    const auto img = constant(g({1, 1, 16, 16}));
    LabelBatch lab{LabelGrid(16, 16)};
    for (auto& l : lab[0].data) l = static_cast<std::int32_t>(rng.below(2));
    const auto weights = deep_supervision_weights(static_cast<std::size_t>(cfg.stages));
    check_params(
        "usema_2stage_16x16", net.params(),
        [&] { return combined_ds_loss(net.forward(img), lab, weights); }, 64);
  }
  return result;
}

namespace {

Mask box(std::int64_t h, std::int64_t w, std::int64_t r0, std::int64_t c0, std::int64_t r1,
         std::int64_t c1) {
  Mask m(h, w);
  for (std::int64_t r = r0; r < r1; ++r)
    for (std::int64_t c = c0; c < c1; ++c) m(r, c) = 1;
  return m;
}

}  // namespace

SuiteResult metrics_suite() {
  SuiteResult result{"metrics", {}};
  auto expect = [&](std::string name, double got, double want, double tol = 1e-12) {
    const double e = std::isfinite(got) ? std::abs(got - want) : INFINITY;
    result.checks.push_back({std::move(name), e, tol});
  };
  const Mask a = box(16, 16, 2, 2, 8, 10);
  expect("dsc_identical", dsc(a, a), 1.0);
  expect("dsc_disjoint", dsc(a, box(16, 16, 10, 10, 14, 14)), 0.0);
  expect("dsc_half_overlap", dsc(box(8, 8, 0, 0, 4, 4), box(8, 8, 0, 2, 4, 6)), 0.5);
  expect("nsd_identical", nsd(a, a), 1.0);
  expect("nsd_shift_one_pixel", nsd(a, box(16, 16, 2, 3, 8, 11), 1.0), 1.0);
  expect("nsd_far_apart", nsd(box(32, 32, 0, 0, 4, 4), box(32, 32, 24, 24, 30, 30)), 0.0);

  LabelGrid inst(10, 10);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 4; ++c) inst(r, c) = 1;
  for (std::int64_t r = 6; r < 9; ++r)
    for (std::int64_t c = 6; c < 9; ++c) inst(r, c) = 2;
  expect("f1_identical", instance_f1(inst, inst), 1.0);
  expect("f1_empty_pred", instance_f1(LabelGrid(10, 10), inst), 0.0);
  // gt: a 4x5 box and a 2x2 box; pred: a 4x3 box (IoU 0.6 with the first) and
  // a spurious 2x2 box elsewhere.
  LabelGrid gt(12, 12), pred(12, 12);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 5; ++c) gt(r, c) = 1;
  for (std::int64_t r = 8; r < 10; ++r)
    for (std::int64_t c = 0; c < 2; ++c) gt(r, c) = 2;
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 3; ++c) pred(r, c) = 1;
  for (std::int64_t r = 8; r < 10; ++r)
    for (std::int64_t c = 8; c < 10; ++c) pred(r, c) = 2;
  const auto match = match_instances(pred, gt);
  expect("f1_one_match_tp", static_cast<double>(match.true_positives), 1.0);
  expect("f1_one_match_fp", static_cast<double>(match.false_positives), 1.0);
  expect("f1_one_match_fn", static_cast<double>(match.false_negatives), 1.0);
  expect("f1_one_match", match.f1, 0.5);

  expect("cosine_lr_epoch0", cosine_lr(0, 100, 1e-3), 1e-3, 0.0);
  expect("cosine_lr_midpoint", cosine_lr(50, 100, 1e-3, 1e-5), (1e-3 + 1e-5) / 2, 1e-18);
  expect("cosine_lr_restart", cosine_lr(100, 100, 1e-3), 1e-3, 0.0);
  return result;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"attention", "mamba", "grads", "metrics"};
  return names;
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "attention") return attention_suite(seed);
  if (name == "mamba") return mamba_suite(seed);
  if (name == "grads") return grads_suite(seed);
  if (name == "metrics") return metrics_suite();
  throw ConfigError("unknown suite '" + name + "' (expected attention, mamba, grads or metrics)");
}

}  // namespace usema::verify
