#include "usema/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace usema {
namespace {

void require_same(const Grid<std::uint8_t>& a, const Grid<std::uint8_t>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": masks " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " and " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
  }
}

std::int64_t count(const Mask& m) {
  std::int64_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line of f.
void edt_1d(const double* f, double* d, std::int64_t n, std::vector<std::int64_t>& v,
            std::vector<double>& z) {
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n + 1), 0.0);
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const std::int64_t p = v[static_cast<std::size_t>(k)];
      s = ((f[q] + double(q * q)) - (f[p] + double(p * p))) / double(2 * (q - p));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -kInf : s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j + 1)] < double(q)) ++j;
    const std::int64_t p = v[static_cast<std::size_t>(j)];
    d[q] = double((q - p) * (q - p)) + f[p];
  }
}

// Fraction of `from`'s set pixels whose squared distance in `dist` is <= tau^2.
double within(const Mask& from, const std::vector<double>& dist, double tau) {
  std::int64_t total = 0, close = 0;
  for (std::size_t i = 0; i < from.data.size(); ++i) {
    if (!from.data[i]) continue;
    ++total;
    close += dist[i] <= tau * tau;
  }
  return total == 0 ? 1.0 : static_cast<double>(close) / static_cast<double>(total);
}

}  // namespace

double dsc(const Mask& pred, const Mask& gt) {
  require_same(pred, gt, "dsc");
  std::int64_t inter = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    inter += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

Mask boundary(const Mask& mask) {
  Mask out(mask.height, mask.width);
  const std::int64_t H = mask.height, W = mask.width;
  for (std::int64_t r = 0; r < H; ++r) {
    for (std::int64_t c = 0; c < W; ++c) {
      if (!mask(r, c)) continue;
      const bool interior = r > 0 && r + 1 < H && c > 0 && c + 1 < W && mask(r - 1, c) &&
                            mask(r + 1, c) && mask(r, c - 1) && mask(r, c + 1);
      out(r, c) = !interior;
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(const Mask& mask) {
  const std::int64_t H = mask.height, W = mask.width;
  std::vector<double> f(static_cast<std::size_t>(H * W));
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = mask.data[i] ? 0.0 : kInf;
  std::vector<std::int64_t> v;
  std::vector<double> z;
  std::vector<double> line(static_cast<std::size_t>(std::max(H, W)));
  std::vector<double> out(line.size());
  for (std::int64_t c = 0; c < W; ++c) {
    for (std::int64_t r = 0; r < H; ++r) line[static_cast<std::size_t>(r)] = f[static_cast<std::size_t>(r * W + c)];
    edt_1d(line.data(), out.data(), H, v, z);
    for (std::int64_t r = 0; r < H; ++r) f[static_cast<std::size_t>(r * W + c)] = out[static_cast<std::size_t>(r)];
  }
  for (std::int64_t r = 0; r < H; ++r) {
    double* row = f.data() + r * W;
    std::copy(row, row + W, line.begin());
    edt_1d(line.data(), row, W, v, z);
  }
  return f;
}

double nsd(const Mask& pred, const Mask& gt, double tau) {
  require_same(pred, gt, "nsd");
  if (!(tau > 0.0)) throw ValidationError("nsd: tau must be > 0");
  const Mask bp = boundary(pred), bg = boundary(gt);
  const std::int64_t np = count(bp), ng = count(bg);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double p_to_g = within(bp, squared_distance_transform(bg), tau);
  const double g_to_p = within(bg, squared_distance_transform(bp), tau);
  return 0.5 * (p_to_g + g_to_p);
}

LabelGrid connected_components(const Mask& mask) {
  LabelGrid labels(mask.height, mask.width);
  std::int32_t next = 0;
  std::vector<std::int64_t> stack;
  const std::int64_t H = mask.height, W = mask.width;
  for (std::int64_t start = 0; start < H * W; ++start) {
    if (!mask.data[static_cast<std::size_t>(start)] || labels.data[static_cast<std::size_t>(start)]) continue;
    ++next;
    stack.assign(1, start);
    labels.data[static_cast<std::size_t>(start)] = next;
    while (!stack.empty()) {
      const std::int64_t i = stack.back();
      stack.pop_back();
      const std::int64_t r = i / W, c = i % W;
      const std::int64_t nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& rc : nbr) {
        if (rc[0] < 0 || rc[0] >= H || rc[1] < 0 || rc[1] >= W) continue;
        const auto j = static_cast<std::size_t>(rc[0] * W + rc[1]);
        if (mask.data[j] && !labels.data[j]) {
          labels.data[j] = next;
          stack.push_back(static_cast<std::int64_t>(j));
        }
      }
    }
  }
  return labels;
}

InstanceMatch match_instances(const LabelGrid& pred, const LabelGrid& gt, double iou_thresh) {
  if (!pred.same_shape(gt)) throw DimensionError("instance_f1: label maps differ in shape");
  std::map<std::int32_t, std::int64_t> area_p, area_g;
  std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> overlap;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const auto p = pred.data[i], g = gt.data[i];
    if (p) ++area_p[p];
    if (g) ++area_g[g];
    if (p && g) ++overlap[{p, g}];
  }
  struct Pair {
    double iou;
    std::int32_t p, g;
  };
  std::vector<Pair> pairs;
  for (const auto& [key, inter] : overlap) {
    const double uni = static_cast<double>(area_p[key.first] + area_g[key.second] - inter);
    pairs.push_back({static_cast<double>(inter) / uni, key.first, key.second});
  }
  // Descending IoU; ties broken by labels for determinism.
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return a.p != b.p ? a.p < b.p : a.g < b.g;
  });
  std::map<std::int32_t, bool> used_p, used_g;
  InstanceMatch m;
  for (const auto& pr : pairs) {
    if (pr.iou < iou_thresh) break;
    if (used_p[pr.p] || used_g[pr.g]) continue;
    used_p[pr.p] = used_g[pr.g] = true;
    ++m.true_positives;
  }
  m.false_positives = static_cast<std::int64_t>(area_p.size()) - m.true_positives;
  m.false_negatives = static_cast<std::int64_t>(area_g.size()) - m.true_positives;
  const std::int64_t denom = 2 * m.true_positives + m.false_positives + m.false_negatives;
  m.f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(m.true_positives) / static_cast<double>(denom);
  return m;
}

double instance_f1(const LabelGrid& pred, const LabelGrid& gt, double iou_thresh) {
  return match_instances(pred, gt, iou_thresh).f1;
}

MetricReport evaluate_segmentation(const LabelGrid& pred, const LabelGrid& gt,
                                   std::int32_t classes, double tau, double iou_thresh) {
  if (!pred.same_shape(gt)) throw DimensionError("evaluate: label maps differ in shape");
  if (classes < 2) throw ValidationError("evaluate: need at least 2 classes");
  MetricReport report;
  for (std::int32_t k = 1; k < classes; ++k) {
    const Mask p = mask_of(pred, k), g = mask_of(gt, k);
    ClassMetrics cm{dsc(p, g), nsd(p, g, tau),
                    instance_f1(connected_components(p), connected_components(g), iou_thresh)};
    report.dsc += cm.dsc;
    report.nsd += cm.nsd;
    report.f1 += cm.f1;
    report.per_class.push_back(cm);
  }
  const double n = static_cast<double>(classes - 1);
  report.dsc /= n;
  report.nsd /= n;
  report.f1 /= n;
  return report;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport out;
  if (reports.empty()) return out;
  out.per_class.resize(reports.front().per_class.size());
  for (const auto& r : reports) {
    out.dsc += r.dsc;
    out.nsd += r.nsd;
    out.f1 += r.f1;
    for (std::size_t k = 0; k < out.per_class.size() && k < r.per_class.size(); ++k) {
      out.per_class[k].dsc += r.per_class[k].dsc;
      out.per_class[k].nsd += r.per_class[k].nsd;
      out.per_class[k].f1 += r.per_class[k].f1;
    }
  }
  const double n = static_cast<double>(reports.size());
  out.dsc /= n;
  out.nsd /= n;
  out.f1 /= n;
  for (auto& c : out.per_class) {
    c.dsc /= n;
    c.nsd /= n;
    c.f1 /= n;
  }
  return out;
}

}  // namespace usema
