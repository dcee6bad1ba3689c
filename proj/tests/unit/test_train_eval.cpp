#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "test_support.hpp"
#include "usema/checkpoint.hpp"
#include "usema/config.hpp"
#include "usema/dataset.hpp"
#include "usema/losses.hpp"
#include "usema/metrics.hpp"
#include "usema/ops.hpp"
#include "usema/optim.hpp"
#include "usema/train.hpp"

namespace usema {
namespace {

namespace fs = std::filesystem;
using test::randn;
using T2 = Tensor<double>;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("usema_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

LabelGrid random_labels(Rng& rng, std::int64_t h, std::int64_t w, std::int32_t classes) {
  LabelGrid g(h, w);
  for (auto& l : g.data) l = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(classes)));
  return g;
}

// Softmax over axis 1 of [B, K, H, W], by direct loops.
T2 class_softmax(const T2& logits) {
  const std::int64_t b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  T2 p(logits.shape());
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t s = 0; s < hw; ++s) {
      double z = 0;
      for (std::int64_t c = 0; c < k; ++c) z += std::exp(logits[(i * k + c) * hw + s]);
      for (std::int64_t c = 0; c < k; ++c) p[(i * k + c) * hw + s] = std::exp(logits[(i * k + c) * hw + s]) / z;
    }
  return p;
}

double dice_oracle(const T2& logits, const LabelBatch& labels) {
  const auto p = class_softmax(logits);
  const std::int64_t b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  double total = 0;
  for (std::int64_t c = 0; c < k; ++c) {
    double inter = 0, ps = 0, ts = 0;
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t s = 0; s < hw; ++s) {
        const double t = labels[static_cast<std::size_t>(i)].data[static_cast<std::size_t>(s)] == c;
        inter += p[(i * k + c) * hw + s] * t;
        ps += p[(i * k + c) * hw + s];
        ts += t;
      }
    total += (2 * inter + kDiceSmooth) / (ps + ts + kDiceSmooth);
  }
  return 1 - total / static_cast<double>(k);
}

double ce_oracle(const T2& logits, const LabelBatch& labels) {
  const auto p = class_softmax(logits);
  const std::int64_t b = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  double total = 0;
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t s = 0; s < hw; ++s) {
      const auto c = labels[static_cast<std::size_t>(i)].data[static_cast<std::size_t>(s)];
      total -= std::log(p[(i * k + c) * hw + s]);
    }
  return total / static_cast<double>(b * hw);
}

// Logits that put `margin` on the labelled class.
T2 hard_logits(const LabelBatch& labels, std::int64_t classes, double margin) {
  const std::int64_t h = labels[0].height, w = labels[0].width;
  T2 out({static_cast<std::int64_t>(labels.size()), classes, h, w});
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::int64_t s = 0; s < h * w; ++s)
      out[(static_cast<std::int64_t>(i) * classes + labels[i].data[static_cast<std::size_t>(s)]) * h * w + s] =
          margin;
  return out;
}

TEST(DiceLoss, PerfectPredictionIsNearZero) {
  Rng rng(1);
  const LabelBatch labels{random_labels(rng, 6, 6, 3)};
  const auto logits = hard_logits(labels, 3, 50.0);
  EXPECT_LE(dice_loss(constant(logits), one_hot<double>(labels, 3)).value()[0], 1e-4);
}

TEST(DiceLoss, DisjointPredictionIsNearOne) {
  LabelGrid gt(4, 4), wrong(4, 4);
  for (std::size_t i = 0; i < 16; ++i) {
    gt.data[i] = i < 8 ? 1 : 0;
    wrong.data[i] = i < 8 ? 0 : 1;
  }
  const auto logits = hard_logits({wrong}, 2, 50.0);
  EXPECT_GE(dice_loss(constant(logits), one_hot<double>({gt}, 2)).value()[0], 1 - 1e-3);
}

TEST(DiceLoss, MatchesFormulaOracle) {
  Rng rng(2);
  const LabelBatch labels{random_labels(rng, 5, 4, 3), random_labels(rng, 5, 4, 3)};
  const auto logits = randn(rng, {2, 3, 5, 4});
  EXPECT_NEAR(dice_loss(constant(logits), one_hot<double>(labels, 3)).value()[0],
              dice_oracle(logits, labels), 1e-10);
}

TEST(DiceLoss, ClassCountMismatchRejected) {
  Rng rng(3);
  const LabelBatch labels{random_labels(rng, 4, 4, 2)};
  EXPECT_THROW(dice_loss(constant(randn(rng, {1, 3, 4, 4})), one_hot<double>(labels, 2)),
               DimensionError);
}

TEST(OneHot, OutOfRangeLabelRejected) {
  LabelGrid g(2, 2);
  g.data[3] = 4;
  EXPECT_THROW(one_hot<double>({g}, 3), ValidationError);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  Rng rng(4);
  const LabelBatch labels{random_labels(rng, 3, 3, 4)};
  EXPECT_NEAR(cross_entropy(constant(T2({1, 4, 3, 3})), labels).value()[0], std::log(4.0), 1e-12);
}

TEST(CrossEntropy, HugeCorrectLogitGivesZero) {
  Rng rng(5);
  const LabelBatch labels{random_labels(rng, 3, 3, 4)};
  const double ce = cross_entropy(constant(hard_logits(labels, 4, 1e4)), labels).value()[0];
  EXPECT_TRUE(std::isfinite(ce));
  EXPECT_LE(ce, 1e-12);
}

TEST(CrossEntropy, MatchesFormulaOracle) {
  Rng rng(6);
  const LabelBatch labels{random_labels(rng, 4, 6, 3)};
  const auto logits = randn(rng, {1, 3, 4, 6});
  EXPECT_NEAR(cross_entropy(constant(logits), labels).value()[0], ce_oracle(logits, labels), 1e-10);
}

TEST(CrossEntropy, OutOfRangeLabelRejected) {
  LabelGrid g(2, 2);
  g.data[0] = -1;
  EXPECT_THROW(cross_entropy(constant(T2({1, 2, 2, 2})), {g}), ValidationError);
}

TEST(Losses, DecreaseAsPredictionMovesToTarget) {
  Rng rng(7);
  const LabelBatch labels{random_labels(rng, 5, 5, 3)};
  const auto start = randn(rng, {1, 3, 5, 5});
  const auto goal = hard_logits(labels, 3, 8.0);
  const auto target = one_hot<double>(labels, 3);
  double prev_dice = INFINITY, prev_ce = INFINITY;
  for (int step = 0; step <= 10; ++step) {
    const double t = step / 10.0;
    T2 mix(start.shape());
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = (1 - t) * start[i] + t * goal[i];
    // Interpolate probabilities rather than logits so mass moves monotonically.
    const auto p0 = class_softmax(start), p1 = class_softmax(goal);
    T2 logp(start.shape());
    for (std::int64_t i = 0; i < logp.numel(); ++i) logp[i] = std::log((1 - t) * p0[i] + t * p1[i]);
    const double d = dice_loss(constant(logp), target).value()[0];
    const double c = cross_entropy(constant(logp), labels).value()[0];
    EXPECT_LE(d, prev_dice + 1e-12);
    EXPECT_LE(c, prev_ce + 1e-12);
    prev_dice = d;
    prev_ce = c;
  }
}

TEST(DeepSupervision, WeightsHalveAndNormalise) {
  const auto w = deep_supervision_weights(3);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[0], 4.0 / 7, 1e-15);
  EXPECT_NEAR(w[1], 2.0 / 7, 1e-15);
  EXPECT_NEAR(w[2], 1.0 / 7, 1e-15);
}

TEST(DeepSupervision, DownsampleTakesTopLeftSamples) {
  LabelGrid g(4, 4);
  for (std::int32_t i = 0; i < 16; ++i) g.data[static_cast<std::size_t>(i)] = i;
  const auto d = downsample_labels(g, 2);
  EXPECT_EQ(d, LabelGrid(2, 2, std::vector<std::int32_t>{0, 2, 8, 10}));
}

TEST(CombinedLoss, SingleScaleIsDicePlusCe) {
  Rng rng(8);
  const LabelBatch labels{random_labels(rng, 4, 4, 2)};
  const auto logits = randn(rng, {1, 2, 4, 4});
  const double want = dice_oracle(logits, labels) + ce_oracle(logits, labels);
  EXPECT_NEAR(combined_ds_loss<double>({constant(logits)}, labels, {1.0}).value()[0], want, 1e-10);
}

TEST(CombinedLoss, IdenticalScalesAverageToEither) {
  Rng rng(9);
  const LabelBatch labels{random_labels(rng, 4, 4, 2)};
  const auto l = constant(randn(rng, {1, 2, 4, 4}));
  EXPECT_NEAR(combined_ds_loss<double>({l, l}, labels, {0.5, 0.5}).value()[0],
              combined_ds_loss<double>({l}, labels, {1.0}).value()[0], 1e-12);
}

TEST(CombinedLoss, ThreeScalesMatchWeightedOracle) {
  Rng rng(10);
  const LabelBatch labels{random_labels(rng, 8, 8, 3)};
  std::vector<Var<double>> logits;
  std::vector<T2> raw;
  for (std::int64_t s = 0; s < 3; ++s) {
    raw.push_back(randn(rng, {1, 3, 8 >> s, 8 >> s}));
    logits.push_back(constant(raw.back()));
  }
  const auto w = deep_supervision_weights(3);
  double want = 0;
  for (std::int64_t s = 0; s < 3; ++s) {
    const LabelBatch small{downsample_labels(labels[0], std::int64_t{1} << s)};
    want += w[static_cast<std::size_t>(s)] * (dice_oracle(raw[static_cast<std::size_t>(s)], small) +
                                              ce_oracle(raw[static_cast<std::size_t>(s)], small));
  }
  EXPECT_NEAR(combined_ds_loss(logits, labels, w).value()[0], want, 1e-10);
}

TEST(CombinedLoss, ScaleCountMismatchRejected) {
  Rng rng(11);
  const LabelBatch labels{random_labels(rng, 4, 4, 2)};
  const auto l = constant(randn(rng, {1, 2, 4, 4}));
  EXPECT_THROW(combined_ds_loss<double>({l}, labels, {0.5, 0.5}), DimensionError);
}

TEST(AdamW, ZeroGradientOnlyDecays) {
  Rng rng(12);
  auto p = randn(rng, {3, 4});
  const auto before = p;
  AdamMoments<double> m;
  const AdamWOptions o;
  adamw_update(p, T2({3, 4}), m, 1, o);
  for (std::int64_t i = 0; i < p.numel(); ++i) EXPECT_EQ(p[i], before[i] * (1 - o.lr * o.weight_decay));
}

TEST(AdamW, FirstStepMovesBySignOfGradient) {
  T2 p = T2::vector({1.0, -2.0, 0.5});
  const T2 g = T2::vector({0.3, -7.0, 1e-3});
  AdamMoments<double> m;
  AdamWOptions o;
  o.weight_decay = 0.0;
  adamw_update(p, g, m, 1, o);
  EXPECT_NEAR(p[0], 1.0 - o.lr, 1e-10);
  EXPECT_NEAR(p[1], -2.0 + o.lr, 1e-10);
  EXPECT_NEAR(p[2], 0.5 - o.lr, 1e-7);
}

// Textbook decoupled AdamW on one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  double step(double p, double g, int t, const AdamWOptions& o) {
    p -= o.lr * o.weight_decay * p;
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const double mh = m / (1 - std::pow(o.beta1, t)), vh = v / (1 - std::pow(o.beta2, t));
    return p - o.lr * mh / (std::sqrt(vh) + o.eps);
  }
};

TEST(AdamW, TwoStepsMatchReferenceRule) {
  Rng rng(13);
  auto p = randn(rng, {5});
  const auto g1 = randn(rng, {5}), g2 = randn(rng, {5});
  const AdamWOptions o{1e-2, 0.1};
  std::vector<ScalarAdam> ref(5);
  std::vector<double> want(p.data().begin(), p.data().end());
  for (int i = 0; i < 5; ++i) {
    want[i] = ref[i].step(want[i], g1[i], 1, o);
    want[i] = ref[i].step(want[i], g2[i], 2, o);
  }
  AdamMoments<double> m;
  adamw_update(p, g1, m, 1, o);
  adamw_update(p, g2, m, 2, o);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(p[i], want[i], 1e-12);
}

TEST(AdamW, ZeroRateIsIdentity) {
  Rng rng(14);
  auto p = randn(rng, {7});
  const auto before = p;
  AdamMoments<double> m;
  adamw_update(p, randn(rng, {7}), m, 1, AdamWOptions{0.0, 0.0});
  EXPECT_EQ(p, before);
}

TEST(AdamW, GradShapeMismatchRejected) {
  T2 p({3});
  AdamMoments<double> m;
  EXPECT_THROW(adamw_update(p, T2({4}), m, 1, AdamWOptions{}), DimensionError);
}

TEST(CosineLr, Examples) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 3e-4), 3e-4);
  EXPECT_NEAR(cosine_lr(50, 100, 3e-4, 1e-5), (3e-4 + 1e-5) / 2, 1e-18);
  EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 3e-4), 3e-4);
}

TEST(CosineLr, PeriodicAndBounded) {
  for (std::int64_t e = 0; e < 300; ++e) {
    const double lr = cosine_lr(e, 37, 1e-3, 1e-4);
    EXPECT_DOUBLE_EQ(lr, cosine_lr(e + 37, 37, 1e-3, 1e-4));
    EXPECT_GE(lr, 1e-4);
    EXPECT_LE(lr, 1e-3);
  }
}

Mask box(std::int64_t h, std::int64_t w, std::int64_t r0, std::int64_t c0, std::int64_t r1,
         std::int64_t c1) {
  Mask m(h, w);
  for (std::int64_t r = r0; r < r1; ++r)
    for (std::int64_t c = c0; c < c1; ++c) m(r, c) = 1;
  return m;
}

TEST(Dsc, Examples) {
  const auto a = box(8, 8, 2, 2, 6, 6);
  EXPECT_EQ(dsc(a, a), 1.0);
  EXPECT_EQ(dsc(a, box(8, 8, 0, 0, 2, 2)), 0.0);
  EXPECT_DOUBLE_EQ(dsc(box(8, 8, 0, 0, 4, 4), box(8, 8, 0, 2, 4, 6)), 0.5);
  EXPECT_EQ(dsc(Mask(3, 3), Mask(3, 3)), 1.0);
  EXPECT_THROW(dsc(Mask(3, 3), Mask(3, 4)), DimensionError);
}

TEST(Boundary, OfSolidBoxIsItsRing) {
  const auto b = boundary(box(6, 6, 1, 1, 5, 5));
  std::int64_t count = 0;
  for (auto v : b.data) count += v;
  EXPECT_EQ(count, 12);
  EXPECT_EQ(b(2, 2), 0);
  EXPECT_EQ(b(1, 3), 1);
}

TEST(Nsd, Examples) {
  const auto a = box(12, 12, 3, 3, 8, 8);
  EXPECT_EQ(nsd(a, a), 1.0);
  EXPECT_DOUBLE_EQ(nsd(box(12, 12, 3, 4, 8, 9), a, 1.0), 1.0);
  EXPECT_EQ(nsd(box(12, 12, 0, 0, 2, 2), box(12, 12, 9, 9, 12, 12)), 0.0);
  EXPECT_EQ(nsd(Mask(4, 4), Mask(4, 4)), 1.0);
  EXPECT_EQ(nsd(a, Mask(12, 12)), 0.0);
}

TEST(Nsd, ShiftBeyondToleranceLosesPartialCredit) {
  const auto a = box(16, 16, 4, 4, 10, 10);
  const double far = nsd(box(16, 16, 4, 7, 10, 13), a, 1.0);
  EXPECT_GT(far, 0.0);
  EXPECT_LT(far, 1.0);
}

TEST(DistanceTransform, MatchesBruteForce) {
  Rng rng(15);
  Mask m(9, 7);
  for (auto& v : m.data) v = rng.below(6) == 0;
  m(4, 4) = 1;
  const auto d = squared_distance_transform(m);
  for (std::int64_t r = 0; r < 9; ++r)
    for (std::int64_t c = 0; c < 7; ++c) {
      double best = INFINITY;
      for (std::int64_t rr = 0; rr < 9; ++rr)
        for (std::int64_t cc = 0; cc < 7; ++cc)
          if (m(rr, cc)) best = std::min(best, static_cast<double>((r - rr) * (r - rr) + (c - cc) * (c - cc)));
      EXPECT_EQ(d[static_cast<std::size_t>(r * 7 + c)], best);
    }
}

TEST(Metrics, DscAndNsdAreSymmetric) {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    Mask a(10, 10), b(10, 10);
    for (auto& v : a.data) v = rng.below(3) == 0;
    for (auto& v : b.data) v = rng.below(3) == 0;
    EXPECT_DOUBLE_EQ(dsc(a, b), dsc(b, a));
    EXPECT_DOUBLE_EQ(nsd(a, b), nsd(b, a));
  }
}

TEST(ConnectedComponents, RasterOrderLabels) {
  Mask m(3, 5);
  m(0, 0) = m(1, 0) = 1;
  m(0, 3) = m(0, 4) = 1;
  m(2, 2) = 1;
  const auto cc = connected_components(m);
  EXPECT_EQ(cc, LabelGrid(3, 5, std::vector<std::int32_t>{1, 0, 0, 2, 2, 1, 0, 0, 0, 0, 0, 0, 3, 0, 0}));
}

TEST(InstanceF1, Examples) {
  LabelGrid gt(10, 10);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 5; ++c) gt(r, c) = 1;
  for (std::int64_t r = 6; r < 9; ++r)
    for (std::int64_t c = 6; c < 9; ++c) gt(r, c) = 2;
  EXPECT_EQ(instance_f1(gt, gt), 1.0);
  EXPECT_EQ(instance_f1(LabelGrid(10, 10), gt), 0.0);

  // Pred instance 1 covers 12 of gt 1's 20 pixels (IoU 0.6); instance 2 is spurious.
  LabelGrid pred(10, 10);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 3; ++c) pred(r, c) = 1;
  pred(9, 0) = 2;
  const auto m = match_instances(pred, gt);
  EXPECT_EQ(m.true_positives, 1);
  EXPECT_EQ(m.false_positives, 1);
  EXPECT_EQ(m.false_negatives, 1);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);
}

TEST(InstanceF1, SwapExchangesFalsePositivesAndNegatives) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Mask a(12, 12), b(12, 12);
    for (auto& v : a.data) v = rng.below(4) == 0;
    for (auto& v : b.data) v = rng.below(4) == 0;
    const auto pa = connected_components(a), pb = connected_components(b);
    const auto ab = match_instances(pa, pb), ba = match_instances(pb, pa);
    EXPECT_EQ(ab.true_positives, ba.true_positives);
    EXPECT_EQ(ab.false_positives, ba.false_negatives);
    EXPECT_DOUBLE_EQ(ab.f1, ba.f1);
  }
}

TEST(EvaluateSegmentation, AveragesForegroundClasses) {
  LabelGrid gt(8, 8), pred(8, 8);
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 4; ++c) gt(r, c) = pred(r, c) = 1;
  for (std::int64_t r = 4; r < 8; ++r)
    for (std::int64_t c = 4; c < 8; ++c) gt(r, c) = 2;
  const auto rep = evaluate_segmentation(pred, gt, 3);
  ASSERT_EQ(rep.per_class.size(), 2u);
  EXPECT_EQ(rep.per_class[0].dsc, 1.0);
  EXPECT_EQ(rep.per_class[1].dsc, 0.0);
  EXPECT_DOUBLE_EQ(rep.dsc, 0.5);
}

TEST(Synth, SameSeedIsBitIdentical) {
  for (auto kind : {SynthKind::Shapes, SynthKind::GlobalContext}) {
    const SynthOptions o{kind, 7, 3, 32};
    const auto a = synth_dataset(o), b = synth_dataset(o);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a.samples[i].image, b.samples[i].image);
      EXPECT_EQ(a.samples[i].labels, b.samples[i].labels);
    }
  }
}

TEST(Synth, ShapesLabelOnlyKnownClasses) {
  const auto d = synth_dataset({SynthKind::Shapes, 3, 8, 32});
  for (const auto& s : d.samples) {
    EXPECT_EQ(s.image.shape(), (Shape{1, 32, 32}));
    for (auto l : s.labels.data) EXPECT_TRUE(l >= 0 && l <= 2);
    for (float v : s.image.data()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
  }
  EXPECT_EQ(d.label_count(), 3);
}

TEST(Synth, GlobalContextClassFollowsImageMean) {
  const auto d = synth_dataset({SynthKind::GlobalContext, 4, 12, 32});
  for (const auto& s : d.samples) {
    double mean = 0;
    for (float v : s.image.data()) mean += v;
    mean /= static_cast<double>(s.image.numel());
    const std::int32_t want = mean < 0.5 ? 1 : 2;
    for (auto l : s.labels.data) EXPECT_TRUE(l == 0 || l == want);
  }
}

TEST(Synth, BadSizeRejected) {
  EXPECT_THROW(synth_dataset({SynthKind::Shapes, 0, 1, 0}), ConfigError);
  EXPECT_THROW(parse_synth_kind("circles"), ConfigError);
}

TEST(Pgm, RoundTrip) {
  const auto dir = scratch("pgm");
  Grid<std::uint8_t> g(3, 5);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = static_cast<std::uint8_t>(17 * i);
  write_pgm(dir / "a.pgm", g);
  EXPECT_EQ(read_pgm(dir / "a.pgm"), g);
}

TEST(Pgm, MalformedFileRejected) {
  const auto dir = scratch("pgm_bad");
  std::ofstream(dir / "bad.pgm") << "P2\n3 3\n255\n";
  EXPECT_THROW(read_pgm(dir / "bad.pgm"), DataError);
  EXPECT_THROW(read_pgm(dir / "missing.pgm"), DataError);
}

TEST(DatasetIo, RoundTripIsExact) {
  const auto dir = scratch("dataset");
  const auto d = synth_dataset({SynthKind::Shapes, 9, 3, 16});
  save_dataset(dir, d);
  const auto back = load_dataset(dir / "index.txt");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.samples[i].image, d.samples[i].image);
    EXPECT_EQ(back.samples[i].labels, d.samples[i].labels);
  }
}

TEST(DatasetIo, MixedShapesRejected) {
  auto d = synth_dataset({SynthKind::Shapes, 9, 2, 16});
  d.samples[1] = synth_dataset({SynthKind::Shapes, 9, 1, 32}).samples[0];
  EXPECT_THROW(d.validate(), DataError);
}

TEST(Config, ParsesKeysAndComments) {
  const auto c = parse_config("# desk\nclasses = 3\nstages = 2 # inline\nwindows = 16,32\nlr = 1e-3\n");
  EXPECT_EQ(c.model.classes, 3);
  EXPECT_EQ(c.model.stages, 2);
  EXPECT_EQ(c.model.windows, (std::vector<std::int64_t>{16, 32}));
  EXPECT_DOUBLE_EQ(c.optim.lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.optim.weight_decay, 0.05);
}

TEST(Config, RoundTripsThroughText) {
  auto c = parse_config("classes = 4\nseed = 99\nglobal_average = false\n");
  const auto back = parse_config(config_text(c));
  EXPECT_EQ(config_text(back), config_text(c));
  EXPECT_FALSE(back.model.global_average);
  EXPECT_EQ(back.seed, 99u);
}

TEST(Config, ResidualNormKey) {
  const auto c = parse_config("classes = 2\nresidual_norm = none\n");
  EXPECT_FALSE(c.model.instance_norm);
  EXPECT_FALSE(parse_config(config_text(c)).model.instance_norm);
  EXPECT_TRUE(parse_config("classes = 2\n").model.instance_norm);
  EXPECT_THROW(parse_config("classes = 2\nresidual_norm = batch\n"), ConfigError);
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_THROW(parse_config("classes = 2\nlearning_rate = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("classes = two\n"), ConfigError);
  EXPECT_THROW(parse_config("stages = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("classes = 2\nbatch_size = 0\n"), ConfigError);
}

TrainConfig tiny_config() {
  auto c = parse_config(
      "stages = 1\nbase_channels = 4\nclasses = 3\nhead_dim = 4\nwindows = 8\n"
      "epochs = 2\nbatch_size = 2\nlr = 1e-3\nseed = 5\n");
  return c;
}

std::vector<Tensor<float>> snapshot(const UsemaNet<float>& net) {
  std::vector<Tensor<float>> out;
  for (const auto& [name, var] : net.params().entries()) out.push_back(var.value());
  return out;
}

TEST(Train, ZeroEpochsKeepsInitialisation) {
  auto c = tiny_config();
  c.epochs = 0;
  const auto data = synth_dataset({SynthKind::Shapes, 1, 2, 16});
  const auto r = train(c, data, data);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(snapshot(*r.net), snapshot(UsemaNet<float>(c.model, c.seed)));
}

TEST(Train, ZeroRateAndDecayLeaveParametersUnchanged) {
  auto c = tiny_config();
  c.epochs = 1;
  c.optim.lr = 0.0;
  c.optim.weight_decay = 0.0;
  const auto data = synth_dataset({SynthKind::Shapes, 1, 2, 16});
  const auto r = train(c, data, data);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(snapshot(*r.net), snapshot(UsemaNet<float>(c.model, c.seed)));
}

TEST(Train, SameSeedSameHistory) {
  const auto c = tiny_config();
  const auto tr = synth_dataset({SynthKind::Shapes, 1, 4, 16});
  const auto va = synth_dataset({SynthKind::Shapes, 2, 2, 16});
  const auto a = train(c, tr, va), b = train(c, tr, va);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  EXPECT_EQ(snapshot(*a.net), snapshot(*b.net));
}

TEST(Train, HistoryCsvHeader) {
  const std::vector<EpochRecord> h{{1, 1e-3, 0.5, 0.25, 0.125}};
  const auto csv = history_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,train_loss,val_dsc,val_nsd");
}

TEST(Train, EpochCallbackSeesEveryEpoch) {
  const auto c = tiny_config();
  const auto data = synth_dataset({SynthKind::Shapes, 1, 2, 16});
  std::vector<std::int64_t> seen;
  train(c, data, data, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  EXPECT_EQ(seen, (std::vector<std::int64_t>{1, 2}));
}

TEST(Train, DivergenceReportsEpoch) {
  auto c = tiny_config();
  c.optim.lr = 1e30;
  c.epochs = 3;
  const auto data = synth_dataset({SynthKind::Shapes, 1, 4, 16});
  try {
    train(c, data, data);
    GTEST_SKIP() << "no divergence at this rate";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1);
    EXPECT_LE(e.epoch(), 3);
  }
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = scratch("ckpt");
  const auto c = tiny_config();
  UsemaNet<float> net(c.model, 3);
  save_checkpoint(dir, net, c);
  const auto loaded = load_checkpoint(dir);
  EXPECT_EQ(config_text(loaded.config), config_text(c));
  EXPECT_EQ(snapshot(*loaded.net), snapshot(net));
}

TEST(Checkpoint, ConfigDisagreeingWithTensorsIsManifestError) {
  const auto dir = scratch("ckpt_bad");
  auto c = tiny_config();
  UsemaNet<float> net(c.model, 3);
  save_checkpoint(dir, net, c);
  c.model.base_channels = 8;
  std::ofstream(dir / "config.txt") << config_text(c);
  EXPECT_THROW(load_checkpoint(dir), ManifestError);
}

TEST(Checkpoint, MissingDirectoryIsDataError) {
  EXPECT_THROW(load_checkpoint(fs::temp_directory_path() / "usema_no_such_ckpt"), DataError);
}

TEST(Evaluate, PerfectPredictorScoresOne) {
  // Metrics of ground truth against itself through the same aggregation.
  const auto d = synth_dataset({SynthKind::Shapes, 5, 3, 16});
  std::vector<MetricReport> reps;
  for (const auto& s : d.samples) reps.push_back(evaluate_segmentation(s.labels, s.labels, 3));
  const auto m = mean_report(reps);
  EXPECT_EQ(m.dsc, 1.0);
  EXPECT_EQ(m.nsd, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Evaluate, WorkerCountDoesNotChangeMetrics) {
  const auto c = tiny_config();
  UsemaNet<float> net(c.model, 4);
  const auto d = synth_dataset({SynthKind::Shapes, 6, 5, 16});
  set_worker_threads(1);
  const auto a = evaluate(net, d);
  set_worker_threads(4);
  const auto b = evaluate(net, d);
  set_worker_threads(1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].dsc, b[i].dsc);
    EXPECT_EQ(a[i].nsd, b[i].nsd);
  }
}

}  // namespace
}  // namespace usema
