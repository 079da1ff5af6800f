#include <gtest/gtest.h>

#include <cmath>

#include "pft/error.hpp"
#include "pft/models/networks.hpp"
#include "pft/numerics/ops.hpp"
#include "support/gradcheck.hpp"

namespace pft {
namespace {

using testing::random_tensor;

TEST(Affine, ShapesAndInitBounds) {
  Rng rng(1);
  const Affine a(16, 4, rng);
  EXPECT_EQ(a.weight().shape(), (Shape{16, 4}));
  EXPECT_EQ(a.bias().shape(), (Shape{4}));
  EXPECT_EQ(a.parameter_count(), 16u * 4u + 4u);
  for (const double w : a.weight().values()) EXPECT_LE(std::abs(w), 0.25);
}

TEST(Affine, RejectsWrongWidth) {
  Rng rng(2);
  const Affine a(3, 2, rng);
  EXPECT_THROW(a.forward(Tensor::zeros({5, 4})), DimensionError);
}

TEST(Affine, ZerosMapsEverythingToZero) {
  const Affine z = Affine::zeros(3, 5);
  Rng rng(3);
  const Tensor y = z.forward(random_tensor(rng, {4, 3}, -1, 1));
  for (const double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(FeatureExtractor, LayerShapesAndNames) {
  Rng rng(4);
  const FeatureExtractor f({8, 16, 4, 3}, rng);
  const LayeredFeatures out = f.extract(Tensor::zeros({2, 8}));
  ASSERT_EQ(out.depth(), 3u);
  EXPECT_EQ(out.layers[0].shape(), (Shape{2, 16}));
  EXPECT_EQ(out.layers[1].shape(), (Shape{2, 16}));
  EXPECT_EQ(out.final().shape(), (Shape{2, 4}));
  const auto names = f.named_parameters();
  ASSERT_EQ(names.size(), 6u);
  EXPECT_EQ(names.front().name, "extractor.block0.weight");
  EXPECT_EQ(names.back().name, "extractor.block2.bias");
}

TEST(FeatureExtractor, OutputsAreNonNegative) {
  Rng rng(5);
  const FeatureExtractor f({6, 12, 5, 3}, rng);
  const Tensor y = f.extract(random_tensor(rng, {10, 6}, -3, 3)).final();
  for (const double v : y.values()) EXPECT_GE(v, 0.0);
}

TEST(Freezing, KeepsParametersOffTheTape) {
  Rng rng(6);
  FeatureExtractor f({4, 8, 4, 2}, rng);
  Classifier c(4, 3, rng);
  set_frozen(f, true);
  set_frozen(c, true);
  EXPECT_TRUE(trainable_parameters({&f, &c}).empty());
  Tensor x = random_tensor(rng, {3, 4}, -1, 1);
  x.set_requires_grad(true);
  Tape tape;
  const Tensor loss = sum(c.classify(f.extract(x).final()));
  backward(loss, tape);
  for (const auto& p : f.named_parameters()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
  EXPECT_TRUE(x.has_grad());
}

TEST(Freezing, UnfreezeRestoresTrainability) {
  Rng rng(7);
  Classifier c(4, 2, rng);
  set_frozen(c, true);
  set_frozen(c, false);
  EXPECT_EQ(trainable_parameters({&c}).size(), 2u);
}

TEST(Clone, IsDeepAndEqual) {
  Rng rng(8);
  const FeatureExtractor f({4, 8, 4, 2}, rng);
  FeatureExtractor g = f.clone();
  const auto pf = f.named_parameters();
  auto pg = g.named_parameters();
  for (std::size_t i = 0; i < pf.size(); ++i) {
    EXPECT_TRUE(std::equal(pf[i].tensor.values().begin(), pf[i].tensor.values().end(), pg[i].tensor.values().begin()));
  }
  pg[0].tensor.mutable_values()[0] += 1.0;
  EXPECT_NE(pf[0].tensor.values()[0], pg[0].tensor.values()[0]);
}

TEST(Translator, FreshTranslatorIsIdentity) {
  Rng rng(9);
  const Translator t(6, 3, rng);
  const Tensor f = random_tensor(rng, {5, 6}, -2, 2);
  const LayeredFeatures out = t.translate(f);
  ASSERT_EQ(out.depth(), 2u);
  EXPECT_EQ(out.layers[0].shape(), (Shape{5, 3}));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out.final().values()[i], f.values()[i]);
}

TEST(Translator, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Translator t(4, 3, rng);
    for (auto& p : t.named_parameters()) {
      Tensor w = p.tensor;
      for (double& v : w.mutable_values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    }
    const Tensor f = random_tensor(rng, {5, 4}, -1, 1);
    const auto params = t.parameters();
    const auto r = testing::gradcheck(params, [&](std::vector<Tensor>&) { return sum(square(t.translate(f).final())); });
    EXPECT_TRUE(r.ok()) << "seed " << seed << ": " << r.first_failure;
  }
}

TEST(ChannelStats, PopulationMeanAndStd) {
  const ChannelStats s = channel_stats(Tensor::from({2, 2}, {1, 10, 3, 10}));
  EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
  EXPECT_NEAR(s.stddev[0], 1.0, 1e-5);
  EXPECT_NEAR(s.stddev[1], 0.0, 1e-2);
  EXPECT_THROW(channel_stats(Tensor::zeros({1, 2})), ContractError);
}

TEST(Recolor, PerChannelMatchesTargetStatistics) {
  Rng rng(10);
  const Tensor a = random_tensor(rng, {40, 3}, -1, 1);
  const Tensor b = add(mul_scalar(random_tensor(rng, {40, 3}, -1, 1), 3.0), Tensor::from({3}, {5, -2, 1}));
  const ChannelStats sa = channel_stats(a);
  const ChannelStats sb = channel_stats(b);
  const Recolor r = Recolor::between(sa, sb, false);
  const ChannelStats moved = channel_stats(add(mul(a, r.scale), r.shift));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(moved.mean[j], sb.mean[j], 1e-9);
    EXPECT_NEAR(moved.stddev[j], sb.stddev[j], 1e-5);
  }
}

TEST(Recolor, IsotropicUsesOneScaleAndMatchesMeans) {
  Rng rng(11);
  const Tensor a = random_tensor(rng, {30, 4}, -1, 1);
  const Tensor b = mul_scalar(random_tensor(rng, {30, 4}, 0, 2), 2.0);
  const ChannelStats sa = channel_stats(a);
  const ChannelStats sb = channel_stats(b);
  const Recolor r = Recolor::between(sa, sb, true);
  double num = 0, den = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    num += sb.stddev[j];
    den += sa.stddev[j];
  }
  for (const double s : r.scale.values()) EXPECT_NEAR(s, num / den, 1e-12);
  const ChannelStats moved = channel_stats(add(mul(a, r.scale), r.shift));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(moved.mean[j], sb.mean[j], 1e-9);
}

TEST(Recolor, RowsStacksPairwiseMaps) {
  Rng rng(12);
  const ChannelStats s1 = channel_stats(random_tensor(rng, {10, 2}, -1, 1));
  const ChannelStats s2 = channel_stats(random_tensor(rng, {10, 2}, 0, 3));
  const Recolor rows = Recolor::rows({&s1, &s2}, {&s2, &s1}, false);
  const Recolor a = Recolor::between(s1, s2, false);
  const Recolor b = Recolor::between(s2, s1, false);
  EXPECT_EQ(rows.scale.shape(), (Shape{2, 2}));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_DOUBLE_EQ(rows.scale.at(0, j), a.scale.at(j));
    EXPECT_DOUBLE_EQ(rows.shift.at(1, j), b.shift.at(j));
  }
}

struct Arch {
  std::size_t input, hidden, feat, blocks, classes, k;
};

class CostFormula : public ::testing::TestWithParam<Arch> {};

TEST_P(CostFormula, MatchesHandCount) {
  const Arch a = GetParam();
  Rng rng(13);
  FeatureExtractor f({a.input, a.hidden, a.feat, a.blocks}, rng);
  Classifier c(a.feat, a.classes, rng);
  Translator t(a.feat, a.k, rng);
  set_frozen(f, true);
  set_frozen(c, true);

  std::size_t f_params = 0, f_flops = 0;
  for (std::size_t b = 0; b < a.blocks; ++b) {
    const std::size_t in = b == 0 ? a.input : a.hidden;
    const std::size_t out = b + 1 == a.blocks ? a.feat : a.hidden;
    f_params += in * out + out;
    f_flops += 2 * in * out + out;
  }
  const std::size_t c_params = a.feat * a.classes + a.classes;
  const std::size_t t_params = a.feat * a.k + a.k + a.k * a.feat + a.feat;
  const std::size_t t_flops = 2 * a.feat + 2 * a.feat * a.k + a.k + 2 * a.k * a.feat + a.feat;

  const CostReport r = count_cost(f, c, &t);
  EXPECT_EQ(r.total_params, f_params + c_params + t_params);
  EXPECT_EQ(r.trainable_params, t_params);
  EXPECT_EQ(r.flops_per_sample, f_flops + 2 * a.feat * a.classes + t_flops);

  const CostReport base = count_cost(f, c);
  EXPECT_EQ(base.total_params, f_params + c_params);
  EXPECT_EQ(base.trainable_params, 0u);
}

INSTANTIATE_TEST_SUITE_P(FixedArchitectures, CostFormula,
                         ::testing::Values(Arch{32, 512, 128, 3, 2, 32}, Arch{32, 512, 64, 3, 2, 32},
                                           Arch{10, 20, 8, 2, 5, 4}));

TEST(ReferenceCosts, CarryTheirBackboneCaveat) {
  const auto refs = paper_reported_costs();
  ASSERT_EQ(refs.size(), 2u);
  EXPECT_DOUBLE_EQ(refs[0].params_millions, 0.5);
  EXPECT_DOUBLE_EQ(refs[1].params_millions, 57.2);
  for (const auto& r : refs) EXPECT_NE(r.note.find("ResNet-18"), std::string::npos);
}

}  // namespace
}  // namespace pft
