#include <cmath>

#include <gtest/gtest.h>

#include "gasa/error.hpp"
#include "gasa/loss_metrics.hpp"
#include "gasa/rng.hpp"
#include "gasa/verify.hpp"

namespace gasa {
namespace {

Volume labels1d(std::vector<double> v) {
  const std::size_t n = v.size();
  return Volume::labels({n, 1, 1}, std::move(v));
}

TEST(Loss, PerfectPredictionIsZero) {
  const std::vector<double> lab{0, 1, 1, 0, 2, 2, 1, 0};
  const Tensor onehot = one_hot(lab, 3, {2, 2, 2});
  std::vector<double> z(24);
  for (std::size_t i = 0; i < 24; ++i) z[i] = onehot.values()[i] * 60.0;
  EXPECT_NEAR(soft_dice_ce_loss(Tensor::from({3, 2, 2, 2}, z), onehot).item(), 0.0, 1e-9);
}

TEST(Loss, UniformTwoClassCrossEntropyIsLn2) {
  const Tensor onehot = one_hot(std::vector<double>{0, 1, 1, 0}, 2, {4, 1, 1});
  const auto t = soft_dice_ce_terms(Tensor::zeros({2, 4, 1, 1}), onehot);
  EXPECT_NEAR(t.ce, std::log(2.0), 1e-12);
  EXPECT_NEAR(t.total(), soft_dice_ce_loss(Tensor::zeros({2, 4, 1, 1}), onehot).item(), 1e-15);
}

TEST(Loss, ShapeMismatchRejected) {
  const Tensor onehot = one_hot(std::vector<double>{0, 1}, 2, {2, 1, 1});
  EXPECT_THROW(soft_dice_ce_loss(Tensor::zeros({3, 2, 1, 1}), onehot), Error);
}

TEST(Dice, Examples) {
  const Volume a = labels1d({1, 1, 0, 0}), b = labels1d({0, 0, 1, 1}), c = labels1d({1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(*dice_score(a, a, {1}), 1.0);
  EXPECT_DOUBLE_EQ(*dice_score(a, b, {1}), 0.0);
  EXPECT_DOUBLE_EQ(*dice_score(a, c, {1}), 2.0 / 3.0);
  EXPECT_FALSE(dice_score(b, b, {2}).has_value());
}

TEST(Nsd, Examples) {
  const Spacing unit{1, 1, 1};
  const Volume p = labels1d({1, 0, 0, 0}), g = labels1d({0, 0, 1, 0});
  EXPECT_DOUBLE_EQ(*nsd(p, p, {1}, 0.0, unit), 1.0);
  EXPECT_DOUBLE_EQ(*nsd(p, g, {1}, 1.0, unit), 0.0);
  EXPECT_DOUBLE_EQ(*nsd(p, g, {1}, 2.0, unit), 1.0);
  EXPECT_DOUBLE_EQ(*nsd(p, g, {1}, 2.0, {1.5, 1, 1}), 0.0);
  EXPECT_THROW(nsd(p, g, {1}, -1.0, unit), Error);
}

TEST(Nsd, MatchesBruteForceOracle) {
  Rng rng(21);
  for (int t = 0; t < 60; ++t) {
    const Extents3 d{1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6)};
    const std::size_t n = d[0] * d[1] * d[2];
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng.below(3));
      b[i] = static_cast<double>(rng.below(3));
    }
    const Volume pa = Volume::labels(d, a), pb = Volume::labels(d, b);
    const Spacing s{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
    const double tau = rng.uniform(0.0, 3.0);
    for (const ClassSet& cs : {ClassSet{1}, ClassSet{1, 2}}) {
      const auto got = nsd(pa, pb, cs, tau, s), want = verify::nsd_bruteforce(pa, pb, cs, tau, s);
      ASSERT_EQ(got.has_value(), want.has_value());
      if (got) {
        ASSERT_EQ(*got, *want);
      }
    }
  }
}

TEST(Hec, KitsPresetAndBinarisation) {
  const HecSpec spec = hec_preset("kits", 3);
  ASSERT_EQ(spec.groups.size(), 2u);
  EXPECT_EQ(spec.groups[1].ids, (ClassSet{2}));
  EXPECT_THROW(hec_preset("nope", 3), Error);
  // 4^3 volume, three labels; scores must equal a hand binarisation.
  std::vector<double> gt(64), pr(64);
  Rng rng(3);
  for (std::size_t i = 0; i < 64; ++i) {
    gt[i] = static_cast<double>(rng.below(3));
    pr[i] = static_cast<double>(rng.below(3));
  }
  const Volume g = Volume::labels({4, 4, 4}, gt), p = Volume::labels({4, 4, 4}, pr);
  const auto rep = hec_evaluate(p, g, spec, 1.0, {1, 1, 1});
  auto binarise = [](const std::vector<double>& v, const ClassSet& ids) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      for (int id : ids) out[i] = out[i] != 0.0 || static_cast<int>(v[i]) == id ? 1.0 : 0.0;
    return Volume::labels({4, 4, 4}, out);
  };
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& ids = spec.groups[k].ids;
    EXPECT_EQ(rep.groups[k].dice, dice_score(binarise(pr, ids), binarise(gt, ids), {1}));
    EXPECT_EQ(rep.groups[k].nsd, nsd(binarise(pr, ids), binarise(gt, ids), {1}, 1.0, {1, 1, 1}));
  }
}

TEST(Hec, TumorGroupIgnoresOrgan) {
  const HecSpec spec = hec_preset("kits", 3);
  const Volume g = labels1d({1, 2, 0, 1}), p = labels1d({0, 2, 1, 1});
  const auto rep = hec_evaluate(p, g, spec, 0.0, {1, 1, 1});
  EXPECT_DOUBLE_EQ(*rep.groups[1].dice, 1.0);
}

}  // namespace
}  // namespace gasa
