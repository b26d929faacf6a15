#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gasa/error.hpp"
#include "gasa/kernels.hpp"
#include "gasa/ops.hpp"
#include "gasa/rng.hpp"
#include "gasa/verify.hpp"

namespace gasa {
namespace {

using kernels::Isa;
using kernels::Trans;

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

TEST(Tensor, ConstructionChecksElementCount) {
  EXPECT_EQ(Tensor::from({2, 2}, {1, 2, 3, 4}).numel(), 4u);
  try {
    Tensor::from({3}, {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
  EXPECT_DOUBLE_EQ(Tensor::scalar(0.01).item(), 0.01);
}

TEST(Tensor, MatmulExamples) {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor prod = ops::matmul(eye, m);
  const auto r = prod.values();
  EXPECT_EQ(std::vector<double>(r.begin(), r.end()), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(ops::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item(), 11.0);
}

TEST(Tensor, SoftmaxIsStable) {
  const Tensor u = ops::softmax_lastdim(Tensor::from({1, 3}, {0, 0, 0}));
  for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor big_t = ops::softmax_lastdim(Tensor::from({1, 2}, {1000, 0}));
  const auto big = big_t.values();
  EXPECT_DOUBLE_EQ(big[0], 1.0);
  EXPECT_TRUE(std::isfinite(big[1]));
}

TEST(Tensor, ConvSumOfOnes) {
  const Tensor x = Tensor::full({1, 2, 2, 2}, 1.0);
  const Tensor w = Tensor::full({1, 1, 2, 2, 2}, 1.0);
  const Tensor b = Tensor::zeros({1});
  ops::Conv3dOptions o{{1, 1, 1}, {0, 0, 0}};
  EXPECT_DOUBLE_EQ(ops::conv3d(x, w, b, o).item(), 8.0);
}

TEST(Tensor, LayerNormExamples) {
  const Tensor g = Tensor::full({3}, 1.0), b = Tensor::zeros({3});
  const Tensor flat = ops::layer_norm(Tensor::from({1, 3}, {5, 5, 5}), g, b);
  for (double v : flat.values()) EXPECT_EQ(v, 0.0);
  const Tensor pm_t = ops::layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  const auto pm = pm_t.values();
  EXPECT_NEAR(pm[0], 1.0 / std::sqrt(1.0 + 1e-5), 1e-12);
  EXPECT_NEAR(pm[1], -1.0 / std::sqrt(1.0 + 1e-5), 1e-12);
  const Tensor affine = ops::layer_norm(Tensor::from({1, 2}, {3, 4}), Tensor::zeros({2}), Tensor::full({2}, 7.0));
  for (double v : affine.values()) EXPECT_EQ(v, 7.0);
}

TEST(Tensor, DropoutIdentityCases) {
  Rng rng(1);
  const Tensor x = Tensor::from({4}, {1, 2, 3, 4});
  for (auto [p, training] : {std::pair{0.0, true}, std::pair{0.5, false}}) {
    const Tensor y = ops::dropout(x, p, training, rng);
    EXPECT_TRUE(std::equal(y.values().begin(), y.values().end(), x.values().begin()));
  }
}

TEST(Autograd, SimpleGradients) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  Tape::current().clear();
  Tensor y = Tensor::from({3}, {5, 6, 7}, true);
  backward(ops::sum(y));
  for (double g : y.grad()) EXPECT_EQ(g, 1.0);
  Tape::current().clear();
}

TEST(Autograd, NonScalarRootRejected) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  try {
    backward(ops::scale(x, 2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotScalar);
  }
  Tape::current().clear();
}

TEST(Autograd, OpsMatchFiniteDifferences) {
  Rng rng(11);
  Tensor a = Tensor::from({3, 4}, randv(12, rng), true);
  Tensor b = Tensor::from({4, 2}, randv(8, rng), true);
  Tensor w = Tensor::from({3, 2}, randv(6, rng));
  auto loss = [&] { return ops::sum(ops::mul(ops::softmax_lastdim(ops::matmul(a, b)), w)); };
  const auto r = verify::gradcheck({{"a", a}, {"b", b}}, loss, 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 20u);
}

TEST(Autograd, GradcheckDetectsPerturbation) {
  Tensor a = Tensor::from({2}, {0.3, -0.7}, true);
  auto loss = [&] { return ops::sum(ops::mul(a, a)); };
  EXPECT_GT(verify::gradcheck({{"a", a}}, loss, 1e-6, 0, 1e-2).max_rel_error, 5e-3);
}

TEST(Rng, DeterministicAndForked) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng f0 = Rng(42).fork(0), f1 = Rng(42).fork(1);
  EXPECT_NE(f0.next_u64(), f1.next_u64());
  Rng c(7);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = c.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!kernels::isa_supported(Isa::Avx2)) GTEST_SKIP() << "no AVX2 on this machine";
  }
};

TEST_F(KernelEquivalence, Gemm) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(19), n = 1 + rng.below(19), k = 1 + rng.below(19);
    const Trans ta = rng.bernoulli(0.5) ? Trans::Yes : Trans::No;
    const Trans tb = rng.bernoulli(0.5) ? Trans::Yes : Trans::No;
    const auto a = randv(m * k, rng), b = randv(k * n, rng), c0 = randv(m * n, rng);
    const std::size_t lda = ta == Trans::No ? k : m, ldb = tb == Trans::No ? n : k;
    auto cs = c0, cv = c0;
    kernels::gemm_with(Isa::Scalar, ta, tb, m, n, k, a.data(), lda, b.data(), ldb, cs.data(), n);
    kernels::gemm_with(Isa::Avx2, ta, tb, m, n, k, a.data(), lda, b.data(), ldb, cv.data(), n);
    for (std::size_t i = 0; i < m * n; ++i) ASSERT_NEAR(cs[i], cv[i], 1e-12 * (1.0 + std::abs(cs[i])));
  }
}

TEST_F(KernelEquivalence, DotAndAxpy) {
  Rng rng(4);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto x = randv(n, rng), y = randv(n, rng);
    const double ds = kernels::dot_with(Isa::Scalar, x.data(), y.data(), n);
    const double dv = kernels::dot_with(Isa::Avx2, x.data(), y.data(), n);
    ASSERT_NEAR(ds, dv, 1e-12 * (1.0 + std::abs(ds)));
    auto ys = y, yv = y;
    kernels::axpy_with(Isa::Scalar, 0.37, x.data(), ys.data(), n);
    kernels::axpy_with(Isa::Avx2, 0.37, x.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(ys[i], yv[i], 1e-15 * (1.0 + std::abs(ys[i])));
  }
}

TEST_F(KernelEquivalence, ConvForwardAgreesAcrossVariants) {
  Rng rng(5);
  const Tensor x = Tensor::from({3, 6, 5, 4}, randv(360, rng));
  const Tensor w = Tensor::from({4, 3, 3, 3, 3}, randv(324, rng));
  const Tensor b = Tensor::from({4}, randv(4, rng));
  std::vector<double> ys, yv;
  {
    kernels::ScopedIsa s(Isa::Scalar);
    const Tensor y = ops::conv3d(x, w, b);
    ys.assign(y.values().begin(), y.values().end());
  }
  {
    kernels::ScopedIsa s(Isa::Avx2);
    const Tensor y = ops::conv3d(x, w, b);
    yv.assign(y.values().begin(), y.values().end());
  }
  ASSERT_EQ(ys.size(), yv.size());
  for (std::size_t i = 0; i < ys.size(); ++i) ASSERT_NEAR(ys[i], yv[i], 1e-11);
}

}  // namespace
}  // namespace gasa
