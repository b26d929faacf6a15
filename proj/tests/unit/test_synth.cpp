#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include <gtest/gtest.h>

#include "gasa/error.hpp"
#include "gasa/synth.hpp"

namespace gasa {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

TEST(Phantom, Deterministic) {
  PhantomSpec s;
  s.seed = 5;
  const Phantom a = generate_phantom(s, 3), b = generate_phantom(s, 3);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(generate_phantom(s, 4).labels, a.labels);
}

TEST(Phantom, NoiselessImageIsPiecewiseConstant) {
  PhantomSpec s;
  s.noise_sigma = 0.0;
  const Phantom p = generate_phantom(s, 0);
  for (std::size_t i = 0; i < p.labels.data.size(); ++i)
    ASSERT_EQ(p.image.data[i], s.mean_for(static_cast<std::size_t>(p.labels.data[i])));
}

TEST(Phantom, EveryClassPresentAndTumorInsideOrgan) {
  PhantomSpec s;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    s.seed = seed;
    const Phantom p = generate_phantom(s, seed % 7);
    std::set<int> seen(p.labels.data.begin(), p.labels.data.end());
    ASSERT_EQ(seen.size(), 3u) << "seed " << seed;
  }
}

TEST(Phantom, ClassContrastVisibleUnderNoise) {
  PhantomSpec s;
  const Phantom p = generate_phantom(s, 1);
  std::vector<double> sum(3, 0.0), cnt(3, 0.0);
  for (std::size_t i = 0; i < p.labels.data.size(); ++i) {
    sum[p.labels.label_at(i)] += p.image.data[i];
    cnt[p.labels.label_at(i)] += 1.0;
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(sum[c] / cnt[c], s.mean_for(c), 4.0 * s.noise_sigma / std::sqrt(cnt[c]) + 1e-9);
}

TEST(Phantom, InvalidSpecRejected) {
  PhantomSpec s;
  s.num_classes = 1;
  EXPECT_THROW(generate_phantom(s, 0), Error);
  s = {};
  s.size = {2, 2, 2};
  EXPECT_THROW(generate_phantom(s, 0), Error);
}

TEST(Dataset, ManifestAndByteIdenticalRegeneration) {
  const fs::path a = fs::temp_directory_path() / "gasa_unit_ds_a", b = fs::temp_directory_path() / "gasa_unit_ds_b";
  fs::remove_all(a);
  fs::remove_all(b);
  PhantomSpec s;
  s.size = {12, 12, 12};
  s.seed = 7;
  const DatasetManifest m = make_dataset(s, 5, 2, a);
  make_dataset(s, 5, 2, b);
  EXPECT_EQ(m.cases.size(), 5u);
  EXPECT_EQ(m.test, (std::vector<std::size_t>{3, 4}));
  for (const auto& e : fs::directory_iterator(a)) EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
  const DatasetManifest r = read_manifest(a / kManifestName);
  EXPECT_EQ(r.train, m.train);
  EXPECT_EQ(r.cases.size(), 5u);
}

TEST(Dataset, SpecJsonRejectsUnknownKeys) {
  auto j = nlohmann::json::parse(to_json(PhantomSpec{}).dump());
  EXPECT_NO_THROW(phantom_spec_from_json(j));
  j["colour"] = 1;
  EXPECT_THROW(phantom_spec_from_json(j), Error);
}

}  // namespace
}  // namespace gasa
