#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gasa/error.hpp"
#include "gasa/rng.hpp"
#include "gasa/volume.hpp"

namespace gasa {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gasa_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Percentile, LinearInterpolation) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(999 - i);
  EXPECT_NEAR(percentile(v, 0.5), 4.995, 1e-9);
  EXPECT_NEAR(percentile(v, 99.5), 994.005, 1e-9);
}

TEST(Normalise, ConstantForegroundGivesZeros) {
  const Volume img = Volume::image({2, 2, 1}, {5, 5, 5, 5});
  const Volume mask = Volume::labels({2, 2, 1}, {1, 1, 1, 1});
  for (double v : clip_normalize(img, mask).data) EXPECT_EQ(v, 0.0);
  const Volume empty = Volume::labels({2, 2, 1}, {0, 0, 0, 1});
  try {
    clip_normalize(img, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyForeground);
  }
}

TEST(TargetSpacing, MedianAndAnisotropy) {
  const std::vector<Spacing> iso{{1, 1, 1}, {1, 1, 1}};
  EXPECT_EQ(target_spacing(iso), (Spacing{1, 1, 1}));
  const std::vector<Spacing> aniso{{0.7, 0.7, 3.0}, {0.7, 0.7, 2.0}, {0.7, 0.7, 3.5}, {0.7, 0.7, 3.0}, {0.7, 0.7, 5.0}};
  const Spacing t = target_spacing(aniso);
  EXPECT_DOUBLE_EQ(t[0], 0.7);
  // 10th percentile of {2, 3, 3, 3.5, 5}: 2 + 0.4 * (3 - 2)
  EXPECT_NEAR(t[2], 2.4, 1e-12);
  const std::vector<Spacing> one{{0.5, 0.5, 4.0}};
  EXPECT_EQ(target_spacing(one), (Spacing{0.5, 0.5, 4.0}));
}

TEST(Resample, IdentityAndConstants) {
  Rng rng(1);
  std::vector<double> d(60);
  for (double& v : d) v = rng.normal();
  const Volume img = Volume::image({3, 4, 5}, d, {1.0, 1.5, 2.0});
  EXPECT_EQ(resample_image(img, img.spacing).data, img.data);
  const Volume c = Volume::image({3, 4, 5}, std::vector<double>(60, 3.25), {1, 1, 1});
  for (double v : resample_image(c, {0.6, 1.3, 0.45}).data) EXPECT_NEAR(v, 3.25, 1e-12);
}

TEST(Resample, LabelTieGoesToLowestIndex) {
  // 0 0 1 1 on a unit grid, upsampled from 4 to 5 samples: the middle sample
  // sits exactly between the two labels.
  const Volume lab = Volume::labels({4, 1, 1}, {0, 0, 1, 1});
  const Volume out = resample_labels_to(lab, {5, 1, 1}, {0.75, 1, 1}, 2);
  EXPECT_EQ(out.data, (std::vector<double>{0, 0, 0, 1, 1}));
  const Volume single = Volume::labels({3, 3, 1}, std::vector<double>(9, 2.0));
  for (double v : resample_labels(single, {0.4, 0.7, 1.0}, 3).data) EXPECT_EQ(v, 2.0);
}

TEST(VolumeIo, RoundTripAllFields) {
  const fs::path dir = scratch("io");
  Volume v = Volume::image({2, 3, 4}, std::vector<double>(24), {0.5, 1.25, 3.0});
  for (std::size_t i = 0; i < 24; ++i) v.data[i] = 0.1 * static_cast<double>(i) - 1.0;
  v.origin = {1, -2, 3.5};
  write_volume(v, dir / "a.gvol");
  EXPECT_EQ(read_volume(dir / "a.gvol"), v);
  Volume l = Volume::labels({2, 2, 2}, {0, 1, 2, 3, 0, 1, 2, 3});
  l.dtype = DType::U16;
  write_volume(l, dir / "l.gvol");
  EXPECT_EQ(read_volume(dir / "l.gvol"), l);
}

TEST(VolumeIo, TruncatedAndBadMagic) {
  const fs::path dir = scratch("trunc");
  const Volume v = Volume::image({2, 2, 2}, std::vector<double>(8, 1.0));
  write_volume(v, dir / "a.gvol");
  fs::resize_file(dir / "a.gvol", fs::file_size(dir / "a.gvol") - 3);
  try {
    read_volume(dir / "a.gvol");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FormatError);
  }
  write_volume(v, dir / "b.gvol");
  {
    std::fstream f(dir / "b.gvol", std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  EXPECT_THROW(read_volume(dir / "b.gvol"), Error);
  EXPECT_THROW(read_volume(dir / "missing.gvol"), Error);
}

TEST(VolumeInvariants, RejectsBadSpacingAndLabels) {
  EXPECT_THROW(Volume::image({1, 1, 1}, {0.0}, {1, 0, 1}), Error);
  EXPECT_THROW(Volume::labels({2, 1, 1}, {0, -1}), Error);
  Volume v = Volume::image({2, 1, 1}, {0.0, 1.0});
  v.data.pop_back();
  EXPECT_THROW(v.validate(), Error);
}

}  // namespace
}  // namespace gasa
