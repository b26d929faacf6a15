#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "gasa/error.hpp"
#include "gasa/synth.hpp"

namespace gasa {
namespace {

constexpr int kCaseAttempts = 32;
constexpr int kPlacementAttempts = 200;

// Ellipsoid rotated by `angle` about the third axis, in voxel units.
struct Ellipsoid {
  std::array<double, 3> c{}, r{};
  double angle = 0.0;

  bool contains(double x, double y, double z) const {
    const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
    const double cs = std::cos(angle), sn = std::sin(angle);
    const double u = (cs * dx + sn * dy) / r[0];
    const double v = (-sn * dx + cs * dy) / r[1];
    const double w = dz / r[2];
    return u * u + v * v + w * w <= 1.0;
  }
};

Ellipsoid random_ellipsoid(const Extents3& size, double lo, double hi, Rng& rng) {
  Ellipsoid e;
  for (int a = 0; a < 3; ++a) e.r[a] = std::max(1.5, rng.uniform(lo, hi) * static_cast<double>(size[a]));
  e.angle = rng.uniform(0.0, std::numbers::pi);
  const double in_plane = std::max(e.r[0], e.r[1]);
  const std::array<double, 3> reach{in_plane, in_plane, e.r[2]};
  for (int a = 0; a < 3; ++a) {
    const double margin = reach[a] + 1.0;
    const double n = static_cast<double>(size[a]) - 1.0;
    e.c[a] = margin <= n - margin ? rng.uniform(margin, n - margin) : n / 2.0;
  }
  return e;
}

template <class F>
void for_each_voxel(const Extents3& s, F&& f) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < s[0]; ++i)
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t k = 0; k < s[2]; ++k, ++idx)
        f(idx, static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
}

// One placement attempt; empty result when some class ended up absent.
std::vector<double> try_labels(const PhantomSpec& spec, Rng& rng) {
  const Extents3& s = spec.size;
  std::vector<double> lab(s[0] * s[1] * s[2], 0.0);
  std::vector<std::size_t> count(spec.num_classes, 0);

  const Ellipsoid organ = random_ellipsoid(s, 0.22, 0.32, rng);
  for_each_voxel(s, [&](std::size_t idx, double x, double y, double z) {
    if (organ.contains(x, y, z)) lab[idx] = 1.0;
  });

  if (spec.num_classes >= 3) {
    Ellipsoid tumor;
    tumor.angle = rng.uniform(0.0, std::numbers::pi);
    for (int a = 0; a < 3; ++a) tumor.r[a] = std::max(1.5, rng.uniform(0.35, 0.5) * organ.r[a]);
    // Offset in the organ frame, then rotated into voxel space.
    std::array<double, 3> off{};
    for (int a = 0; a < 3; ++a) off[a] = rng.uniform(-0.4, 0.4) * std::max(0.0, organ.r[a] - tumor.r[a]);
    const double cs = std::cos(organ.angle), sn = std::sin(organ.angle);
    tumor.c = {organ.c[0] + cs * off[0] - sn * off[1], organ.c[1] + sn * off[0] + cs * off[1],
               organ.c[2] + off[2]};
    for_each_voxel(s, [&](std::size_t idx, double x, double y, double z) {
      if (lab[idx] == 1.0 && tumor.contains(x, y, z)) lab[idx] = 2.0;
    });
  }

  for (std::size_t cls = 3; cls < spec.num_classes; ++cls) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Ellipsoid e = random_ellipsoid(s, 0.1, 0.18, rng);
      std::vector<std::size_t> inside;
      bool clash = false;
      for_each_voxel(s, [&](std::size_t idx, double x, double y, double z) {
        if (clash || !e.contains(x, y, z)) return;
        // One-voxel gap to every existing region.
        const auto X = static_cast<std::ptrdiff_t>(x), Y = static_cast<std::ptrdiff_t>(y),
                   Z = static_cast<std::ptrdiff_t>(z);
        for (std::ptrdiff_t di = -1; di <= 1 && !clash; ++di)
          for (std::ptrdiff_t dj = -1; dj <= 1 && !clash; ++dj)
            for (std::ptrdiff_t dk = -1; dk <= 1 && !clash; ++dk) {
              const std::ptrdiff_t i = X + di, j = Y + dj, k = Z + dk;
              if (i < 0 || j < 0 || k < 0 || i >= static_cast<std::ptrdiff_t>(s[0]) ||
                  j >= static_cast<std::ptrdiff_t>(s[1]) || k >= static_cast<std::ptrdiff_t>(s[2]))
                continue;
              if (lab[static_cast<std::size_t>((i * static_cast<std::ptrdiff_t>(s[1]) + j) *
                                                   static_cast<std::ptrdiff_t>(s[2]) +
                                               k)] != 0.0)
                clash = true;
            }
        inside.push_back(idx);
      });
      if (clash || inside.empty()) continue;
      for (auto idx : inside) lab[idx] = static_cast<double>(cls);
      placed = true;
    }
    if (!placed) return {};
  }

  for (double v : lab) ++count[static_cast<std::size_t>(v)];
  for (auto n : count)
    if (n == 0) return {};
  return lab;
}

std::string case_name(std::size_t i, const char* what) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "case_%03zu_%s.gvol", i, what);
  return buf;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

void PhantomSpec::validate() const {
  for (auto e : size)
    if (e < 8) throw Error(ErrorKind::InvalidSpec, "phantom extents must be >= 8");
  if (num_classes < 2) throw Error(ErrorKind::InvalidSpec, "phantom needs >= 2 classes");
  if (num_classes > 64) throw Error(ErrorKind::InvalidSpec, "phantom supports at most 64 classes");
  if (!class_means.empty() && class_means.size() != num_classes)
    throw Error(ErrorKind::InvalidSpec, "class_means must list one mean per class");
  for (double m : class_means)
    if (!std::isfinite(m)) throw Error(ErrorKind::InvalidSpec, "class means must be finite");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw Error(ErrorKind::InvalidSpec, "noise sigma must be finite and >= 0");
  for (double sp : spacing)
    if (!(sp > 0.0) || !std::isfinite(sp)) throw Error(ErrorKind::InvalidSpec, "spacing must be positive");
}

double PhantomSpec::mean_for(std::size_t cls) const {
  if (!class_means.empty()) return class_means.at(cls);
  if (cls == 0) return 0.0;
  return 100.0 + 60.0 * static_cast<double>(cls - 1);
}

Phantom generate_phantom(const PhantomSpec& spec, std::size_t case_index) {
  spec.validate();
  Rng rng = Rng(spec.seed).fork(case_index);
  std::vector<double> lab;
  for (int attempt = 0; attempt < kCaseAttempts && lab.empty(); ++attempt) lab = try_labels(spec, rng);
  if (lab.empty())
    throw Error(ErrorKind::InvalidSpec, "could not place " + std::to_string(spec.num_classes) +
                                            " classes in a " + shape_str({spec.size[0], spec.size[1], spec.size[2]}) +
                                            " volume");
  std::vector<double> img(lab.size());
  for (std::size_t j = 0; j < lab.size(); ++j) {
    const double mu = spec.mean_for(static_cast<std::size_t>(lab[j]));
    img[j] = spec.noise_sigma > 0.0 ? mu + spec.noise_sigma * rng.normal() : mu;
  }
  return {Volume::image(spec.size, std::move(img), spec.spacing),
          Volume::labels(spec.size, std::move(lab), spec.spacing)};
}

nlohmann::ordered_json to_json(const PhantomSpec& spec) {
  nlohmann::ordered_json j;
  j["size"] = spec.size;
  j["num_classes"] = spec.num_classes;
  j["class_means"] = spec.class_means;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["spacing"] = spec.spacing;
  return j;
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  static const char* known[] = {"size", "num_classes", "class_means", "noise_sigma", "seed", "spacing"};
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "phantom spec must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw Error(ErrorKind::InvalidConfig, "unknown phantom key '" + key + "'");
  PhantomSpec s;
  try {
    s.size = get_or(j, "size", s.size);
    s.num_classes = get_or(j, "num_classes", s.num_classes);
    s.class_means = get_or(j, "class_means", s.class_means);
    s.noise_sigma = get_or(j, "noise_sigma", s.noise_sigma);
    s.seed = get_or(j, "seed", s.seed);
    s.spacing = get_or(j, "spacing", s.spacing);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("phantom spec: ") + e.what());
  }
  return s;
}

DatasetManifest make_dataset(const PhantomSpec& spec, std::size_t n_cases, std::size_t n_test,
                             const std::filesystem::path& out_dir) {
  spec.validate();
  if (n_cases < 1) throw Error(ErrorKind::InvalidSpec, "dataset needs at least one case");
  if (n_test > n_cases) throw Error(ErrorKind::InvalidSpec, "test split larger than the dataset");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.spec = spec;
  m.root = out_dir;
  nlohmann::ordered_json cases = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < n_cases; ++i) {
    const Phantom p = generate_phantom(spec, i);
    CaseFiles f{case_name(i, "image"), case_name(i, "labels")};
    write_volume(p.image, out_dir / f.image);
    write_volume(p.labels, out_dir / f.labels);
    cases.push_back({{"image", f.image.string()}, {"labels", f.labels.string()}});
    m.cases.push_back(std::move(f));
    (i + n_test < n_cases ? m.train : m.test).push_back(i);
  }
  nlohmann::ordered_json j;
  j["spec"] = to_json(spec);
  j["cases"] = std::move(cases);
  j["split"] = {{"train", m.train}, {"test", m.test}};
  std::ofstream os(out_dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write manifest in " + out_dir.string());
  os << j.dump(2) << '\n';
  if (!os) throw Error(ErrorKind::IoError, "short write of manifest in " + out_dir.string());
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open manifest " + manifest_path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(is);
    m.spec = phantom_spec_from_json(j.at("spec"));
    for (const auto& c : j.at("cases"))
      m.cases.push_back({c.at("image").get<std::string>(), c.at("labels").get<std::string>()});
    m.train = j.at("split").at("train").get<std::vector<std::size_t>>();
    m.test = j.at("split").at("test").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, "manifest " + manifest_path.string() + ": " + e.what());
  }
  for (auto i : m.train)
    if (i >= m.cases.size()) throw Error(ErrorKind::FormatError, "manifest split index out of range");
  for (auto i : m.test)
    if (i >= m.cases.size()) throw Error(ErrorKind::FormatError, "manifest split index out of range");
  m.root = manifest_path.parent_path();
  return m;
}

}  // namespace gasa
