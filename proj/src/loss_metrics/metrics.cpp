#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gasa/error.hpp"
#include "gasa/loss_metrics.hpp"

namespace gasa {
namespace {

void check_pair(const Volume& pred, const Volume& gt) {
  if (pred.spatial() != gt.spatial() || pred.channels() != 1 || gt.channels() != 1)
    throw Error(ErrorKind::ShapeMismatch, "prediction " + shape_str(pred.shape) +
                                              " and ground truth " + shape_str(gt.shape) +
                                              " must be single-channel volumes of equal extent");
}

std::vector<bool> binarize(const Volume& v, const ClassSet& ids) {
  std::vector<bool> m(v.voxels());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = std::find(ids.begin(), ids.end(), v.label_at(i)) != ids.end();
  return m;
}

struct Offset {
  std::ptrdiff_t dx, dy, dz;
};

// Offsets whose physical length is within tau, nearest first.
std::vector<Offset> offsets_within(double tau, const Spacing& s, const Extents3& dims) {
  std::vector<std::pair<double, Offset>> all;
  std::ptrdiff_t r[3];
  for (int a = 0; a < 3; ++a)
    r[a] = static_cast<std::ptrdiff_t>(
        std::floor(std::min(tau / s[a], static_cast<double>(dims[a]) - 1.0)));
  for (std::ptrdiff_t i = -r[0]; i <= r[0]; ++i)
    for (std::ptrdiff_t j = -r[1]; j <= r[1]; ++j)
      for (std::ptrdiff_t k = -r[2]; k <= r[2]; ++k) {
        const double x = static_cast<double>(i) * s[0];
        const double y = static_cast<double>(j) * s[1];
        const double z = static_cast<double>(k) * s[2];
        const double d = std::sqrt(x * x + y * y + z * z);
        if (d <= tau) all.push_back({d, {i, j, k}});
      }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Offset> out;
  out.reserve(all.size());
  for (const auto& [d, o] : all) out.push_back(o);
  return out;
}

// Number of `from` surface voxels with some `to` surface voxel within tau.
std::size_t count_within(const std::vector<std::size_t>& from, const std::vector<bool>& to_surface,
                         const std::vector<Offset>& offsets, const Extents3& dims) {
  std::size_t hits = 0;
  const auto W = static_cast<std::ptrdiff_t>(dims[0]);
  const auto H = static_cast<std::ptrdiff_t>(dims[1]);
  const auto D = static_cast<std::ptrdiff_t>(dims[2]);
  for (std::size_t idx : from) {
    const auto x = static_cast<std::ptrdiff_t>(idx / (dims[1] * dims[2]));
    const auto y = static_cast<std::ptrdiff_t>((idx / dims[2]) % dims[1]);
    const auto z = static_cast<std::ptrdiff_t>(idx % dims[2]);
    for (const auto& o : offsets) {
      const std::ptrdiff_t i = x + o.dx, j = y + o.dy, k = z + o.dz;
      if (i < 0 || j < 0 || k < 0 || i >= W || j >= H || k >= D) continue;
      if (to_surface[static_cast<std::size_t>((i * H + j) * D + k)]) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

std::optional<double> mean_of(const std::vector<MetricEntry>& entries, bool dice) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries) {
    const auto& v = dice ? e.dice : e.nsd;
    if (v) {
      s += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace

std::optional<double> dice_score(const Volume& pred, const Volume& gt, const ClassSet& class_set) {
  check_pair(pred, gt);
  const auto p = binarize(pred, class_set);
  const auto g = binarize(gt, class_set);
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    np += p[i];
    ng += g[i];
    both += p[i] && g[i];
  }
  if (np + ng == 0) return std::nullopt;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

std::vector<std::size_t> surface_voxels(const std::vector<bool>& mask, const Extents3& dims) {
  const std::size_t W = dims[0], H = dims[1], D = dims[2];
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < W; ++i)
    for (std::size_t j = 0; j < H; ++j)
      for (std::size_t k = 0; k < D; ++k) {
        const std::size_t idx = (i * H + j) * D + k;
        if (!mask[idx]) continue;
        const bool border = i == 0 || i + 1 == W || j == 0 || j + 1 == H || k == 0 || k + 1 == D ||
                            !mask[idx - H * D] || !mask[idx + H * D] || !mask[idx - D] ||
                            !mask[idx + D] || !mask[idx - 1] || !mask[idx + 1];
        if (border) out.push_back(idx);
      }
  return out;
}

std::optional<double> nsd(const Volume& pred, const Volume& gt, const ClassSet& class_set, double tau,
                          const Spacing& spacing) {
  check_pair(pred, gt);
  for (double s : spacing)
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::InvalidSpacing, "spacing must be positive");
  if (!(tau >= 0.0)) throw Error(ErrorKind::InvalidSpacing, "tolerance must be nonnegative");
  const Extents3 dims = pred.spatial();
  const auto p = binarize(pred, class_set);
  const auto g = binarize(gt, class_set);
  const auto sp = surface_voxels(p, dims);
  const auto sg = surface_voxels(g, dims);
  if (sp.empty() && sg.empty()) return std::nullopt;
  std::vector<bool> sp_mask(p.size(), false), sg_mask(g.size(), false);
  for (auto i : sp) sp_mask[i] = true;
  for (auto i : sg) sg_mask[i] = true;
  const auto offsets = offsets_within(tau, spacing, dims);
  const std::size_t num = count_within(sp, sg_mask, offsets, dims) + count_within(sg, sp_mask, offsets, dims);
  return static_cast<double>(num) / static_cast<double>(sp.size() + sg.size());
}

void HecSpec::validate(std::size_t num_classes) const {
  if (groups.empty()) throw Error(ErrorKind::InvalidConfig, "HEC spec has no groups");
  for (const auto& g : groups) {
    if (g.ids.empty()) throw Error(ErrorKind::InvalidConfig, "HEC group '" + g.name + "' is empty");
    for (int id : g.ids)
      if (id < 0 || static_cast<std::size_t>(id) >= num_classes)
        throw Error(ErrorKind::InvalidConfig, "HEC group '" + g.name + "' has invalid label " +
                                                  std::to_string(id));
  }
}

HecSpec hec_preset(const std::string& name, std::size_t num_classes) {
  HecSpec spec;
  if (name == "kits") {
    if (num_classes < 3) throw Error(ErrorKind::InvalidConfig, "the kits preset needs >= 3 classes");
    spec.groups = {{"Organ & Masses", {1, 2}}, {"Tumor", {2}}};
  } else if (name == "classes") {
    for (std::size_t c = 1; c < num_classes; ++c)
      spec.groups.push_back({"class " + std::to_string(c), {static_cast<int>(c)}});
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown HEC preset '" + name + "'");
  }
  spec.validate(num_classes);
  return spec;
}

MetricReport hec_evaluate(const Volume& pred, const Volume& gt, const HecSpec& spec, double tau,
                          const Spacing& spacing) {
  MetricReport r;
  for (const auto& g : spec.groups)
    r.groups.push_back({g.name, dice_score(pred, gt, g.ids), nsd(pred, gt, g.ids, tau, spacing)});
  return r;
}

MetricReport evaluate_case(const Volume& pred, const Volume& gt, std::size_t num_classes,
                           const HecSpec& spec, double tau, const Spacing& spacing) {
  MetricReport r = hec_evaluate(pred, gt, spec, tau, spacing);
  for (std::size_t c = 1; c < num_classes; ++c) {
    const ClassSet ids{static_cast<int>(c)};
    r.classes.push_back({"class " + std::to_string(c), dice_score(pred, gt, ids), nsd(pred, gt, ids, tau, spacing)});
  }
  r.mean_dice = mean_of(r.classes, true);
  r.mean_nsd = mean_of(r.classes, false);
  return r;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  MetricReport out;
  if (reports.empty()) return out;
  auto average = [&](auto member) {
    std::vector<MetricEntry> result;
    const auto& first = reports.front().*member;
    for (std::size_t e = 0; e < first.size(); ++e) {
      MetricEntry m{first[e].name, std::nullopt, std::nullopt};
      double sd = 0.0, sn = 0.0;
      std::size_t nd = 0, nn = 0;
      for (const auto& r : reports) {
        const auto& entries = r.*member;
        if (e >= entries.size()) continue;
        if (entries[e].dice) sd += *entries[e].dice, ++nd;
        if (entries[e].nsd) sn += *entries[e].nsd, ++nn;
      }
      if (nd) m.dice = sd / static_cast<double>(nd);
      if (nn) m.nsd = sn / static_cast<double>(nn);
      result.push_back(m);
    }
    return result;
  };
  out.classes = average(&MetricReport::classes);
  out.groups = average(&MetricReport::groups);
  out.mean_dice = mean_of(out.classes, true);
  out.mean_nsd = mean_of(out.classes, false);
  return out;
}

nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  auto entries = [&](const std::vector<MetricEntry>& es) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : es) arr.push_back({{"name", e.name}, {"dice", opt(e.dice)}, {"nsd", opt(e.nsd)}});
    return arr;
  };
  return {{"classes", entries(r.classes)},
          {"groups", entries(r.groups)},
          {"mean_dice", opt(r.mean_dice)},
          {"mean_nsd", opt(r.mean_nsd)}};
}

std::string format_report_table(const MetricReport& r) {
  std::ostringstream os;
  char line[128];
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (v)
      std::snprintf(buf, sizeof buf, "%7.2f", 100.0 * *v);
    else
      std::snprintf(buf, sizeof buf, "%7s", "n/a");
    return std::string(buf);
  };
  std::snprintf(line, sizeof line, "%-20s %7s %7s\n", "", "Dice", "NSD");
  os << line;
  for (const auto& e : r.classes) {
    std::snprintf(line, sizeof line, "%-20s %s %s\n", e.name.c_str(), cell(e.dice).c_str(), cell(e.nsd).c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%-20s %s %s\n", "mean", cell(r.mean_dice).c_str(), cell(r.mean_nsd).c_str());
  os << line;
  for (const auto& e : r.groups) {
    std::snprintf(line, sizeof line, "%-20s %s %s\n", ("HEC " + e.name).c_str(), cell(e.dice).c_str(),
                  cell(e.nsd).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace gasa
