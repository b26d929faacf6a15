#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "gasa/config.hpp"
#include "gasa/error.hpp"

namespace gasa {
namespace {

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, where + "." + key + ": " + e.what());
  }
}

}  // namespace

ojson to_json(const GasaConfig& c) {
  ojson j;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["pe_mode"] = std::string(to_string(c.pe_mode));
  j["use_layer_norm"] = c.use_layer_norm;
  j["dropout_p"] = c.dropout_p;
  return j;
}

ojson to_json(const BackboneConfig& c) {
  ojson j;
  j["in_channels"] = c.in_channels;
  j["num_classes"] = c.num_classes;
  j["stage_channels"] = c.stage_channels;
  j["downsample_strides"] = c.downsample_strides;
  j["patch"] = c.patch;
  j["gasa_enabled"] = c.gasa_enabled;
  j["gasa"] = to_json(c.gasa);
  j["variant"] = std::string(to_string(c.variant));
  j["large_res_blocks"] = c.large_res_blocks;
  j["large_final_res_blocks"] = c.large_final_res_blocks;
  j["leaky_slope"] = c.leaky_slope;
  return j;
}

ojson to_json(const TrainConfig& c) {
  ojson j;
  j["lr0"] = c.lr0;
  j["momentum"] = c.momentum;
  j["epochs"] = c.epochs;
  j["iters_per_epoch"] = c.iters_per_epoch;
  j["batch"] = c.batch;
  j["patch"] = c.patch;
  j["seed"] = c.seed;
  j["poly_exponent"] = c.poly_exponent;
  j["grad_clip"] = c.grad_clip;
  j["foreground_fraction"] = c.foreground_fraction;
  return j;
}

ojson to_json(const SlidingWindowConfig& c) {
  ojson j;
  j["patch"] = c.patch;
  j["overlap"] = c.overlap;
  j["sigma_scale"] = c.sigma_scale;
  j["tta_mirror"] = c.tta_mirror;
  return j;
}

ojson to_json(const PreprocessPlan& p) {
  ojson j;
  j["stats"] = {{"lower", p.stats.lower}, {"upper", p.stats.upper}, {"mean", p.stats.mean}, {"stddev", p.stats.stddev}};
  j["target"] = p.target;
  return j;
}

ojson to_json(const RunConfig& c) {
  ojson j;
  j["data"] = {{"phantom", to_json(c.data.phantom)},
               {"train_cases", c.data.train_cases},
               {"test_cases", c.data.test_cases}};
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["window"] = to_json(c.window);
  j["metrics"] = {{"nsd_tolerance_voxels", c.metrics.nsd_tolerance_voxels}, {"hec", c.metrics.hec}};
  ojson grid = ojson::array();
  for (const auto& [h, d] : c.ablate.grid) grid.push_back({h, d});
  ojson pes = ojson::array();
  for (auto m : c.ablate.pe_modes) pes.push_back(std::string(to_string(m)));
  j["ablate"] = {{"grid", grid},
                 {"pe_modes", pes},
                 {"layer_norm", c.ablate.layer_norm},
                 {"epochs", c.ablate.epochs},
                 {"iters_per_epoch", c.ablate.iters_per_epoch}};
  return j;
}

GasaConfig gasa_config_from_json(const json& j, GasaConfig c) {
  const std::string w = "model.gasa";
  check_keys(j, {"d_model", "heads", "pe_mode", "use_layer_norm", "dropout_p"}, w);
  read(j, "d_model", c.d_model, w);
  read(j, "heads", c.heads, w);
  std::string pe(to_string(c.pe_mode));
  read(j, "pe_mode", pe, w);
  c.pe_mode = parse_pe_mode(pe);
  read(j, "use_layer_norm", c.use_layer_norm, w);
  read(j, "dropout_p", c.dropout_p, w);
  return c;
}

BackboneConfig backbone_config_from_json(const json& j, BackboneConfig c) {
  const std::string w = "model";
  check_keys(j,
             {"in_channels", "num_classes", "stage_channels", "downsample_strides", "patch", "gasa_enabled", "gasa",
              "variant", "large_res_blocks", "large_final_res_blocks", "leaky_slope"},
             w);
  read(j, "in_channels", c.in_channels, w);
  read(j, "num_classes", c.num_classes, w);
  read(j, "stage_channels", c.stage_channels, w);
  read(j, "downsample_strides", c.downsample_strides, w);
  read(j, "patch", c.patch, w);
  read(j, "gasa_enabled", c.gasa_enabled, w);
  if (j.contains("gasa")) c.gasa = gasa_config_from_json(j.at("gasa"), c.gasa);
  std::string variant(to_string(c.variant));
  read(j, "variant", variant, w);
  c.variant = parse_variant(variant);
  read(j, "large_res_blocks", c.large_res_blocks, w);
  read(j, "large_final_res_blocks", c.large_final_res_blocks, w);
  read(j, "leaky_slope", c.leaky_slope, w);
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  const std::string w = "train";
  check_keys(j,
             {"lr0", "momentum", "epochs", "iters_per_epoch", "batch", "patch", "seed", "poly_exponent", "grad_clip",
              "foreground_fraction"},
             w);
  read(j, "lr0", c.lr0, w);
  read(j, "momentum", c.momentum, w);
  read(j, "epochs", c.epochs, w);
  read(j, "iters_per_epoch", c.iters_per_epoch, w);
  read(j, "batch", c.batch, w);
  read(j, "patch", c.patch, w);
  read(j, "seed", c.seed, w);
  read(j, "poly_exponent", c.poly_exponent, w);
  read(j, "grad_clip", c.grad_clip, w);
  read(j, "foreground_fraction", c.foreground_fraction, w);
  return c;
}

SlidingWindowConfig window_config_from_json(const json& j, SlidingWindowConfig c) {
  const std::string w = "window";
  check_keys(j, {"patch", "overlap", "sigma_scale", "tta_mirror"}, w);
  read(j, "patch", c.patch, w);
  read(j, "overlap", c.overlap, w);
  read(j, "sigma_scale", c.sigma_scale, w);
  read(j, "tta_mirror", c.tta_mirror, w);
  return c;
}

PreprocessPlan plan_from_json(const json& j) {
  const std::string w = "plan";
  check_keys(j, {"stats", "target"}, w);
  PreprocessPlan p;
  if (j.contains("stats")) {
    const auto& s = j.at("stats");
    check_keys(s, {"lower", "upper", "mean", "stddev"}, "plan.stats");
    read(s, "lower", p.stats.lower, w);
    read(s, "upper", p.stats.upper, w);
    read(s, "mean", p.stats.mean, w);
    read(s, "stddev", p.stats.stddev, w);
  }
  read(j, "target", p.target, w);
  return p;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  check_keys(j, {"data", "model", "train", "window", "metrics", "ablate"}, "config");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"phantom", "train_cases", "test_cases"}, "data");
    if (d.contains("phantom")) {
      // Overlay onto the current spec so partial phantom objects work.
      json merged = json::parse(to_json(c.data.phantom).dump());
      for (const auto& [k, v] : d.at("phantom").items()) merged[k] = v;
      c.data.phantom = phantom_spec_from_json(merged);
    }
    read(d, "train_cases", c.data.train_cases, "data");
    read(d, "test_cases", c.data.test_cases, "data");
  }
  if (j.contains("model")) c.model = backbone_config_from_json(j.at("model"), c.model);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("window")) c.window = window_config_from_json(j.at("window"), c.window);
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    check_keys(m, {"nsd_tolerance_voxels", "hec"}, "metrics");
    read(m, "nsd_tolerance_voxels", c.metrics.nsd_tolerance_voxels, "metrics");
    read(m, "hec", c.metrics.hec, "metrics");
  }
  if (j.contains("ablate")) {
    const auto& a = j.at("ablate");
    check_keys(a, {"grid", "pe_modes", "layer_norm", "epochs", "iters_per_epoch"}, "ablate");
    read(a, "grid", c.ablate.grid, "ablate");
    if (a.contains("pe_modes")) {
      std::vector<std::string> names;
      read(a, "pe_modes", names, "ablate");
      c.ablate.pe_modes.clear();
      for (const auto& n : names) c.ablate.pe_modes.push_back(parse_pe_mode(n));
    }
    read(a, "layer_norm", c.ablate.layer_norm, "ablate");
    read(a, "epochs", c.ablate.epochs, "ablate");
    read(a, "iters_per_epoch", c.ablate.iters_per_epoch, "ablate");
  }
  return c;
}

void RunConfig::validate() const {
  try {
    data.phantom.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  if (data.train_cases < 1) throw Error(ErrorKind::InvalidConfig, "data.train_cases must be >= 1");
  model.validate();
  train.validate();
  window.validate();
  if (model.patch != train.patch || window.patch != train.patch)
    throw Error(ErrorKind::InvalidConfig, "model.patch, train.patch and window.patch must agree");
  if (data.phantom.num_classes != model.num_classes)
    throw Error(ErrorKind::InvalidConfig, "data.phantom.num_classes must equal model.num_classes");
  if (!(metrics.nsd_tolerance_voxels >= 0.0))
    throw Error(ErrorKind::InvalidConfig, "metrics.nsd_tolerance_voxels must be >= 0");
  hec_preset(metrics.hec, model.num_classes);
  if (ablate.grid.empty() || ablate.pe_modes.empty() || ablate.layer_norm.empty())
    throw Error(ErrorKind::InvalidConfig, "ablate grid, pe_modes and layer_norm must be nonempty");
  for (const auto& [h, d] : ablate.grid) {
    GasaConfig g = model.resolved_gasa();
    g.heads = h;
    g.d_model = d;
    g.validate();
  }
  if (ablate.epochs < 1 || ablate.iters_per_epoch < 1)
    throw Error(ErrorKind::InvalidConfig, "ablate epochs and iters_per_epoch must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::IoError, "cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace gasa
