#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gasa/commands.hpp"
#include "gasa/error.hpp"

namespace gasa {
namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + p.string());
  os << text;
  if (!os) throw Error(ErrorKind::IoError, "short write to " + p.string());
}

Tensor as_input(const Volume& v) {
  const Extents3 d = v.spatial();
  return Tensor::from({v.channels(), d[0], d[1], d[2]}, v.data);
}

double min_spacing(const Spacing& s) { return *std::min_element(s.begin(), s.end()); }

DatasetManifest manifest_in(const fs::path& data_dir) { return read_manifest(data_dir / kManifestName); }

std::string cell_key(std::size_t heads, std::size_t dm, PeMode pe, bool ln) {
  return "h" + std::to_string(heads) + "_d" + std::to_string(dm) + "_" + std::string(to_string(pe)) + "_ln" +
         (ln ? "1" : "0");
}

std::string format_ablation_table(const ojson& cells, const AblateConfig& a) {
  std::ostringstream os;
  char buf[64];
  for (bool ln : a.layer_norm) {
    os << "layer_norm=" << (ln ? "on" : "off") << " (mean foreground Dice x100)\n";
    std::snprintf(buf, sizeof buf, "%-10s", "Head/Dim");
    os << buf;
    for (auto pe : a.pe_modes) {
      std::snprintf(buf, sizeof buf, " %8s", std::string(to_string(pe)).c_str());
      os << buf;
    }
    std::snprintf(buf, sizeof buf, " %10s\n", "params");
    os << buf;
    for (const auto& [h, d] : a.grid) {
      std::snprintf(buf, sizeof buf, "%-10s", (std::to_string(h) + "/" + std::to_string(d)).c_str());
      os << buf;
      std::uint64_t params = 0;
      for (auto pe : a.pe_modes) {
        const auto& c = cells.at(cell_key(h, d, pe, ln));
        params = c.at("params").get<std::uint64_t>();
        if (c.at("dice").is_null())
          std::snprintf(buf, sizeof buf, " %8s", "n/a");
        else
          std::snprintf(buf, sizeof buf, " %8.2f", 100.0 * c.at("dice").get<double>());
        os << buf;
      }
      std::snprintf(buf, sizeof buf, " %10llu\n", static_cast<unsigned long long>(params));
      os << buf;
    }
  }
  return os.str();
}

}  // namespace

std::vector<Case> load_cases(const DatasetManifest& m, const std::vector<std::size_t>& indices) {
  std::vector<Case> out;
  for (auto i : indices) out.push_back({read_volume(m.image_path(i)), read_volume(m.labels_path(i))});
  return out;
}

TrainOutcome train_from_manifest(const RunConfig& cfg, const DatasetManifest& m, const TrainOptions& opt,
                                 const std::optional<Checkpoint>& resume) {
  cfg.validate();
  const auto raw = load_cases(m, m.train);
  const PreprocessPlan plan = resume && resume->plan ? *resume->plan : make_plan(raw);
  std::vector<Case> cases;
  for (const auto& c : raw) cases.push_back(preprocess_case(c, plan, cfg.model.num_classes));
  TrainState state = resume ? restore_train_state(*resume) : init_train_state(cfg.model, cfg.train);
  train(state, cases, cfg.train, opt);
  return {std::move(state), plan};
}

Volume predict_labels(const std::vector<PatchModel>& models, const PreprocessPlan& plan, const Volume& raw_image,
                      const SlidingWindowConfig& swc, std::size_t num_classes) {
  if (models.empty()) throw Error(ErrorKind::InvalidConfig, "no model to predict with");
  const Volume pre = preprocess_image(raw_image, plan);
  const Tensor x = as_input(pre);
  std::vector<double> prob;
  for (const auto& m : models) {
    const Tensor p = predict_probabilities(m, x, swc);
    if (prob.empty()) prob.assign(p.numel(), 0.0);
    const auto v = p.values();
    for (std::size_t i = 0; i < prob.size(); ++i) prob[i] += v[i];
  }
  for (double& v : prob) v /= static_cast<double>(models.size());
  Volume lab = argmax_labels(prob, num_classes, pre.spatial(), pre.spacing);
  if (lab.spatial() != raw_image.spatial() || lab.spacing != raw_image.spacing)
    lab = resample_labels_to(lab, raw_image.spatial(), raw_image.spacing, num_classes);
  return lab;
}

MetricReport evaluate_models(const std::vector<PatchModel>& models, const PreprocessPlan& plan,
                             const DatasetManifest& m, const std::vector<std::size_t>& indices, const RunConfig& cfg) {
  const HecSpec hec = hec_preset(cfg.metrics.hec, cfg.model.num_classes);
  std::vector<MetricReport> reports;
  for (const auto& c : load_cases(m, indices)) {
    const Volume pred = predict_labels(models, plan, c.image, cfg.window, cfg.model.num_classes);
    const double tau = cfg.metrics.nsd_tolerance_voxels * min_spacing(c.labels.spacing);
    reports.push_back(evaluate_case(pred, c.labels, cfg.model.num_classes, hec, tau, c.labels.spacing));
  }
  return average_reports(reports);
}

DatasetManifest cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const auto m = make_dataset(cfg.data.phantom, cfg.data.train_cases + cfg.data.test_cases, cfg.data.test_cases, out);
  log << "wrote " << m.cases.size() << " cases (" << m.train.size() << " train, " << m.test.size() << " test) to "
      << out.string() << "\n";
  std::ifstream is(out / kManifestName);
  log << is.rdbuf();
  return m;
}

Checkpoint cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out, std::ostream& log,
                     bool resume) {
  cfg.validate();
  ensure_dir(out);
  const DatasetManifest m = manifest_in(data_dir);
  if (m.spec.num_classes != cfg.model.num_classes)
    throw Error(ErrorKind::InvalidConfig, "dataset has " + std::to_string(m.spec.num_classes) +
                                              " classes, model expects " + std::to_string(cfg.model.num_classes));
  write_text(out / kResolvedConfigFile, to_json(cfg).dump(2) + "\n");
  std::optional<Checkpoint> prev;
  const fs::path ckpt_path = out / kCheckpointFile;
  if (resume && fs::exists(ckpt_path)) {
    prev = load_checkpoint(ckpt_path);
    log << "resuming from epoch " << prev->epoch << "\n";
  }
  std::ofstream jl(out / kTrainLogFile, prev ? std::ios::app : std::ios::trunc);
  if (!jl) throw Error(ErrorKind::IoError, "cannot write training log in " + out.string());
  log << "model parameters: " << count_model_params(cfg.model) << "\n";
  TrainOptions opt;
  opt.on_epoch = [&](const EpochLog& e) {
    jl << e.to_json_line() << "\n";
    jl.flush();
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %4zu  lr %.6f  loss %.6f  (%.1fs)\n", e.epoch, e.lr, e.loss, e.seconds);
    log << buf << std::flush;
  };
  auto outcome = train_from_manifest(cfg, m, opt, prev);
  Checkpoint ck = make_checkpoint(outcome.state, cfg.train, outcome.plan);
  save_checkpoint(ck, ckpt_path);
  log << "checkpoint: " << ckpt_path.string() << "\n";
  return ck;
}

MetricReport cmd_eval(const RunConfig& cfg, const fs::path& data_dir, const std::vector<fs::path>& checkpoints,
                      const fs::path& out, std::ostream& log) {
  cfg.validate();
  ensure_dir(out);
  if (checkpoints.empty()) throw Error(ErrorKind::InvalidConfig, "eval needs at least one checkpoint");
  const DatasetManifest m = manifest_in(data_dir);
  std::vector<PatchModel> models;
  std::optional<PreprocessPlan> plan;
  for (const auto& p : checkpoints) {
    const Checkpoint ck = load_checkpoint(p);
    if (!ck.plan) throw Error(ErrorKind::FormatError, p.string() + " carries no preprocessing plan");
    if (ck.model_cfg.num_classes != cfg.model.num_classes || ck.model_cfg.patch != cfg.window.patch)
      throw Error(ErrorKind::InvalidConfig, p.string() + " does not match the configured classes/patch");
    if (!plan) plan = ck.plan;
    models.push_back(make_patch_model(restore_train_state(ck).model));
  }
  const MetricReport rep = evaluate_models(models, *plan, m, m.test, cfg);
  write_text(out / kReportJsonFile, to_json(rep).dump(2) + "\n");
  const std::string table = format_report_table(rep);
  write_text(out / kReportTableFile, table);
  log << table;
  return rep;
}

ojson cmd_ablate(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out, std::ostream& log) {
  cfg.validate();
  const fs::path cells_dir = out / "cells";
  ensure_dir(cells_dir);
  const DatasetManifest m = manifest_in(data_dir);
  ojson cells = ojson::object();
  for (bool ln : cfg.ablate.layer_norm)
    for (const auto& [h, d] : cfg.ablate.grid)
      for (auto pe : cfg.ablate.pe_modes) {
        const std::string key = cell_key(h, d, pe, ln);
        const fs::path cell_path = cells_dir / (key + ".json");
        if (fs::exists(cell_path)) {
          std::ifstream is(cell_path);
          try {
            cells[key] = ojson::parse(is);
            log << key << ": cached\n";
            continue;
          } catch (const nlohmann::json::exception&) {
            log << key << ": unreadable cache, recomputing\n";
          }
        }
        RunConfig c = cfg;
        c.model.gasa_enabled = true;
        c.model.gasa.heads = h;
        c.model.gasa.d_model = d;
        c.model.gasa.pe_mode = pe;
        c.model.gasa.use_layer_norm = ln;
        c.train.epochs = cfg.ablate.epochs;
        c.train.iters_per_epoch = cfg.ablate.iters_per_epoch;
        const auto t0 = std::chrono::steady_clock::now();
        const TrainOutcome res = train_from_manifest(c, m);
        const MetricReport rep = evaluate_models({make_patch_model(res.state.model)}, res.plan, m, m.test, c);
        ojson cell;
        cell["heads"] = h;
        cell["d_model"] = d;
        cell["pe_mode"] = std::string(to_string(pe));
        cell["layer_norm"] = ln;
        cell["params"] = count_model_params(c.model);
        cell["final_loss"] = res.state.log.back().loss;
        cell["dice"] = rep.mean_dice ? ojson(*rep.mean_dice) : ojson(nullptr);
        cell["nsd"] = rep.mean_nsd ? ojson(*rep.mean_nsd) : ojson(nullptr);
        cell["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_text(cell_path, cell.dump(2) + "\n");
        log << key << ": dice " << cell["dice"].dump() << "\n" << std::flush;
        cells[key] = std::move(cell);
      }
  ojson report;
  report["cells"] = cells;
  const std::string table = format_ablation_table(cells, cfg.ablate);
  report["table"] = table;
  write_text(out / "ablation.json", report.dump(2) + "\n");
  write_text(out / "ablation.txt", table);
  log << table;
  return report;
}

int cmd_verify(const verify::VerifyOptions& opt, const std::optional<fs::path>& out, std::ostream& log) {
  const auto rep = verify::run_verify_suite(opt);
  for (const auto& c : rep.checks) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-18s %s %7.2fs  ", c.name.c_str(), c.passed ? "PASS" : "FAIL", c.seconds);
    log << buf << c.detail << "\n";
  }
  const auto j = rep.to_json();
  log << j.dump() << "\n";
  if (out) {
    ensure_dir(*out);
    write_text(*out / "verify.json", j.dump(2) + "\n");
  }
  return rep.all_passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace gasa
