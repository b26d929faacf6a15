// gasa: synth | train | eval | ablate | verify

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gasa/commands.hpp"
#include "gasa/error.hpp"
#include "gasa/kernels.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::string> checkpoints;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant, gasa, pe, layernorm, hec;
  std::optional<std::size_t> heads, dmodel, epochs, classes;
  bool tta = false;
  bool resume = false;
  bool print_config = false;
  bool perturb_gradient = false;
};

bool parse_on_off(const std::string& v, const char* flag) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw gasa::Error(gasa::ErrorKind::InvalidConfig, std::string(flag) + " expects on|off, got '" + v + "'");
}

gasa::RunConfig resolve(const Flags& f) {
  gasa::RunConfig c = f.config.empty() ? gasa::RunConfig{} : gasa::load_run_config(f.config);
  if (f.seed) {
    c.data.phantom.seed = *f.seed;
    c.train.seed = *f.seed;
  }
  if (f.variant) c.model.variant = gasa::parse_variant(*f.variant);
  if (f.gasa) c.model.gasa_enabled = parse_on_off(*f.gasa, "--gasa");
  if (f.pe) c.model.gasa.pe_mode = gasa::parse_pe_mode(*f.pe);
  if (f.heads) c.model.gasa.heads = *f.heads;
  if (f.dmodel) c.model.gasa.d_model = *f.dmodel;
  if (f.layernorm) c.model.gasa.use_layer_norm = parse_on_off(*f.layernorm, "--layernorm");
  if (f.tta) c.window.tta_mirror = true;
  if (f.hec) c.metrics.hec = *f.hec;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.classes) {
    c.data.phantom.num_classes = *f.classes;
    c.model.num_classes = *f.classes;
  }
  c.validate();
  return c;
}

void add_common(CLI::App* app, Flags& f, bool needs_out) {
  app->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* out = app->add_option("--out", f.out, "output directory");
  if (needs_out) out->required();
  app->add_option("--seed", f.seed, "seed for data synthesis and training");
  app->add_option("--variant", f.variant, "backbone variant")->check(CLI::IsMember({"base", "large"}));
  app->add_option("--gasa", f.gasa, "enable the attention block")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--pe", f.pe, "positional embedding placement")->check(CLI::IsMember({"none", "before", "after"}));
  app->add_option("--heads", f.heads, "attention heads");
  app->add_option("--dmodel", f.dmodel, "token width");
  app->add_option("--layernorm", f.layernorm, "layer norm after Q/K/V")->check(CLI::IsMember({"on", "off"}));
  app->add_flag("--tta", f.tta, "mirror test-time augmentation");
  app->add_option("--hec", f.hec, "evaluation class grouping preset (kits|classes)");
  app->add_option("--epochs", f.epochs, "training epochs");
  app->add_option("--classes", f.classes, "number of classes including background");
  app->add_flag("--print-config", f.print_config, "print the resolved configuration and exit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric segmentation with global axial self-attention"};
  app.require_subcommand(1);
  Flags f;
  auto* synth = app.add_subcommand("synth", "generate the phantom dataset");
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
  auto* ablate = app.add_subcommand("ablate", "head/width and positional-embedding sweep");
  auto* verify = app.add_subcommand("verify", "run the property and oracle suites");
  for (auto* s : {synth, train, eval, ablate}) add_common(s, f, true);
  add_common(verify, f, false);
  for (auto* s : {train, eval, ablate}) s->add_option("--data", f.data, "dataset directory")->required();
  train->add_flag("--resume", f.resume, "continue from OUT/model.ckpt when present");
  eval->add_option("--checkpoint", f.checkpoints, "checkpoint file(s); softmax outputs are averaged")->required();
  verify->add_flag("--perturb-gradient", f.perturb_gradient, "corrupt analytic gradients (detector self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? gasa::kExitOk : gasa::kExitUsage;
  }

  gasa::RunConfig cfg;
  try {
    cfg = resolve(f);
  } catch (const gasa::Error& e) {
    std::cerr << "gasa: " << e.what() << "\n";
    return gasa::kExitUsage;
  }
  if (f.print_config) {
    std::cout << gasa::to_json(cfg).dump(2) << "\n";
    return gasa::kExitOk;
  }

  try {
    std::clog << "kernels: " << gasa::kernels::isa_name(gasa::kernels::active_isa()) << "\n";
    if (synth->parsed()) {
      gasa::cmd_synth(cfg, f.out, std::cout);
    } else if (train->parsed()) {
      gasa::cmd_train(cfg, f.data, f.out, std::cout, f.resume);
    } else if (eval->parsed()) {
      std::vector<std::filesystem::path> ck(f.checkpoints.begin(), f.checkpoints.end());
      gasa::cmd_eval(cfg, f.data, ck, f.out, std::cout);
    } else if (ablate->parsed()) {
      gasa::cmd_ablate(cfg, f.data, f.out, std::cout);
    } else if (verify->parsed()) {
      gasa::verify::VerifyOptions opt;
      if (f.seed) opt.seed = *f.seed;
      opt.perturb_gradient = f.perturb_gradient;
      std::optional<std::filesystem::path> out;
      if (!f.out.empty()) out = f.out;
      return gasa::cmd_verify(opt, out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "gasa: " << e.what() << "\n";
    return gasa::kExitRuntime;
  }
  return gasa::kExitOk;
}
