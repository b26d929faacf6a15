#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gasa/config.hpp"
#include "gasa/error.hpp"
#include "gasa/trainer.hpp"

namespace gasa {
namespace {

constexpr char kMagic[9] = {'G', 'A', 'S', 'A', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    bytes(v.data(), v.size() * sizeof(double));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  void bytes(void* p, std::size_t n) {
    if (n > buf_.size() - pos_) throw Error(ErrorKind::FormatError, "checkpoint is truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::size_t count(std::size_t elem_size) {
    const std::uint64_t n = u64();
    if (n > (buf_.size() - pos_) / elem_size) throw Error(ErrorKind::FormatError, "checkpoint is truncated");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    std::string s(count(1), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(count(sizeof(double)));
    bytes(v.data(), v.size() * sizeof(double));
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

std::string config_text(const Checkpoint& c) {
  ojson j;
  j["model"] = to_json(c.model_cfg);
  j["train"] = to_json(c.train_cfg);
  if (c.plan) j["plan"] = to_json(*c.plan);
  return j.dump();
}

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  auto same_log = [](const std::vector<EpochLog>& x, const std::vector<EpochLog>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].epoch != y[i].epoch || x[i].lr != y[i].lr || x[i].loss != y[i].loss || x[i].seconds != y[i].seconds)
        return false;
    return true;
  };
  return config_text(a) == config_text(b) && a.names == b.names && a.shapes == b.shapes && a.values == b.values &&
         a.velocity == b.velocity && a.epoch == b.epoch && a.rng == b.rng && same_log(a.log, b.log);
}

Checkpoint make_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::optional<PreprocessPlan>& plan) {
  Checkpoint c;
  c.model_cfg = state.model.cfg;
  c.train_cfg = cfg;
  c.plan = plan;
  for (const auto& p : state.model.parameters()) {
    c.names.push_back(p.name);
    c.shapes.push_back(p.tensor.shape());
    const auto v = p.tensor.values();
    c.values.emplace_back(v.begin(), v.end());
  }
  c.velocity = state.velocity;
  c.epoch = state.epoch;
  c.rng = state.rng;
  c.log = state.log;
  return c;
}

TrainState restore_train_state(const Checkpoint& ckpt) {
  Rng scratch(0);
  TrainState s{build_model(ckpt.model_cfg, scratch), ckpt.velocity, ckpt.epoch, ckpt.rng, ckpt.log};
  const ParamList params = s.model.parameters();
  if (params.size() != ckpt.names.size() || ckpt.velocity.size() != params.size())
    throw Error(ErrorKind::FormatError, "checkpoint holds " + std::to_string(ckpt.names.size()) +
                                            " parameters, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    if (params[i].name != ckpt.names[i] || t.shape() != ckpt.shapes[i] || ckpt.values[i].size() != t.numel() ||
        ckpt.velocity[i].size() != t.numel())
      throw Error(ErrorKind::FormatError, "checkpoint parameter '" + ckpt.names[i] + "' does not match the model");
    std::copy(ckpt.values[i].begin(), ckpt.values[i].end(), t.mutable_values().begin());
  }
  return s;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(config_text(ckpt));
  w.u64(ckpt.names.size());
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    w.str(ckpt.names[i]);
    w.u64(ckpt.shapes[i].size());
    for (auto d : ckpt.shapes[i]) w.u64(d);
    w.doubles(ckpt.values[i]);
    w.doubles(ckpt.velocity.at(i));
  }
  w.u64(ckpt.epoch);
  w.u64(ckpt.rng.seed);
  w.u64(ckpt.rng.counter);
  w.u64(ckpt.log.size());
  for (const auto& e : ckpt.log) {
    w.u64(e.epoch);
    w.f64(e.lr);
    w.f64(e.loss);
    w.f64(e.seconds);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write checkpoint " + path.string());
  os.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!os) throw Error(ErrorKind::IoError, "short write of checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  Reader r(ss.str());
  char magic[sizeof kMagic] = {};
  try {
    r.bytes(magic, sizeof magic);
  } catch (const Error&) {
    throw Error(ErrorKind::VersionMismatch, path.string() + " is not a checkpoint");
  }
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(ErrorKind::VersionMismatch, path.string() + " has an unknown magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(r.str());
    c.model_cfg = backbone_config_from_json(j.at("model"));
    c.train_cfg = train_config_from_json(j.at("train"));
    if (j.contains("plan")) c.plan = plan_from_json(j.at("plan"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("checkpoint config: ") + e.what());
  }
  const std::size_t n = r.count(1);
  for (std::size_t i = 0; i < n; ++i) {
    c.names.push_back(r.str());
    Shape s(r.count(sizeof(std::uint64_t)));
    for (auto& d : s) d = r.u64();
    c.shapes.push_back(std::move(s));
    c.values.push_back(r.doubles());
    c.velocity.push_back(r.doubles());
  }
  c.epoch = r.u64();
  c.rng.seed = r.u64();
  c.rng.counter = r.u64();
  const std::size_t nlog = r.count(32);
  for (std::size_t i = 0; i < nlog; ++i) {
    EpochLog e;
    e.epoch = r.u64();
    e.lr = r.f64();
    e.loss = r.f64();
    e.seconds = r.f64();
    c.log.push_back(e);
  }
  if (!r.done()) throw Error(ErrorKind::FormatError, "trailing bytes after checkpoint payload");
  return c;
}

}  // namespace gasa
