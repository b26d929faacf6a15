#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gasa/error.hpp"
#include "gasa/volume.hpp"

namespace gasa {
namespace {

constexpr char kMagic[8] = {'G', 'A', 'S', 'A', 'V', 'O', 'L', '1'};

static_assert(std::endian::native == std::endian::little, "the .gvol writer assumes a little-endian host");

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U16: return 2;
  }
  return 8;
}

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  if (s == "u16") return DType::U16;
  throw Error(ErrorKind::FormatError, "unknown dtype '" + s + "'");
}

VolumeKind parse_kind(const std::string& s) {
  if (s == "image") return VolumeKind::Image;
  if (s == "labels") return VolumeKind::Labels;
  throw Error(ErrorKind::FormatError, "unknown kind '" + s + "'");
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

}  // namespace

std::string_view to_string(VolumeKind k) { return k == VolumeKind::Labels ? "labels" : "image"; }

std::string_view to_string(DType t) {
  switch (t) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::U16: return "u16";
  }
  return "f64";
}

Volume Volume::image(Extents3 dims, std::vector<double> data, Spacing spacing) {
  Volume v;
  v.kind = VolumeKind::Image;
  v.dtype = DType::F64;
  v.shape = {dims[0], dims[1], dims[2]};
  v.data = std::move(data);
  v.spacing = spacing;
  v.validate();
  return v;
}

Volume Volume::labels(Extents3 dims, std::vector<double> data, Spacing spacing) {
  Volume v;
  v.kind = VolumeKind::Labels;
  v.dtype = DType::U16;
  v.shape = {dims[0], dims[1], dims[2]};
  v.data = std::move(data);
  v.spacing = spacing;
  v.validate();
  return v;
}

Extents3 Volume::spatial() const {
  if (shape.size() == 4) return {shape[1], shape[2], shape[3]};
  if (shape.size() == 3) return {shape[0], shape[1], shape[2]};
  throw Error(ErrorKind::ShapeMismatch, "volume shape must have 3 or 4 axes, got " + shape_str(shape));
}

std::size_t Volume::voxels() const {
  const auto s = spatial();
  return s[0] * s[1] * s[2];
}

void Volume::validate() const {
  if (shape.size() != 3 && shape.size() != 4)
    throw Error(ErrorKind::ShapeMismatch, "volume shape must have 3 or 4 axes, got " + shape_str(shape));
  for (auto e : shape)
    if (e == 0) throw Error(ErrorKind::ShapeMismatch, "zero extent in volume shape " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw Error(ErrorKind::ShapeMismatch, "volume shape " + shape_str(shape) + " needs " +
                                              std::to_string(shape_numel(shape)) + " values, got " +
                                              std::to_string(data.size()));
  for (double s : spacing)
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorKind::InvalidSpacing, "spacing must be positive and finite");
  if (kind == VolumeKind::Labels)
    for (double v : data)
      if (!(v >= 0.0) || v != std::floor(v))
        throw Error(ErrorKind::FormatError, "label volumes hold nonnegative integers only");
  if (dtype == DType::U16)
    for (double v : data)
      if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v))
        throw Error(ErrorKind::FormatError, "value not representable as u16");
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  v.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  const std::size_t n = v.data.size();
  switch (v.dtype) {
    case DType::F64:
      out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(n * 8));
      break;
    case DType::F32: {
      std::vector<float> buf(v.data.begin(), v.data.end());
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
      break;
    }
    case DType::U16: {
      std::vector<std::uint16_t> buf(n);
      for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<std::uint16_t>(v.data[i]);
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 2));
      break;
    }
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());

  nlohmann::ordered_json header;
  header["dtype"] = to_string(v.dtype);
  header["shape"] = v.shape;
  header["spacing"] = v.spacing;
  header["origin"] = v.origin;
  header["kind"] = to_string(v.kind);
  std::ofstream js(sidecar(path), std::ios::trunc);
  if (!js) throw Error(ErrorKind::IoError, "cannot open " + sidecar(path).string());
  js << header.dump(2) << '\n';
  if (!js) throw Error(ErrorKind::IoError, "write failed: " + sidecar(path).string());
}

Volume read_volume(const std::filesystem::path& path) {
  std::ifstream js(sidecar(path));
  if (!js) throw Error(ErrorKind::IoError, "cannot open " + sidecar(path).string());
  Volume v;
  try {
    const auto header = nlohmann::json::parse(js);
    v.dtype = parse_dtype(header.at("dtype").get<std::string>());
    v.kind = parse_kind(header.at("kind").get<std::string>());
    v.shape = header.at("shape").get<Shape>();
    v.spacing = header.at("spacing").get<Spacing>();
    v.origin = header.at("origin").get<Spacing>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, sidecar(path).string() + ": " + e.what());
  }
  if (v.shape.size() != 3 && v.shape.size() != 4)
    throw Error(ErrorKind::FormatError, "header shape must have 3 or 4 axes");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(ErrorKind::FormatError, path.string() + ": bad magic");
  const std::size_t n = shape_numel(v.shape);
  const std::size_t bytes = n * dtype_size(v.dtype);
  std::vector<char> raw(bytes);
  in.read(raw.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes)
    throw Error(ErrorKind::FormatError, path.string() + ": payload shorter than header shape " +
                                            shape_str(v.shape));
  if (in.peek() != std::ifstream::traits_type::eof())
    throw Error(ErrorKind::FormatError, path.string() + ": trailing bytes after payload");
  v.data.resize(n);
  switch (v.dtype) {
    case DType::F64: std::memcpy(v.data.data(), raw.data(), bytes); break;
    case DType::F32:
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, raw.data() + 4 * i, 4);
        v.data[i] = f;
      }
      break;
    case DType::U16:
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t u;
        std::memcpy(&u, raw.data() + 2 * i, 2);
        v.data[i] = u;
      }
      break;
  }
  try {
    v.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
  return v;
}

}  // namespace gasa
