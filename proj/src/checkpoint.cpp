#include "cycleasr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace cycleasr {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'S', 'R'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("checkpoint " + path + ": truncated file");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw FormatError("checkpoint " + path + ": truncated file");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::string& path) {
  uint64_t bits = get_u64(is, path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const ParamRegistry& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u64(os, params.size());
  for (const auto& [name, t] : params.items()) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u64(os, static_cast<uint64_t>(d));
    for (Real v : t.data()) put_f64(os, static_cast<double>(v));
  }
  if (!os) throw IoError("failed while writing checkpoint: " + path);
}

void load_checkpoint(ParamRegistry& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint for reading: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint " + path + ": bad magic");
  }
  const uint32_t version = get_u32(is, path);
  if (version != kVersion) {
    throw FormatError("checkpoint " + path + ": unsupported version " +
                      std::to_string(version));
  }
  const uint64_t count = get_u64(is, path);
  if (count != params.size()) {
    throw FormatError("checkpoint " + path + ": has " + std::to_string(count) +
                      " parameters, model expects " + std::to_string(params.size()));
  }
  for (uint64_t k = 0; k < count; ++k) {
    const uint32_t name_len = get_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw FormatError("checkpoint " + path + ": truncated name");
    }
    if (!params.has(name)) {
      throw FormatError("checkpoint " + path + ": unknown parameter '" + name + "'");
    }
    Tensor t = params.find(name);
    const uint32_t ndim = get_u32(is, path);
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(get_u64(is, path));
    if (shape != t.shape()) {
      throw FormatError("checkpoint " + path + ": parameter '" + name + "' has shape " +
                        shape_string(shape) + ", model expects " + shape_string(t.shape()));
    }
    for (Real& v : t.data()) v = static_cast<Real>(get_f64(is, path));
  }
}

}  // namespace cycleasr
