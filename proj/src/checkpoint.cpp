#include "unicorn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>

namespace unicorn {

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, uint32_t x) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t x) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<uint64_t>(x)); }

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ValidationError("checkpoint: truncated file");
  uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(b[i]) << (8 * i);
  return x;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw ValidationError("checkpoint: truncated file");
  uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(b[i]) << (8 * i);
  return x;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ParamList& params) {
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (!t.defined()) throw ValidationError("checkpoint: undefined tensor '" + name + "'");
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, 2);
    put_u64(os, static_cast<uint64_t>(t.rows()));
    put_u64(os, static_cast<uint64_t>(t.cols()));
    for (double x : t.data()) put_f64(os, x);
  }
  if (!os) throw Error("checkpoint: write failed");
}

void save_checkpoint_file(const std::string& path, const ParamList& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(os, params);
}

std::map<std::string, Mat> load_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
    throw ValidationError("checkpoint: bad magic (not a weight file)");
  const uint32_t count = get_u32(is);
  std::map<std::string, Mat> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (name_len > 0 && !is.read(name.data(), name_len))
      throw ValidationError("checkpoint: truncated file");
    const uint32_t ndim = get_u32(is);
    if (ndim != 2)
      throw ValidationError("checkpoint: tensor '" + name + "' has unsupported rank " +
                            std::to_string(ndim));
    const uint64_t rows = get_u64(is);
    const uint64_t cols = get_u64(is);
    if (rows > (1u << 24) || cols > (1u << 24) || rows * cols > (1u << 27))
      throw ValidationError("checkpoint: tensor '" + name + "' has implausible shape");
    Mat m(static_cast<int>(rows), static_cast<int>(cols));
    for (auto& x : m.v) x = std::bit_cast<double>(get_u64(is));
    if (!out.emplace(name, std::move(m)).second)
      throw ValidationError("checkpoint: duplicate tensor name '" + name + "'");
  }
  return out;
}

std::map<std::string, Mat> load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(is);
}

}  // namespace unicorn
