#include "r2t/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace r2t {
namespace {

class Writer {
 public:
  void bytes(const void* p, size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u16(uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out_.append(b, 2);
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { u32(std::bit_cast<uint32_t>(f)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  void need(size_t n) const {
    if (pos_ + n > s_.size()) throw FormatError("truncated file");
  }
  std::string bytes(size_t n) {
    need(n);
    std::string r = s_.substr(pos_, n);
    pos_ += n;
    return r;
  }
  uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(s_.data() + pos_);
    pos_ += 2;
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(s_.data() + pos_);
    pos_ += 4;
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedArray>& arrays) {
  Writer w;
  w.bytes("R2TC", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.data.size() != numel(a.shape)) throw FormatError("array '" + a.name + "' size does not match its shape");
    w.u32(static_cast<uint32_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.u32(static_cast<uint32_t>(a.shape.size()));
    for (int d : a.shape) w.u32(static_cast<uint32_t>(d));
    for (float f : a.data) w.f32(f);
  }
  return w.take();
}

std::vector<NamedArray> decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "R2TC") throw FormatError("not a checkpoint (bad magic)");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = r.u32();
  std::vector<NamedArray> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.bytes(r.u32());
    const uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError("implausible rank for array '" + a.name + "'");
    for (uint32_t d = 0; d < ndim; ++d) a.shape.push_back(static_cast<int>(r.u32()));
    const size_t n = numel(a.shape);
    r.need(n * 4);
    a.data.resize(n);
    for (auto& f : a.data) f = r.f32();
    out.push_back(std::move(a));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  atomic_write(path, encode_checkpoint(arrays));
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::string encode_array(const Shape& shape, const std::vector<float>& data) {
  if (shape.empty() || shape.size() > 2) throw FormatError("R2TA arrays must be 1-D or 2-D");
  if (data.size() != numel(shape)) throw FormatError("array size does not match its shape");
  Writer w;
  w.bytes("R2TA", 4);
  w.u16(kArrayVersion);
  w.u16(static_cast<uint16_t>(shape.size()));
  w.u32(static_cast<uint32_t>(shape[0]));
  w.u32(static_cast<uint32_t>(shape.size() == 2 ? shape[1] : 1));
  for (float f : data) w.f32(f);
  return w.take();
}

NamedArray decode_array(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "R2TA") throw FormatError("not an array file (bad magic)");
  const uint16_t version = r.u16();
  if (version != kArrayVersion) throw FormatError("unsupported array version " + std::to_string(version));
  const uint16_t ndim = r.u16();
  if (ndim < 1 || ndim > 2) throw FormatError("unsupported array rank " + std::to_string(ndim));
  NamedArray a;
  const uint32_t d0 = r.u32(), d1 = r.u32();
  a.shape = ndim == 2 ? Shape{static_cast<int>(d0), static_cast<int>(d1)} : Shape{static_cast<int>(d0)};
  const size_t n = numel(a.shape);
  r.need(n * 4);
  a.data.resize(n);
  for (auto& f : a.data) f = r.f32();
  if (!r.done()) throw FormatError("trailing bytes after array payload");
  return a;
}

void write_array(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& data) {
  atomic_write(path, encode_array(shape, data));
}

NamedArray read_array(const std::filesystem::path& path) { return decode_array(read_file(path)); }

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace r2t
