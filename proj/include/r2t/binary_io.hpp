#pragma once

// On-disk binary formats.
//
// Checkpoint ("R2TC"):
//   magic "R2TC" | u32 version | u32 count |
//   count x { u32 name_len | name bytes (UTF-8) | u32 ndim | u32 dims[ndim] | f32 data[] }
//
// Array ("R2TA"), 16-byte header then row-major data:
//   magic "R2TA" | u16 version | u16 ndim | u32 dim0 | u32 dim1 | f32 data[]
//   (ndim is 1 or 2; dim1 is 1 for 1-D arrays)
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "r2t/autograd.hpp"

namespace r2t {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr uint16_t kArrayVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

std::string encode_checkpoint(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_checkpoint(const std::string& bytes);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

std::string encode_array(const Shape& shape, const std::vector<float>& data);
NamedArray decode_array(const std::string& bytes);
void write_array(const std::filesystem::path& path, const Shape& shape, const std::vector<float>& data);
NamedArray read_array(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it into place.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

uint64_t fnv1a64(const std::string& bytes);
std::string hex64(uint64_t v);

}  // namespace r2t
