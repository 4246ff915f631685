#include <filesystem>

#include "doctest.h"
#include "r2t/binary_io.hpp"

using namespace r2t;

TEST_CASE("checkpoint round trip") {
  std::vector<NamedArray> arrays = {{"enc.conv1.w", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"fuse.sink_key", {1}, {-0.5f}}};
  const std::string bytes = encode_checkpoint(arrays);
  CHECK(bytes.substr(0, 4) == "R2TC");
  const auto back = decode_checkpoint(bytes);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "enc.conv1.w");
  CHECK(back[0].shape == Shape{2, 3});
  CHECK(back[0].data == arrays[0].data);
  CHECK(back[1].data == arrays[1].data);
}

TEST_CASE("checkpoint layout is little-endian with length-prefixed names") {
  const std::string bytes = encode_checkpoint({{"ab", {1}, {1.0f}}});
  // magic, version 1, count 1, name_len 2, "ab", ndim 1, dim 1, 1.0f
  const std::string expected = std::string("R2TC") + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x01\x00\x00\x00", 4) + std::string("\x02\x00\x00\x00", 4) + "ab" +
                               std::string("\x01\x00\x00\x00", 4) + std::string("\x01\x00\x00\x00", 4) +
                               std::string("\x00\x00\x80\x3f", 4);
  CHECK(bytes == expected);
}

TEST_CASE("checkpoint loader rejects bad input") {
  std::string bytes = encode_checkpoint({{"x", {2}, {1, 2}}});
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "z"), FormatError);
}

TEST_CASE("array header is 16 bytes") {
  const std::string bytes = encode_array({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(bytes.size() == 16 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "R2TA");
  const auto a = decode_array(bytes);
  CHECK(a.shape == Shape{2, 3});
  CHECK(a.data[5] == 6.0f);
  const auto v = decode_array(encode_array({4}, {1, 2, 3, 4}));
  CHECK(v.shape == Shape{4});
  std::string bad = bytes;
  bad[1] = 'x';
  CHECK_THROWS_AS(decode_array(bad), FormatError);
}

TEST_CASE("atomic write and fnv1a") {
  const auto dir = std::filesystem::temp_directory_path() / "r2t_test_binary_io";
  std::filesystem::remove_all(dir);
  atomic_write(dir / "sub" / "f.bin", "hello");
  CHECK(read_file(dir / "sub" / "f.bin") == "hello");
  CHECK_FALSE(std::filesystem::exists(dir / "sub" / "f.bin.tmp"));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(hex64(0xabcull) == "0000000000000abc");
  std::filesystem::remove_all(dir);
}
