#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace r2t {

// Purpose tags keep independent random streams apart even when the numeric
// ids collide (e.g. walls vs. objects of the same scene).
enum class Stream : uint64_t {
  kWalls = 1,
  kObjects = 2,
  kObservationNoise = 3,
  kRandomPolicy = 4,
  kPacketDrop = 5,
  kInit = 6,
  kTrainSchedule = 7,
  kShuffle = 8,
  kTest = 99,
};

inline constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Folds a list of ids into one 64-bit key. Order matters.
inline constexpr uint64_t derive_key(Stream tag, std::initializer_list<uint64_t> ids) {
  uint64_t k = splitmix64(static_cast<uint64_t>(tag) * 0xD1B54A32D192ED03ull);
  for (uint64_t id : ids) k = splitmix64(k ^ splitmix64(id + 0x632BE59BD9B4E019ull));
  return k;
}

/// Counter-based generator: output i is a pure function of (key, i), so any
/// stream can be reconstructed from its key without replaying others.
/// Satisfies UniformRandomBitGenerator for use with <random> distributions.
class CounterRng {
 public:
  using result_type = uint64_t;

  explicit CounterRng(uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  /// Standard normal via Box-Muller (one draw per call, no cached state).
  double normal();

  uint64_t key() const { return key_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

/// Stateless uniform draw in [0,1) for a single (key) event.
inline double uniform_at(uint64_t key) {
  return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

}  // namespace r2t
