#pragma once

#include "hsfem/common.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace hsfem {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The 64-bit key is the user seed; the 128-bit counter is split into a
/// 64-bit block index and two 32-bit stream selectors. Two engines with the
/// same (seed, stream, substream) produce identical sequences, and distinct
/// selectors give statistically independent streams without any shared state.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;

  Philox4x32(std::uint64_t seed, std::uint32_t stream, std::uint32_t substream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Jump to an arbitrary block; position inside the block resets.
  void seek(std::uint64_t block);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::uint32_t stream_;
  std::uint32_t substream_;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Well-known stream tags so that independent stages never share draws.
enum class Stream : std::uint32_t {
  MonteCarloPoints = 1,
  Sketch = 2,
  Probe = 3,
  Correction = 4,
  VarianceProbe = 5,
  Test = 99,
};

/// Seeded source of uniform and Gaussian variates built on Philox4x32.
class RandomSource {
 public:
  RandomSource(std::uint64_t seed, Stream stream, std::uint32_t substream = 0)
      : engine_(seed, static_cast<std::uint32_t>(stream), substream) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::uint64_t uniform_index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  /// Index drawn with probability proportional to |weights|.
  std::uint64_t weighted_index(const Vector& weights);

  Matrix gaussian_matrix(Index rows, Index cols);

  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace hsfem
