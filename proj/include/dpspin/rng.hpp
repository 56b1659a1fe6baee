#pragma once

// Counter-based random streams.
//
// Every random number in the library is a pure function of
// (seed, stream id, draw index): a Philox4x32-10 block keyed by the seed and
// indexed by (draw counter, stream id). Streams are split by hashing a
// (purpose, index) pair into a child id, so work assigned to replicate r or
// population entry i reads the same numbers no matter which thread runs it.

#include <array>
#include <cstdint>
#include <limits>

namespace dpspin {

/// Tags for named substreams. Values are part of the on-disk replay contract.
enum class Purpose : std::uint32_t {
  Disorder = 1,
  ClauseCount = 2,
  Couplings = 3,
  Indices = 4,
  Perturbation1 = 5,
  Perturbation2 = 6,
  Replica = 7,
  Site = 8,
  Coin = 9,
  State = 10,
  Global = 11,
  PoissonDirichlet = 12,
  Tilt = 13,
  Population = 14,
  Sweep = 15,
  Init = 16,
  Cavity = 17,
  Environment = 18,
  Estimator = 19,
  Resample = 20,
};

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// One Philox4x32 block with 10 rounds.
Counter philox4x32_10(Counter ctr, Key key) noexcept;

}  // namespace philox

/// SplitMix64 finalizer; used to derive stream ids.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed, std::uint64_t id = 0) noexcept
      : seed_(seed), id_(id) {}

  /// Independent substream keyed by (purpose, index). Does not advance *this.
  [[nodiscard]] Stream child(Purpose purpose, std::uint64_t index) const noexcept;

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t id() const noexcept { return id_; }
  [[nodiscard]] std::uint64_t draws() const noexcept { return position_; }

  std::uint64_t next_u64() noexcept;
  std::uint64_t operator()() noexcept { return next_u64(); }
  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept {
    return std::numeric_limits<std::uint64_t>::max();
  }

  /// Uniform on the open interval (0,1), 53-bit resolution.
  double uniform() noexcept;
  /// Uniform integer in [0, n); n > 0. Lemire's nearly-divisionless method.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  double exponential() noexcept;
  std::uint64_t poisson(double mean);
  double gamma(double shape);
  double beta(double a, double b);

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t id_;
  std::uint64_t block_ = 0;     // Philox counter (low 64 bits)
  std::uint64_t position_ = 0;  // number of 64-bit words consumed
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace dpspin
