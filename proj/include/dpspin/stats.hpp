#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace dpspin {

/// A Monte Carlo estimate with its standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// Welford accumulator. Results depend on insertion order, so callers that
/// need thread-count independence feed values in index order.
class RunningStats {
 public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  [[nodiscard]] std::size_t count() const noexcept { return n_; }
  [[nodiscard]] double mean() const noexcept { return mean_; }
  [[nodiscard]] double variance() const noexcept {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  [[nodiscard]] double sd() const noexcept { return std::sqrt(variance()); }
  [[nodiscard]] double se() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  [[nodiscard]] Estimate estimate() const noexcept { return {mean(), se()}; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline Estimate summarize(std::span<const double> xs) noexcept {
  RunningStats s;
  for (double x : xs) s.add(x);
  return s.estimate();
}

/// Standard error of a difference of two independent estimates.
inline double combined_se(double a, double b) noexcept { return std::sqrt(a * a + b * b); }

/// log((e^a + e^b) / 2), stable for large |a - b|.
inline double log_avg_exp(double a, double b) noexcept {
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi)) - std::log(2.0);
}

/// log cosh(x) without overflow.
inline double log_cosh(double x) noexcept {
  const double ax = std::fabs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

}  // namespace dpspin
