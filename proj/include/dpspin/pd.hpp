#pragma once

// Poisson-Dirichlet PD(zeta) weights: a Poisson-process sampler, a
// stick-breaking oracle, and the tilt-and-reorder map.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpspin/rng.hpp"
#include "dpspin/stats.hpp"

namespace dpspin {

/// Decreasing weights of the K largest atoms. The mass of the atoms beyond K is
/// carried in tail_mass, so sum(V) + tail_mass == 1.
struct PDWeights {
  double zeta = 0.5;
  std::vector<double> V;
  std::vector<double> x;  // Poisson points eta^{-1/zeta}; empty for stick-breaking
  double tail_mass = 0.0;
  /// Standard deviation of the omitted mass relative to the total (Poisson
  /// sampler), or the leftover stick (stick-breaking).
  double tail_error = 0.0;

  [[nodiscard]] std::size_t size() const noexcept { return V.size(); }
  [[nodiscard]] double power_sum(int k) const;
};

inline constexpr double kDefaultTailTolerance = 1e-3;

/// x_alpha = eta_alpha^{-1/zeta} for unit-rate Poisson arrival times eta_alpha.
/// K doubles (continuing the same stream) until tail_error < tail_tolerance.
PDWeights pd_sample(double zeta, std::size_t K, const Stream& stream,
                    double tail_tolerance = kDefaultTailTolerance);

/// GEM(zeta) stick-breaking with Beta(1 - zeta, j zeta) fractions, sorted decreasingly.
PDWeights pd_sample_stickbreaking(double zeta, std::size_t K, const Stream& stream);

struct TiltRecord {
  std::vector<double> logtilts;  // A^alpha in the original order
  std::vector<double> V;         // tilted weights, decreasing
  std::vector<std::size_t> rho;  // V[k] is the tilted weight of original atom rho[k]
  double tail_mass = 0.0;
};

/// V'_alpha = V_alpha e^{A^alpha} / normalizer, then a stable sort by
/// (weight desc, original index asc). The tail is tilted by the mean of e^A
/// over the retained atoms.
TiltRecord tilt_reorder(const PDWeights& weights, std::span<const double> logtilts);

enum class PDConstruction { Poisson, StickBreaking };

struct PDDrawSummary {
  std::size_t index = 0;
  std::size_t K = 0;
  double sum_v2 = 0.0;
  double sum_v3 = 0.0;
  double tail_mass = 0.0;
  std::vector<double> top;  // up to five largest weights
};

struct PDStudy {
  double zeta = 0.5;
  PDConstruction construction = PDConstruction::Poisson;
  std::vector<PDDrawSummary> draws;
  Estimate sum_v2;
  Estimate sum_v3;
  Estimate sum_v2_squared;  // E (sum V^2)^2
  Estimate sum_v2_cubed;    // E (sum V^2)^3
};

/// M independent draws on per-draw substreams, run in parallel and merged by index.
PDStudy pd_study(double zeta, std::size_t K, std::size_t M, PDConstruction construction,
                 const Stream& stream);

struct TiltStudy {
  double zeta = 0.5;
  double tilt_sd = 1.0;
  Estimate sum_v2;           // E sum (V')^2
  Estimate top_covariance;   // Cov(V'_1, A_{rho(1)})
  Estimate top_tilt_mean;    // E A_{rho(1)}; equals zeta * tilt_sd^2 for Gaussian tilts
};

/// Gaussian log-tilts with standard deviation tilt_sd, M draws.
TiltStudy tilt_study(double zeta, std::size_t K, std::size_t M, double tilt_sd, const Stream& stream);

std::string pd_study_csv(const PDStudy& study);

}  // namespace dpspin
