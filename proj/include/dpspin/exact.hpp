#pragma once

// Exact enumeration over {-1,+1}^N for small N.
//
// States are bit masks: bit i set means sigma_i = -1. Energies are produced by
// an OpenMP gray-code walk over a fixed number of chunks, and every reduction
// runs over those chunks in index order, so results do not depend on the
// worker count.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dpspin/model.hpp"
#include "dpspin/stats.hpp"

namespace dpspin {

inline constexpr int kDefaultMaxSpins = 20;

struct ExactOptions {
  int n_max = kDefaultMaxSpins;
  /// Replaces every Poisson clause count (zero-clause conditioning).
  std::optional<int> forced_clause_count;
};

/// Energies of all 2^N states via the parallel gray-code kernel.
std::vector<double> enumerate_energies(const HamiltonianInstance& inst,
                                       int n_max = kDefaultMaxSpins);

/// Log-sum-exp over chunks in fixed order.
double log_sum_exp_chunked(std::span<const double> values);

class GibbsEnumeration {
 public:
  explicit GibbsEnumeration(const HamiltonianInstance& inst, int n_max = kDefaultMaxSpins);

  [[nodiscard]] int n_spins() const noexcept { return n_; }
  [[nodiscard]] double log_partition() const noexcept { return log_z_; }
  [[nodiscard]] double free_energy_density() const noexcept { return log_z_ / n_; }
  [[nodiscard]] std::span<const double> energies() const noexcept { return energies_; }
  [[nodiscard]] std::span<const double> probabilities() const noexcept { return probs_; }
  /// <prod_{i in S} sigma_i> for every subset mask S (Walsh-Hadamard transform of G_N).
  [[nodiscard]] std::span<const double> correlations() const noexcept { return corr_; }
  [[nodiscard]] double correlation(std::uint32_t mask) const { return corr_.at(mask); }
  /// P(R_{1,2} = 1 - 2k/N) for k = 0..N under G_N x G_N.
  [[nodiscard]] std::vector<double> overlap_distribution() const;

 private:
  int n_;
  double log_z_;
  std::vector<double> energies_;
  std::vector<double> probs_;
  std::vector<double> corr_;
};

/// In-place unnormalized Walsh-Hadamard transform; size must be a power of two.
void walsh_hadamard(std::span<double> data);

double log_partition(const HamiltonianInstance& inst, int n_max = kDefaultMaxSpins);

struct FreeEnergyResult {
  int n = 0;
  Estimate estimate;
  std::vector<double> per_replicate;  // log Z_N / N
};

FreeEnergyResult quenched_free_energy(const ModelParams& params, int n, int reps,
                                      const PerturbationConfig& pert, const Stream& stream,
                                      const ExactOptions& opts = {});

/// prod over replicas l of <prod_{i in sets[l]} sigma_i>; sites are 0-based.
double gibbs_moment(const GibbsEnumeration& gibbs, const std::vector<std::vector<int>>& replica_sets);

/// <prod_j R_{a_j, b_j}> for replica labels (a_j, b_j), exact.
double overlap_monomial_moment(const GibbsEnumeration& gibbs,
                               const std::vector<std::pair<int, int>>& pairs);

struct OverlapStats {
  int n = 0;
  int reps = 0;
  std::vector<Estimate> moments;  // E<R^k>, k = 1..4
  double bin_width = 0.05;
  std::vector<double> histogram;  // disorder-averaged mass per bin over [-1, 1]
};

OverlapStats overlap_statistics(const ModelParams& params, int n, int reps,
                                const PerturbationConfig& pert, const Stream& stream,
                                const ExactOptions& opts = {}, double bin_width = 0.05);

struct GGResult {
  Estimate residual;
  double lhs = 0.0;         // E<R_{1,n+1} f>
  double mean_r12 = 0.0;    // E<R_{1,2}>
  double mean_f = 0.0;      // E<f>
  double cross_sum = 0.0;   // sum_{l=2..n} E<R_{1,l} f>
};

/// Ghirlanda-Guerra residual with f = R_{1,2}^power over n replicas.
GGResult gg_residual(const ModelParams& params, int n_spins, int reps, int n_replicas, int power,
                     const PerturbationConfig& pert, const Stream& stream,
                     const ExactOptions& opts = {});

/// Replica moment layout: q replicas, m coordinates of which the first n are cavity
/// coordinates. sets[l] is C_l as 0-based coordinates in [0, m).
struct MomentQuery {
  int q = 1;
  int n = 1;
  int m = 1;
  std::vector<std::vector<int>> sets;

  void validate() const;
  [[nodiscard]] std::vector<int> cavity_part(int l) const;
  [[nodiscard]] std::vector<int> noncavity_part(int l) const;
};

struct CavityMomentAccumulator {
  std::vector<double> U;
  double V = 0.0;

  [[nodiscard]] double ratio(std::size_t l) const { return U.at(l) / V; }
  [[nodiscard]] double product_of_ratios() const;
};

/// Cavity clauses of one new coordinate: each clause couples p-1 existing sites to eps.
using CavityClauses = std::vector<Clause>;

/// U_l and V with the N-spin Gibbs measure as the spin source. Coordinate c >= n
/// of the query is mapped to existing site c - n. Overall scale is arbitrary.
CavityMomentAccumulator cavity_moments(const GibbsEnumeration& gibbs,
                                       std::span<const CavityClauses> cavity,
                                       const MomentQuery& query, const ModelParams& params);

struct CavityResidualResult {
  int n = 0;
  Estimate residual;  // |mean(LHS - RHS)| with the standard error of the mean difference
  Estimate lhs;
  Estimate rhs;
  std::vector<double> differences;
};

CavityResidualResult cavity_residual_finite_N(const ModelParams& params, int n_spins, int reps,
                                              const MomentQuery& query, const Stream& stream,
                                              const ExactOptions& opts = {});

}  // namespace dpspin
