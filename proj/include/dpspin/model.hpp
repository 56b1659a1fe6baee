#pragma once

// Diluted p-spin model: parameters, clause functions, disorder sampling and
// energy evaluation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dpspin/rng.hpp"

namespace dpspin {

using Spin = std::int8_t;

struct ModelParams {
  int p = 2;
  double lambda = 1.0;
  double beta = 1.0;
  double h = 0.0;

  /// th(h); zero exactly when h is zero.
  [[nodiscard]] double c() const noexcept;
  /// Throws std::invalid_argument on p < 2, lambda <= 0, beta < 0 or non-finite h.
  void validate() const;
};

/// How the second-kind perturbation strength c_N grows with N.
enum class CNRule { LogOnePlusN, SqrtLog };

struct PerturbationConfig {
  bool enabled1 = false;
  double gamma = 1.0 / 3.0;
  std::vector<double> x_weights{1.0, 1.0, 1.0};  // x_l for l = 1..L_max
  bool enabled2 = false;
  CNRule c_rule = CNRule::LogOnePlusN;

  [[nodiscard]] int max_order() const noexcept { return static_cast<int>(x_weights.size()); }
  [[nodiscard]] double s_N(int n) const;
  [[nodiscard]] double c_N(int n) const;
  /// Bound on the dropped orders l > L_max: s_N 2^{-L_max} max x, per unit of |g_{N,l}|.
  [[nodiscard]] double truncation_bound(int n) const;
  void validate() const;
};

/// One p-body clause: exp theta = ch(beta g)(1 + t * prod sigma), t = th(beta g).
struct Clause {
  double g = 0.0;
  double t = 0.0;
  std::vector<int> sites;  // 0-based, repeats allowed
};

/// A second-kind perturbation term: log Av_eps exp(sum_k theta_k(sigma..., eps) + h eps).
struct CavityCluster {
  std::vector<Clause> clauses;  // each clause has p-1 sites
};

struct HamiltonianInstance {
  int n = 0;
  ModelParams params;
  PerturbationConfig pert;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::vector<Clause> clauses;
  /// pert1[l-1] holds the N^l Gaussian coefficients g_{i_1..i_l}, row-major.
  std::vector<std::vector<double>> pert1;
  std::vector<CavityCluster> pert2;
};

/// beta * g * prod(spins).
double theta_pm(double g, double beta, std::span<const Spin> spins);

/// log(ch(beta g)(1 + th(beta g) prod m)) for magnetizations in [-1,1].
/// Throws std::domain_error if any |m_j| > 1.
double theta_ext(double g, double beta, std::span<const double> m);

/// Same as theta_ext with the product of magnetizations already formed.
double theta_ext_product(double beta_g, double m_product) noexcept;

/// Samples the quenched disorder. `forced_clause_count` replaces the
/// Poisson(lambda N) draw (used to condition on zero clauses).
HamiltonianInstance sample_instance(const ModelParams& params, int n,
                                    const PerturbationConfig& pert, const Stream& stream,
                                    std::optional<int> forced_clause_count = std::nullopt);

/// H_N(sigma) plus every enabled perturbation term.
double energy(const HamiltonianInstance& inst, std::span<const Spin> sigma);

/// Coin flip with mean sbar: +1 iff coin <= (1 + sbar)/2.
Spin spins_from_magnetization(double sbar, double coin);

/// Instance replay format.
nlohmann::json instance_to_json(const HamiltonianInstance& inst);
HamiltonianInstance instance_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const ModelParams& params);
ModelParams model_params_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PerturbationConfig& pert);
PerturbationConfig perturbation_from_json(const nlohmann::json& doc);

}  // namespace dpspin
