#pragma once

// Pure-state cavity fields, the tilted cavity map, its population-dynamics
// fixed-point solver, and residual checks at a candidate fixed point.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpspin/model.hpp"
#include "dpspin/order_parameter.hpp"
#include "dpspin/rng.hpp"
#include "dpspin/stats.hpp"

namespace dpspin {

/// Site-level part of a cavity draw, shared by every pure state: clause count,
/// couplings and the site uniforms v of the p-1 neighbours of each clause.
struct CavityEnvironment {
  int p = 2;
  std::vector<double> beta_g;
  std::vector<double> t;  // th(beta g)
  std::vector<double> v;  // (p-1) per clause, clause-major

  [[nodiscard]] std::size_t k() const noexcept { return beta_g.size(); }
};

/// One state's cavity draw. s_prod[k] is the product of the neighbour
/// magnetizations of clause k.
struct CavityDraw {
  std::vector<double> beta_g;
  std::vector<double> t;
  std::vector<double> s_prod;
  double a_plus = 0.0;   // A(+1)
  double a_minus = 0.0;  // A(-1)
  double A = 0.0;        // log Av_eps exp A(eps)
  double xi = 0.0;       // Av eps exp A(eps) / Av exp A(eps)

  [[nodiscard]] std::size_t k() const noexcept { return beta_g.size(); }
};

/// k ~ Poisson(lambda p) unless forced, Gaussian couplings, site uniforms.
CavityEnvironment draw_environment(const ModelParams& params, Stream& stream,
                                   std::optional<int> forced_k = std::nullopt);

/// Builds A(+-1), A and xi from couplings and neighbour products.
CavityDraw make_cavity_draw(std::vector<double> beta_g, std::vector<double> s_prod, double h);

/// Neighbour magnetizations f(w, u, v_jk, x_jk) with fresh x for this state.
CavityDraw draw_state(const CavityEnvironment& env, const OrderParameter& op, const ModelParams& params,
                      double w, double u, Stream& stream);

/// Environment, w, u and one state in a single call.
CavityDraw draw_cavity(const OrderParameter& op, const ModelParams& params, const Stream& stream,
                       std::optional<int> forced_k = std::nullopt);

/// th(h + sum_k atanh(t_k s_k)); falls back to the log-domain value when a factor saturates.
double xi_of(const CavityDraw& draw, double h);

/// w_alpha proportional to exp(zeta A_alpha), max-shifted, normalized.
std::vector<double> tilt_weights(std::span<const double> A, double zeta);

enum class ResampleScheme { Multinomial, Systematic };

std::vector<double> tilted_resample(std::span<const double> xis, std::span<const double> weights,
                                    std::size_t count, Stream& stream,
                                    ResampleScheme scheme = ResampleScheme::Multinomial);

/// Tilt-weighted mean of xi over draws that share everything but state-level randomness.
double eta_of(std::span<const CavityDraw> ensemble, double zeta);

// ---------------------------------------------------------------- residual checks

struct MomentCheck {
  std::string name;
  Estimate s_side;
  Estimate xi_side;
  double diff = 0.0;
  double se = 0.0;
  bool passed = false;  // |diff| <= 3 se
};

struct CavityMomentResult {
  std::vector<MomentCheck> moments;
  double residual = 0.0;  // max |diff|
  double max_z = 0.0;     // max |diff| / se
  bool passed = false;
  std::size_t n_sites = 0;
  std::size_t pool = 0;
};

/// Joint moments (order <= 3, two sites x two states) of the order parameter
/// array against the tilted cavity outputs. Tilting is joint over both sites;
/// `pool` candidate states per tilted state (0: the population's S_in, or 1000).
/// For populations the array-side se includes the S_out sampling error of the snapshot.
CavityMomentResult cavity_moment_residual(const OrderParameter& op, const ModelParams& params, double zeta,
                                 std::size_t n_sites, const Stream& stream, std::size_t pool = 0);

struct ResidualOptions {
  std::size_t sites = 400;   // independent site-level draws
  std::size_t states = 32;   // state-level draws per site
  std::size_t inner = 64;    // ensemble size behind each eta estimate
};

struct ResidualResult {
  Estimate value;
  bool passed = false;  // |value| <= 3 se
};

/// Mean over sites of Var_u eta, estimated by the covariance of two
/// independent inner-ensemble eta estimates across u draws.
ResidualResult eta_variance_residual(const OrderParameter& op, const ModelParams& params, double zeta,
                                     const Stream& stream, const ResidualOptions& options = {});

/// E[D^a D^b] for two independent estimates of the Q-weighted covariance
/// D = E_Q eta_1 eta_2 - E_Q eta_1 E_Q eta_2 of a two-site draw.
ResidualResult decorrelation_residual(const OrderParameter& op, const ModelParams& params, double zeta,
                                      const Stream& stream, const ResidualOptions& options = {});

// ---------------------------------------------------------------- population dynamics

enum class InitRule { Uniform, Zero, Plus };

struct PopDynConfig {
  std::size_t s_out = 1000;
  std::size_t s_in = 1000;
  std::size_t max_sweeps = 400;
  double damping = 0.0;
  double threshold = 1e-3;
  std::size_t window = 25;    // trailing-window length for the drift metric
  std::size_t patience = 5;   // consecutive sweeps below threshold
  ResampleScheme resample = ResampleScheme::Multinomial;
  InitRule init = InitRule::Uniform;

  void validate() const;
};

struct SweepDiagnostics {
  std::size_t sweep = 0;
  double q_star = 0.0;
  double q_star_star = 0.0;
  std::array<double, 4> moments{};
  double delta = -1.0;  // drift metric; negative until two full windows exist
};

struct PopDynResult {
  Population population;
  double zeta = 0.5;
  Estimate q_low;
  Estimate q_high;
  bool converged = false;
  std::size_t sweeps = 0;
  std::vector<SweepDiagnostics> trajectory;
  std::vector<double> sweep_seconds;

  [[nodiscard]] OrderParameter order_parameter() const { return OrderParameter{population, zeta}; }
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, PopDynResult result)
      : std::runtime_error(what), result_(std::move(result)) {}
  [[nodiscard]] const PopDynResult& result() const noexcept { return result_; }

 private:
  PopDynResult result_;
};

Population popdyn_init(const PopDynConfig& config, const Stream& stream);

/// One sweep: every entry is redrawn from a frozen snapshot of the previous
/// population. Entry i reads only stream.child(Population, i).
Population popdyn_step(const Population& population, const ModelParams& params, double zeta,
                       const PopDynConfig& config, const Stream& stream);

/// Iterates popdyn_step until the trailing-window drift of (q*, q**, first
/// four moments) stays below threshold for `patience` sweeps, or the budget runs out.
PopDynResult popdyn_solve(const ModelParams& params, double zeta, const PopDynConfig& config,
                          const Stream& stream);

struct QStarReport {
  PopDynResult run;
  Estimate q_star;
  bool passed = false;             // q* > 5 se
  double identity_residual = 0.0;  // max |E[(1+cts)(1+cts)^{zeta-1}] / E[(1+cts)^zeta] - 1|
};

/// Requires h != 0; throws ConvergenceError when popdyn_solve does not converge.
QStarReport qstar_positivity_check(const ModelParams& params, double zeta, const PopDynConfig& config,
                                   const Stream& stream);

namespace reference {
/// popdyn_step as a plain loop over entries.
Population popdyn_step_serial(const Population& population, const ModelParams& params, double zeta,
                              const PopDynConfig& config, const Stream& stream);
}  // namespace reference

}  // namespace dpspin
