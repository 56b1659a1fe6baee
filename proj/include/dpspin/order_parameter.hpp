#pragma once

// Functional order parameter f(w, u, v, x) of the one-step ansatz.
//
// w is global randomness, u selects a pure state, v a site, and x the
// state-and-site randomness. Two representations share one interface:
// closed-form kernels and sample-based populations of populations.

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dpspin/rng.hpp"
#include "dpspin/stats.hpp"

namespace dpspin {

enum class Kappa { Sign, Linear, Skewed };

/// Sign: sgn(x - 1/2). Linear: 2x - 1. Skewed: 1 on [0, 1/3), -1/2 after. All have mean zero.
double kappa(Kappa k, double x) noexcept;
/// Interior discontinuities of kappa in (0, 1).
std::vector<double> kappa_breakpoints(Kappa k);
/// E kappa(x)^j by piecewise midpoint quadrature refined to 1e-6.
double kappa_moment(Kappa k, int j);
/// E kappa(x)^j in closed form.
double kappa_moment_exact(Kappa k, int j);

/// f = mean(w,u,v) + spread(w,u,v) kappa(x), with
///   mean   = a0 + av (2v-1) + au sgn(u-1/2) + aw (2w-1)
///   spread = b0 + bv (2v-1) + bu sgn(u-1/2) + bw (2w-1).
struct KernelSpec {
  std::string name = "kernel";
  Kappa kappa = Kappa::Sign;
  double a0 = 0.0, av = 0.0, au = 0.0, aw = 0.0;
  double b0 = 0.0, bv = 0.0, bu = 0.0, bw = 0.0;

  [[nodiscard]] double mean(double w, double u, double v) const noexcept;
  [[nodiscard]] double spread(double w, double u, double v) const noexcept;
  [[nodiscard]] double operator()(double w, double u, double v, double x) const noexcept;
  /// Exact sup of |f| over [0,1]^4.
  [[nodiscard]] double sup_abs() const;
  /// Throws std::invalid_argument if f leaves [-1, 1].
  void validate() const;
  [[nodiscard]] bool u_independent() const noexcept { return au == 0.0 && bu == 0.0; }
};

/// Outer population of S_out site entries, each an inner population of S_in
/// magnetizations. As a kernel: f(w,u,v,x) = values[floor(v S_out)][floor(x S_in)].
class Population {
 public:
  Population() = default;
  Population(std::size_t s_out, std::size_t s_in, double fill = 0.0);
  Population(std::size_t s_out, std::size_t s_in, std::vector<double> values);

  [[nodiscard]] std::size_t s_out() const noexcept { return s_out_; }
  [[nodiscard]] std::size_t s_in() const noexcept { return s_in_; }
  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values_[i * s_in_ + j]; }
  double& at(std::size_t i, std::size_t j) { return values_[i * s_in_ + j]; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * s_in_, s_in_};
  }
  std::span<double> row(std::size_t i) { return {values_.data() + i * s_in_, s_in_}; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
  [[nodiscard]] double eval(double v, double x) const noexcept;
  /// Throws std::domain_error on non-finite entries or entries outside [-1, 1].
  void validate() const;

  /// mean_i (inner mean)^2 with its site-level standard error.
  [[nodiscard]] Estimate q_star() const;
  /// mean_i inner mean of m^2 with its site-level standard error.
  [[nodiscard]] Estimate q_star_star() const;
  /// E m^k over all entries, k = 1..4.
  [[nodiscard]] std::array<double, 4> moments() const;

  friend bool operator==(const Population&, const Population&) = default;

 private:
  std::size_t s_out_ = 0;
  std::size_t s_in_ = 0;
  std::vector<double> values_;
};

struct OrderParameter {
  std::variant<KernelSpec, Population> repr;
  double zeta = 0.5;

  [[nodiscard]] double eval(double w, double u, double v, double x) const;
  [[nodiscard]] bool is_population() const noexcept { return std::holds_alternative<Population>(repr); }
  [[nodiscard]] const KernelSpec* kernel() const noexcept { return std::get_if<KernelSpec>(&repr); }
  [[nodiscard]] const Population* population() const noexcept { return std::get_if<Population>(&repr); }
  void validate() const;
};

/// s_i^alpha = f(w, u_alpha, v_i, x_{alpha,i}); stored state-major.
struct MagnetizationArray {
  std::size_t n_states = 0;
  std::size_t n_sites = 0;
  double w = 0.0;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> s;

  [[nodiscard]] double at(std::size_t alpha, std::size_t i) const { return s[alpha * n_sites + i]; }
};

MagnetizationArray synthesize_array(const OrderParameter& op, std::size_t n_states, std::size_t n_sites,
                                    const Stream& stream);

struct OverlapReport {
  Estimate q_low;   // distinct-state overlap q*
  Estimate q_high;  // self-overlap q**
  double two_value_violation = 0.0;
  double tolerance = 0.0;  // 3 se of a single pair overlap plus 1e-3
  bool flagged = false;    // violation above tolerance: not two-valued
  std::size_t n_states = 0;
  std::size_t n_sites = 0;
  std::size_t replicates = 0;
};

/// Overlaps R_{alpha,beta} = mean_i s_i^alpha s_i^beta over independent
/// replicate arrays; standard errors come from the spread across replicates.
OverlapReport overlap_pair(const OrderParameter& op, std::size_t n_states, std::size_t n_sites,
                           const Stream& stream, std::size_t replicates = 16);

/// (q*, q**) by quadrature for kernels and exactly for populations.
std::pair<double, double> overlaps_exact(const OrderParameter& op);

/// f^(m)(w,u,v) = E_x f(w,u,v,x)^m.
using MomentFunction = std::function<double(double, double, double)>;
MomentFunction moment_m(const OrderParameter& op, int m);

/// E_w int Var_u f^(m)(w,u,v) dv; zero for populations.
double u_dependence_residual(const OrderParameter& op, int m);

/// E_i prod_l s_i^{alpha_l} for a label pattern such as {0, 0, 1}.
Estimate multi_overlap(const OrderParameter& op, const std::vector<int>& pattern, std::size_t n_sites,
                       const Stream& stream, std::size_t replicates = 16);

/// max over odd m <= m_max of the L1 norm of f^(m) over (w,u,v).
/// Kernels: quadrature with se 1e-6. Populations: site average with an se
/// that also covers the inner sampling noise of each f^(m) estimate.
Estimate symmetry_statistic(const OrderParameter& op, int m_max);

/// Midpoint quadrature of g(w, u, v) over [0,1]^3 with exact two-point
/// averaging in u, doubling nodes until successive estimates differ by < tol.
double integrate_wuv(const std::function<double(double, double, double)>& g, double tol = 1e-6);

// ---------------------------------------------------------------- I/O

nlohmann::json kernel_to_json(const KernelSpec& k, double zeta);
OrderParameter kernel_from_json(const nlohmann::json& doc);

/// Rows are site entries, columns inner samples, 17 significant digits.
std::string population_to_csv(const Population& pop);
Population population_from_csv(const std::string& text);
nlohmann::json population_sidecar(const Population& pop, double zeta, std::uint64_t seed);

}  // namespace dpspin
