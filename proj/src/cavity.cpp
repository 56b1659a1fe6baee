#include "dpspin/cavity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "parallel.hpp"

namespace dpspin {

namespace {

void require_zeta(double zeta) {
  if (!(zeta > 0.0 && zeta < 1.0)) throw std::invalid_argument("zeta must lie in (0, 1)");
}

double neighbour_magnetization(const OrderParameter& op, double w, double u, double v, Stream& stream) {
  return op.eval(w, u, v, stream.uniform());
}

// Self-normalized tilt average of xi from parallel arrays.
double tilted_mean(std::span<const double> xi, std::span<const double> A, double zeta) {
  const double hi = *std::max_element(A.begin(), A.end());
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    const double wgt = std::exp(zeta * (A[j] - hi));
    num += wgt * xi[j];
    den += wgt;
  }
  return num / den;
}

// log mean exp(zeta A).
double log_tilt_normalizer(std::span<const double> A, double zeta) {
  const double hi = *std::max_element(A.begin(), A.end());
  double sum = 0.0;
  for (double a : A) sum += std::exp(zeta * (a - hi));
  return zeta * hi + std::log(sum / static_cast<double>(A.size()));
}

struct Ensemble {
  std::vector<double> xi;
  std::vector<double> A;
};

Ensemble draw_ensemble(const CavityEnvironment& env, const OrderParameter& op, const ModelParams& params,
                       double w, double u, std::size_t size, Stream& stream) {
  Ensemble e;
  e.xi.reserve(size);
  e.A.reserve(size);
  for (std::size_t j = 0; j < size; ++j) {
    const CavityDraw d = draw_state(env, op, params, w, u, stream);
    e.xi.push_back(d.xi);
    e.A.push_back(d.A);
  }
  return e;
}

std::size_t default_pool(const OrderParameter& op) {
  if (const Population* pop = op.population()) return pop->s_in();
  return 1000;
}

// Redraws entry i of `next` from the frozen `prev`.
void update_entry(const Population& prev, Population& next, std::size_t i, const ModelParams& params,
                  double zeta, const PopDynConfig& config, const Stream& stream) {
  Stream es = stream.child(Purpose::Population, i);
  const std::size_t s_out = prev.s_out();
  const std::size_t s_in = prev.s_in();
  const int p = params.p;

  const auto k = static_cast<std::size_t>(es.poisson(params.lambda * static_cast<double>(p)));
  std::vector<double> beta_g(k);
  std::vector<std::size_t> neighbours(k * static_cast<std::size_t>(p - 1));
  for (std::size_t c = 0; c < k; ++c) {
    beta_g[c] = params.beta * es.normal();
    for (int l = 0; l < p - 1; ++l) neighbours[c * (p - 1) + l] = es.below(s_out);
  }

  std::vector<double> xi(s_in), A(s_in);
  for (std::size_t j = 0; j < s_in; ++j) {
    double a_plus = params.h;
    double a_minus = -params.h;
    for (std::size_t c = 0; c < k; ++c) {
      double prod = 1.0;
      for (int l = 0; l < p - 1; ++l) prod *= prev.at(neighbours[c * (p - 1) + l], es.below(s_in));
      a_plus += theta_ext_product(beta_g[c], prod);
      a_minus += theta_ext_product(beta_g[c], -prod);
    }
    xi[j] = std::tanh(0.5 * (a_plus - a_minus));
    A[j] = log_avg_exp(a_plus, a_minus);
  }

  const std::vector<double> weights = tilt_weights(A, zeta);
  const std::vector<double> fresh = tilted_resample(xi, weights, s_in, es, config.resample);
  auto row = next.row(i);
  for (std::size_t j = 0; j < s_in; ++j) {
    const bool keep = config.damping > 0.0 && es.uniform() < config.damping;
    row[j] = keep ? prev.at(i, j) : fresh[j];
  }
}

void check_population(const Population& pop) {
  for (double m : pop.values()) {
    if (!std::isfinite(m)) throw std::runtime_error("population dynamics produced a non-finite magnetization");
  }
}

}  // namespace

// ---------------------------------------------------------------- draws

CavityEnvironment draw_environment(const ModelParams& params, Stream& stream, std::optional<int> forced_k) {
  params.validate();
  CavityEnvironment env;
  env.p = params.p;
  std::size_t k = 0;
  if (forced_k) {
    if (*forced_k < 0) throw std::invalid_argument("forced clause count must be non-negative");
    k = static_cast<std::size_t>(*forced_k);
  } else {
    k = static_cast<std::size_t>(stream.poisson(params.lambda * static_cast<double>(params.p)));
  }
  env.beta_g.resize(k);
  env.t.resize(k);
  env.v.resize(k * static_cast<std::size_t>(params.p - 1));
  for (std::size_t c = 0; c < k; ++c) {
    env.beta_g[c] = params.beta * stream.normal();
    env.t[c] = std::tanh(env.beta_g[c]);
    for (int l = 0; l < params.p - 1; ++l) env.v[c * (params.p - 1) + l] = stream.uniform();
  }
  return env;
}

CavityDraw make_cavity_draw(std::vector<double> beta_g, std::vector<double> s_prod, double h) {
  if (beta_g.size() != s_prod.size()) throw std::invalid_argument("couplings and products differ in length");
  CavityDraw d;
  d.a_plus = h;
  d.a_minus = -h;
  d.t.resize(beta_g.size());
  for (std::size_t c = 0; c < beta_g.size(); ++c) {
    if (!(std::fabs(s_prod[c]) <= 1.0)) throw std::domain_error("neighbour product outside [-1, 1]");
    d.t[c] = std::tanh(beta_g[c]);
    d.a_plus += theta_ext_product(beta_g[c], s_prod[c]);
    d.a_minus += theta_ext_product(beta_g[c], -s_prod[c]);
  }
  d.A = log_avg_exp(d.a_plus, d.a_minus);
  d.xi = std::tanh(0.5 * (d.a_plus - d.a_minus));
  d.beta_g = std::move(beta_g);
  d.s_prod = std::move(s_prod);
  return d;
}

CavityDraw draw_state(const CavityEnvironment& env, const OrderParameter& op, const ModelParams& params,
                      double w, double u, Stream& stream) {
  const std::size_t k = env.k();
  const auto arity = static_cast<std::size_t>(env.p - 1);
  std::vector<double> prod(k, 1.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t l = 0; l < arity; ++l) prod[c] *= neighbour_magnetization(op, w, u, env.v[c * arity + l], stream);
  }
  return make_cavity_draw(env.beta_g, std::move(prod), params.h);
}

CavityDraw draw_cavity(const OrderParameter& op, const ModelParams& params, const Stream& stream,
                       std::optional<int> forced_k) {
  Stream s = stream;
  const CavityEnvironment env = draw_environment(params, s, forced_k);
  const double w = s.uniform();
  const double u = s.uniform();
  return draw_state(env, op, params, w, u, s);
}

double xi_of(const CavityDraw& draw, double h) {
  double field = h;
  for (std::size_t c = 0; c < draw.k(); ++c) {
    const double ts = draw.t[c] * draw.s_prod[c];
    field += 0.5 * (std::log1p(ts) - std::log1p(-ts));
  }
  const double xi = std::tanh(field);
  return std::isfinite(xi) ? xi : draw.xi;
}

std::vector<double> tilt_weights(std::span<const double> A, double zeta) {
  require_zeta(zeta);
  if (A.empty()) throw std::invalid_argument("tilt_weights needs at least one value");
  double hi = -std::numeric_limits<double>::infinity();
  for (double a : A) {
    if (std::isnan(a) || a == std::numeric_limits<double>::infinity()) {
      throw std::domain_error("tilt exponent is NaN or +inf");
    }
    hi = std::max(hi, a);
  }
  if (!std::isfinite(hi)) throw std::domain_error("every tilt exponent is -inf");
  std::vector<double> w(A.size());
  double total = 0.0;
  for (std::size_t j = 0; j < A.size(); ++j) {
    w[j] = std::exp(zeta * (A[j] - hi));
    total += w[j];
  }
  for (double& x : w) x /= total;
  return w;
}

std::vector<double> tilted_resample(std::span<const double> xis, std::span<const double> weights,
                                    std::size_t count, Stream& stream, ResampleScheme scheme) {
  if (xis.size() != weights.size() || xis.empty()) {
    throw std::invalid_argument("tilted_resample needs matching non-empty inputs");
  }
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  const double total = cdf.back();
  if (!(total > 0.0) || !std::isfinite(total)) throw std::domain_error("resampling weights do not normalize");

  std::vector<double> out(count);
  const auto pick = [&](double target) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    return xis[idx];
  };
  if (scheme == ResampleScheme::Systematic) {
    const double offset = stream.uniform();
    for (std::size_t j = 0; j < count; ++j) {
      out[j] = pick(total * (static_cast<double>(j) + offset) / static_cast<double>(count));
    }
  } else {
    for (std::size_t j = 0; j < count; ++j) out[j] = pick(total * stream.uniform());
  }
  return out;
}

double eta_of(std::span<const CavityDraw> ensemble, double zeta) {
  require_zeta(zeta);
  if (ensemble.empty()) throw std::invalid_argument("eta_of needs a non-empty ensemble");
  std::vector<double> xi, A;
  xi.reserve(ensemble.size());
  A.reserve(ensemble.size());
  for (const CavityDraw& d : ensemble) {
    xi.push_back(d.xi);
    A.push_back(d.A);
  }
  return tilted_mean(xi, A, zeta);
}

// ---------------------------------------------------------------- residual checks

CavityMomentResult cavity_moment_residual(const OrderParameter& op, const ModelParams& params, double zeta,
                                 std::size_t n_sites, const Stream& stream, std::size_t pool) {
  require_zeta(zeta);
  op.validate();
  params.validate();
  if (n_sites < 2) throw std::invalid_argument("cavity_moment_residual needs at least two site replicates");
  if (pool == 0) pool = default_pool(op);

  // a = s_1^1, b = s_1^2, c = s_2^1, d = s_2^2 (site, state).
  static const std::array<std::string, 9> names = {"a", "a^2", "ab", "ac", "ad", "a^3", "a^2 b", "abc", "a^2 c"};
  constexpr std::size_t n_moments = names.size();

  std::vector<std::array<double, n_moments>> s_side(n_sites), xi_side(n_sites);

  detail::parallel_for(n_sites, [&](std::size_t r) {
    Stream ss = stream.child(Purpose::Site, r);
    {
      const double w = ss.uniform();
      const double u1 = ss.uniform(), u2 = ss.uniform();
      const double v1 = ss.uniform(), v2 = ss.uniform();
      const double a = op.eval(w, u1, v1, ss.uniform());
      const double b = op.eval(w, u2, v1, ss.uniform());
      const double c = op.eval(w, u1, v2, ss.uniform());
      const double d = op.eval(w, u2, v2, ss.uniform());
      s_side[r] = {a, a * a, a * b, a * c, a * d, a * a * a, a * a * b, a * b * c, a * a * c};
    }

    Stream cs = stream.child(Purpose::Cavity, r);
    const double w = cs.uniform();
    const CavityEnvironment env1 = draw_environment(params, cs);
    const CavityEnvironment env2 = draw_environment(params, cs);
    // Tilted expectations of (x1, x1^2, x1^3, x2, x1 x2, x1^2 x2) for each of two states.
    std::array<std::array<double, 6>, 2> tilted{};
    for (int state = 0; state < 2; ++state) {
      std::vector<double> x1(pool), x2(pool), A(pool);
      for (std::size_t j = 0; j < pool; ++j) {
        const double u = cs.uniform();
        const CavityDraw d1 = draw_state(env1, op, params, w, u, cs);
        const CavityDraw d2 = draw_state(env2, op, params, w, u, cs);
        x1[j] = d1.xi;
        x2[j] = d2.xi;
        A[j] = d1.A + d2.A;
      }
      const std::vector<double> wt = tilt_weights(A, zeta);
      std::array<double, 6> acc{};
      for (std::size_t j = 0; j < pool; ++j) {
        const double p1 = x1[j], p2 = x2[j];
        acc[0] += wt[j] * p1;
        acc[1] += wt[j] * p1 * p1;
        acc[2] += wt[j] * p1 * p1 * p1;
        acc[3] += wt[j] * p2;
        acc[4] += wt[j] * p1 * p2;
        acc[5] += wt[j] * p1 * p1 * p2;
      }
      tilted[state] = acc;
    }
    const auto& t1 = tilted[0];
    const auto& t2 = tilted[1];
    xi_side[r] = {t1[0], t1[1], t1[0] * t2[0], t1[4], t1[0] * t2[3],
                  t1[2], t1[1] * t2[0], t1[4] * t2[0], t1[5]};
  });

  // A population is itself an S_out-site sample of the fixed-point law; its
  // moments carry that sampling error on top of the n_sites resampling error.
  double snapshot_factor = 1.0;
  if (const Population* pop = op.population()) {
    snapshot_factor = std::sqrt(1.0 + static_cast<double>(n_sites) / static_cast<double>(pop->s_out()));
  }

  CavityMomentResult result;
  result.n_sites = n_sites;
  result.pool = pool;
  result.passed = true;
  for (std::size_t m = 0; m < n_moments; ++m) {
    RunningStats s_stats, x_stats;
    for (std::size_t r = 0; r < n_sites; ++r) {
      s_stats.add(s_side[r][m]);
      x_stats.add(xi_side[r][m]);
    }
    MomentCheck check;
    check.name = names[m];
    check.s_side = s_stats.estimate();
    check.s_side.se *= snapshot_factor;
    check.xi_side = x_stats.estimate();
    check.diff = check.s_side.value - check.xi_side.value;
    check.se = combined_se(check.s_side.se, check.xi_side.se);
    check.passed = std::fabs(check.diff) <= 3.0 * check.se;
    result.residual = std::max(result.residual, std::fabs(check.diff));
    if (check.se > 0.0) result.max_z = std::max(result.max_z, std::fabs(check.diff) / check.se);
    result.passed = result.passed && check.passed;
    result.moments.push_back(std::move(check));
  }
  return result;
}

ResidualResult eta_variance_residual(const OrderParameter& op, const ModelParams& params, double zeta,
                                     const Stream& stream, const ResidualOptions& options) {
  require_zeta(zeta);
  op.validate();
  if (options.sites < 2 || options.states < 2 || options.inner < 1) {
    throw std::invalid_argument("eta_variance_residual needs sites >= 2, states >= 2, inner >= 1");
  }
  std::vector<double> per_site(options.sites);

  detail::parallel_for(options.sites, [&](std::size_t r) {
    Stream rs = stream.child(Purpose::Cavity, r);
    const double w = rs.uniform();
    const CavityEnvironment env = draw_environment(params, rs);
    std::vector<double> e1(options.states), e2(options.states);
    for (std::size_t j = 0; j < options.states; ++j) {
      const double u = rs.uniform();
      const Ensemble first = draw_ensemble(env, op, params, w, u, options.inner, rs);
      const Ensemble second = draw_ensemble(env, op, params, w, u, options.inner, rs);
      e1[j] = tilted_mean(first.xi, first.A, zeta);
      e2[j] = tilted_mean(second.xi, second.A, zeta);
    }
    const double m1 = std::accumulate(e1.begin(), e1.end(), 0.0) / static_cast<double>(options.states);
    const double m2 = std::accumulate(e2.begin(), e2.end(), 0.0) / static_cast<double>(options.states);
    double cov = 0.0;
    for (std::size_t j = 0; j < options.states; ++j) cov += (e1[j] - m1) * (e2[j] - m2);
    per_site[r] = cov / static_cast<double>(options.states - 1);
  }, 4);

  ResidualResult out;
  out.value = summarize(per_site);
  out.passed = std::fabs(out.value.value) <= 3.0 * out.value.se;
  return out;
}

ResidualResult decorrelation_residual(const OrderParameter& op, const ModelParams& params, double zeta,
                                      const Stream& stream, const ResidualOptions& options) {
  require_zeta(zeta);
  op.validate();
  if (options.sites < 2 || options.states < 2 || options.inner < 1) {
    throw std::invalid_argument("decorrelation_residual needs sites >= 2, states >= 2, inner >= 1");
  }
  std::vector<double> per_site(options.sites);

  detail::parallel_for(options.sites, [&](std::size_t r) {
    Stream rs = stream.child(Purpose::Cavity, r);
    const double w = rs.uniform();
    const CavityEnvironment env1 = draw_environment(params, rs);
    const CavityEnvironment env2 = draw_environment(params, rs);
    std::array<double, 2> D{};
    for (double& d : D) {
      // Q comes from ensembles independent of the eta estimates, so E D = 0 exactly when eta ignores u.
      std::vector<double> eta1(options.states), eta2(options.states), logq(options.states);
      for (std::size_t j = 0; j < options.states; ++j) {
        const double u = rs.uniform();
        const Ensemble a1 = draw_ensemble(env1, op, params, w, u, options.inner, rs);
        const Ensemble a2 = draw_ensemble(env2, op, params, w, u, options.inner, rs);
        const Ensemble z1 = draw_ensemble(env1, op, params, w, u, options.inner, rs);
        const Ensemble z2 = draw_ensemble(env2, op, params, w, u, options.inner, rs);
        eta1[j] = tilted_mean(a1.xi, a1.A, zeta);
        eta2[j] = tilted_mean(a2.xi, a2.A, zeta);
        logq[j] = log_tilt_normalizer(z1.A, zeta) + log_tilt_normalizer(z2.A, zeta);
      }
      const double hi = *std::max_element(logq.begin(), logq.end());
      double total = 0.0;
      for (double& q : logq) total += (q = std::exp(q - hi));
      double e12 = 0.0, e1 = 0.0, e2 = 0.0;
      for (std::size_t j = 0; j < options.states; ++j) {
        const double q = logq[j] / total;
        e12 += q * eta1[j] * eta2[j];
        e1 += q * eta1[j];
        e2 += q * eta2[j];
      }
      d = e12 - e1 * e2;
    }
    per_site[r] = D[0] * D[1];
  }, 4);

  ResidualResult out;
  out.value = summarize(per_site);
  out.passed = std::fabs(out.value.value) <= 3.0 * out.value.se;
  return out;
}

// ---------------------------------------------------------------- population dynamics

void PopDynConfig::validate() const {
  if (s_out < 100 || s_in < 100) throw std::invalid_argument("population sizes must be at least 100");
  if (max_sweeps == 0) throw std::invalid_argument("max_sweeps must be positive");
  if (!(damping >= 0.0 && damping < 1.0)) throw std::invalid_argument("damping must lie in [0, 1)");
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
  if (window == 0 || patience == 0) throw std::invalid_argument("window and patience must be positive");
}

Population popdyn_init(const PopDynConfig& config, const Stream& stream) {
  config.validate();
  Population pop(config.s_out, config.s_in);
  switch (config.init) {
    case InitRule::Zero:
      break;
    case InitRule::Plus:
      pop = Population(config.s_out, config.s_in, 1.0);
      break;
    case InitRule::Uniform: {
      for (std::size_t i = 0; i < config.s_out; ++i) {
        Stream is = stream.child(Purpose::Init, i);
        for (double& m : pop.row(i)) m = 2.0 * is.uniform() - 1.0;
      }
      break;
    }
  }
  return pop;
}

Population popdyn_step(const Population& population, const ModelParams& params, double zeta,
                       const PopDynConfig& config, const Stream& stream) {
  require_zeta(zeta);
  params.validate();
  population.validate();
  Population next(population.s_out(), population.s_in());
  detail::parallel_for(
      population.s_out(), [&](std::size_t i) { update_entry(population, next, i, params, zeta, config, stream); },
      16);
  check_population(next);
  return next;
}

namespace reference {
Population popdyn_step_serial(const Population& population, const ModelParams& params, double zeta,
                              const PopDynConfig& config, const Stream& stream) {
  require_zeta(zeta);
  params.validate();
  population.validate();
  Population next(population.s_out(), population.s_in());
  for (std::size_t i = 0; i < population.s_out(); ++i) {
    update_entry(population, next, i, params, zeta, config, stream);
  }
  check_population(next);
  return next;
}
}  // namespace reference

PopDynResult popdyn_solve(const ModelParams& params, double zeta, const PopDynConfig& config,
                          const Stream& stream) {
  require_zeta(zeta);
  params.validate();
  config.validate();

  PopDynResult result;
  result.zeta = zeta;
  result.population = popdyn_init(config, stream);

  // Observables per sweep: q*, q**, m1..m4.
  constexpr std::size_t n_obs = 6;
  std::vector<std::array<double, n_obs>> obs;
  std::size_t below = 0;
  for (std::size_t t = 0; t < config.max_sweeps; ++t) {
    const auto start = std::chrono::steady_clock::now();
    result.population = popdyn_step(result.population, params, zeta, config, stream.child(Purpose::Sweep, t));
    result.sweep_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

    SweepDiagnostics diag;
    diag.sweep = t + 1;
    diag.q_star = result.population.q_star().value;
    diag.q_star_star = result.population.q_star_star().value;
    diag.moments = result.population.moments();
    obs.push_back({diag.q_star, diag.q_star_star, diag.moments[0], diag.moments[1], diag.moments[2], diag.moments[3]});

    const std::size_t W = config.window;
    if (obs.size() >= 2 * W) {
      double delta = 0.0;
      for (std::size_t o = 0; o < n_obs; ++o) {
        double recent = 0.0, earlier = 0.0;
        for (std::size_t s = 0; s < W; ++s) {
          recent += obs[obs.size() - 1 - s][o];
          earlier += obs[obs.size() - 1 - W - s][o];
        }
        delta = std::max(delta, std::fabs(recent - earlier) / static_cast<double>(W * W));
      }
      diag.delta = delta;
      below = delta < config.threshold ? below + 1 : 0;
    }
    result.trajectory.push_back(diag);
    result.sweeps = t + 1;
    if (below >= config.patience) {
      result.converged = true;
      break;
    }
  }
  result.q_low = result.population.q_star();
  result.q_high = result.population.q_star_star();
  return result;
}

QStarReport qstar_positivity_check(const ModelParams& params, double zeta, const PopDynConfig& config,
                                   const Stream& stream) {
  if (params.h == 0.0) throw std::invalid_argument("q* positivity requires a nonzero field h");
  QStarReport report;
  report.run = popdyn_solve(params, zeta, config, stream);
  if (!report.run.converged) {
    throw ConvergenceError("population dynamics did not converge within " + std::to_string(config.max_sweeps) +
                               " sweeps",
                           report.run);
  }
  report.q_star = report.run.q_low;
  report.passed = report.q_star.value > 5.0 * report.q_star.se;

  // One-site identity between tilted and untilted cavity averages.
  const Population& pop = report.run.population;
  Stream is = stream.child(Purpose::Estimator, 0);
  const double c = std::tanh(params.h);
  constexpr std::size_t samples = 4096;
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    const double t = std::tanh(params.beta * is.normal());
    double s = 1.0;
    for (int l = 0; l < params.p - 1; ++l) s *= pop.at(is.below(pop.s_out()), is.below(pop.s_in()));
    const double base = 1.0 + c * t * s;
    lhs += base * std::pow(base, zeta - 1.0);
    rhs += std::pow(base, zeta);
  }
  report.identity_residual = std::fabs(lhs / rhs - 1.0);
  return report;
}

}  // namespace dpspin
