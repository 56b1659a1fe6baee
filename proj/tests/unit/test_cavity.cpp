#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <omp.h>

#include "dpspin/cavity.hpp"

using namespace dpspin;

namespace {

ModelParams params_of(int p, double lambda, double beta, double h) {
  ModelParams m;
  m.p = p;
  m.lambda = lambda;
  m.beta = beta;
  m.h = h;
  return m;
}

PopDynConfig small_config(std::size_t size = 200) {
  PopDynConfig c;
  c.s_out = size;
  c.s_in = size;
  c.max_sweeps = 200;
  c.window = 10;
  c.patience = 3;
  return c;
}

OrderParameter u_dependent_kernel() {
  KernelSpec k{"u-dependent", Kappa::Sign, 0.0, 0.0, 0.5, 0.0, 0.3, 0.0, 0.0, 0.0};
  return OrderParameter{k, 0.5};
}

}  // namespace

TEST_CASE("single-clause field matches the closed form") {
  // t = 0.5, m = 0.8, h = 1: xi = (c + t m) / (1 + c t m) with c = th(1).
  const double c = std::tanh(1.0);
  const double expected = (c + 0.4) / (1.0 + 0.4 * c);
  const CavityDraw d = make_cavity_draw({std::atanh(0.5)}, {0.8}, 1.0);
  CHECK(d.xi == doctest::Approx(expected).epsilon(1e-14));
  CHECK(xi_of(d, 1.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.890357).epsilon(1e-6));
}

TEST_CASE("A and xi agree with brute-force averages over eps") {
  Stream s(11);
  for (int k = 0; k <= 6; ++k) {
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> bg(k), m(k);
      for (int c = 0; c < k; ++c) {
        bg[c] = 1.5 * s.normal();
        m[c] = 2.0 * s.uniform() - 1.0;
      }
      const double h = s.normal();
      const CavityDraw d = make_cavity_draw(bg, m, h);
      double z[2];
      for (int e = 0; e < 2; ++e) {
        const double eps = e == 0 ? 1.0 : -1.0;
        double prod = std::exp(h * eps);
        for (int c = 0; c < k; ++c) prod *= std::cosh(bg[c]) * (1.0 + std::tanh(bg[c]) * m[c] * eps);
        z[e] = prod;
      }
      CHECK(d.A == doctest::Approx(std::log(0.5 * (z[0] + z[1]))).epsilon(1e-12));
      CHECK(d.xi == doctest::Approx((z[0] - z[1]) / (z[0] + z[1])).epsilon(1e-12));
      CHECK(xi_of(d, h) == doctest::Approx(d.xi).epsilon(1e-10));
      // xi e^A = Av eps e^{A(eps)}.
      CHECK(d.xi * std::exp(d.A) == doctest::Approx(0.5 * (z[0] - z[1])).epsilon(1e-10));
    }
  }
}

TEST_CASE("saturated clauses keep xi finite") {
  const CavityDraw d = make_cavity_draw({40.0, 40.0}, {1.0, -1.0}, 0.0);
  CHECK(std::isfinite(d.xi));
  CHECK(std::isfinite(xi_of(d, 0.0)));
  CHECK_THROWS_AS(make_cavity_draw({1.0}, {1.5}, 0.0), std::domain_error);
}

TEST_CASE("tilt weights normalize and reject bad input") {
  const std::vector<double> A = {0.0, 1.0, -std::numeric_limits<double>::infinity(), 800.0};
  const auto w = tilt_weights(A, 0.5);
  double total = 0.0;
  for (double x : w) total += x;
  CHECK(total == doctest::Approx(1.0));
  CHECK(w[2] == 0.0);
  CHECK(w[3] == doctest::Approx(1.0));
  CHECK_THROWS_AS(tilt_weights(A, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(tilt_weights(std::vector<double>{}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(tilt_weights(std::vector<double>{std::nan("")}, 0.5), std::domain_error);
  CHECK_THROWS_AS(tilt_weights(std::vector<double>{-std::numeric_limits<double>::infinity()}, 0.5),
                  std::domain_error);
}

TEST_CASE("resampling reproduces the weights") {
  const std::vector<double> xi = {-1.0, 0.0, 1.0};
  const std::vector<double> w = {0.2, 0.3, 0.5};
  Stream s(3);
  const std::size_t n = 200000;
  const auto multi = tilted_resample(xi, w, n, s);
  double mean = 0.0;
  for (double x : multi) mean += x;
  mean /= static_cast<double>(n);
  CHECK(std::fabs(mean - 0.3) < 4.0 * std::sqrt(0.61 - 0.09) / std::sqrt(static_cast<double>(n)));

  const auto sys = tilted_resample(xi, w, 1000, s, ResampleScheme::Systematic);
  int counts[3] = {0, 0, 0};
  for (double x : sys) ++counts[static_cast<int>(x) + 1];
  CHECK(std::abs(counts[0] - 200) <= 1);
  CHECK(std::abs(counts[1] - 300) <= 1);
  CHECK(std::abs(counts[2] - 500) <= 1);
}

TEST_CASE("zero inverse temperature gives the paramagnetic fixed point in one sweep") {
  const ModelParams m = params_of(2, 1.0, 0.0, 0.3);
  const PopDynConfig cfg = small_config();
  const Stream s(5);
  const Population init = popdyn_init(cfg, s);
  const Population next = popdyn_step(init, m, 0.5, cfg, s.child(Purpose::Sweep, 0));
  for (double x : next.values()) CHECK(x == doctest::Approx(std::tanh(0.3)).epsilon(1e-15));

  const PopDynResult r = popdyn_solve(m, 0.5, cfg, s);
  CHECK(r.converged);
  CHECK(r.q_low.value == doctest::Approx(std::tanh(0.3) * std::tanh(0.3)));
  CHECK(r.q_high.value == doctest::Approx(r.q_low.value));
}

TEST_CASE("small beta keeps the mean magnetization near th(h)") {
  const double beta = 0.1;
  const ModelParams m = params_of(2, 1.0, beta, 0.3);
  const PopDynResult r = popdyn_solve(m, 0.5, small_config(), Stream(8));
  REQUIRE(r.converged);
  const double mean = r.population.moments()[0];
  const Estimate q = r.population.q_star();
  const double se = std::sqrt(q.value / static_cast<double>(r.population.s_out() * r.population.s_in()));
  // Leading correction is of order lambda p beta^2.
  CHECK(std::fabs(mean - std::tanh(0.3)) < 3.0 * se + 2.0 * 2.0 * beta * beta);
}

TEST_CASE("parallel sweep equals the serial reference for any worker count") {
  const ModelParams m = params_of(3, 0.8, 1.2, 0.2);
  PopDynConfig cfg = small_config(150);
  cfg.damping = 0.2;
  const Stream s(21);
  const Population init = popdyn_init(cfg, s);
  const Stream sweep = s.child(Purpose::Sweep, 0);
  const Population serial = reference::popdyn_step_serial(init, m, 0.4, cfg, sweep);
  const int saved = omp_get_max_threads();
  for (int workers : {1, 3, 8}) {
    omp_set_num_threads(workers);
    CHECK(popdyn_step(init, m, 0.4, cfg, sweep) == serial);
  }
  omp_set_num_threads(saved);
}

TEST_CASE("q* never exceeds q** along the trajectory") {
  const PopDynResult r = popdyn_solve(params_of(2, 1.0, 1.0, 0.3), 0.5, small_config(), Stream(4));
  for (const SweepDiagnostics& d : r.trajectory) CHECK(d.q_star <= d.q_star_star + 1e-15);
  CHECK(r.sweep_seconds.size() == r.sweeps);
}

TEST_CASE("non-convergence is reported rather than hidden") {
  PopDynConfig cfg = small_config();
  cfg.max_sweeps = 5;
  const ModelParams m = params_of(2, 1.0, 1.0, 0.3);
  const PopDynResult r = popdyn_solve(m, 0.5, cfg, Stream(4));
  CHECK_FALSE(r.converged);
  CHECK(r.trajectory.size() == 5);
  CHECK_THROWS_AS(qstar_positivity_check(m, 0.5, cfg, Stream(4)), ConvergenceError);
  CHECK_THROWS_AS(qstar_positivity_check(params_of(2, 1.0, 1.0, 0.0), 0.5, cfg, Stream(4)),
                  std::invalid_argument);
}

TEST_CASE("configuration and degenerate populations are rejected") {
  PopDynConfig cfg = small_config();
  cfg.s_in = 50;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.damping = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  Population bad(100, 100, std::nan(""));
  CHECK_THROWS_AS(popdyn_step(bad, params_of(2, 1.0, 1.0, 0.3), 0.5, small_config(100), Stream(1)),
                  std::exception);
}

TEST_CASE("q* is positive under a field and the one-site identity holds") {
  const QStarReport rep = qstar_positivity_check(params_of(2, 1.0, 1.0, 0.3), 0.5, small_config(), Stream(6));
  CHECK(rep.passed);
  CHECK(rep.q_star.value > 0.0);
  CHECK(rep.identity_residual < 1e-12);
}

TEST_CASE("eta variance and decorrelation vanish for u-free parameters and detect u-dependence") {
  const ModelParams m = params_of(2, 1.0, 1.0, 0.3);
  const PopDynResult r = popdyn_solve(m, 0.5, small_config(), Stream(9));
  const OrderParameter fixed = r.order_parameter();
  ResidualOptions opts;
  opts.sites = 120;
  opts.states = 16;
  opts.inner = 32;

  const ResidualResult eta_ok = eta_variance_residual(fixed, m, 0.5, Stream(10), opts);
  CHECK(eta_ok.passed);
  const ResidualResult eta_bad = eta_variance_residual(u_dependent_kernel(), m, 0.5, Stream(10), opts);
  CHECK_FALSE(eta_bad.passed);
  CHECK(eta_bad.value.value > 0.0);

  const ResidualResult dec_ok = decorrelation_residual(fixed, m, 0.5, Stream(12), opts);
  CHECK(dec_ok.passed);
  const ResidualResult dec_bad = decorrelation_residual(u_dependent_kernel(), m, 0.5, Stream(12), opts);
  CHECK_FALSE(dec_bad.passed);
}

TEST_CASE("cavity moments match a population dynamics fixed point but not an arbitrary population") {
  const ModelParams m = params_of(2, 1.0, 1.0, 0.3);
  const PopDynResult r = popdyn_solve(m, 0.5, small_config(), Stream(13));
  REQUIRE(r.converged);
  const CavityMomentResult good = cavity_moment_residual(r.order_parameter(), m, 0.5, 600, Stream(14));
  for (const MomentCheck& c : good.moments) {
    CAPTURE(c.name);
    CHECK(c.passed);
  }
  CHECK(good.pool == 200);

  const Population arbitrary = popdyn_init(small_config(), Stream(15));
  const CavityMomentResult bad = cavity_moment_residual(OrderParameter{arbitrary, 0.5}, m, 0.5, 600, Stream(14));
  CHECK_FALSE(bad.passed);
}
