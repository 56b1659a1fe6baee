#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "dpspin/order_parameter.hpp"

using namespace dpspin;

namespace {

OrderParameter kernel_op(KernelSpec k, double zeta = 0.5) {
  OrderParameter op{std::move(k), zeta};
  op.validate();
  return op;
}

// phi(v) = 0.2 + 0.5 (2v - 1); int phi^2 dv = 0.04 + 0.25/3.
constexpr double kPhiSquared = 0.04 + 0.25 / 3.0;

}  // namespace

TEST_CASE("kappa moments by quadrature match the closed forms") {
  for (Kappa k : {Kappa::Sign, Kappa::Linear, Kappa::Skewed}) {
    for (int j = 0; j <= 7; ++j) CHECK(std::fabs(kappa_moment(k, j) - kappa_moment_exact(k, j)) < 1e-6);
    CHECK(std::fabs(kappa_moment_exact(k, 1)) < 1e-15);
  }
}

TEST_CASE("kernel validation uses the exact range of f") {
  KernelSpec ok{"ok", Kappa::Sign, 0.3, 0.2, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0};
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.sup_abs() == doctest::Approx(1.0));
  KernelSpec bad = ok;
  bad.b0 = 0.6;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  KernelSpec skew{"skew", Kappa::Skewed, 0.4, 0.0, 0.0, 0.0, 0.6, 0.0, 0.0, 0.0};
  CHECK_NOTHROW(skew.validate());  // kappa in {1, -1/2}
}

TEST_CASE("synthesized arrays: zero kernel, v-only kernel, exchangeability") {
  const auto zero = synthesize_array(kernel_op({}), 4, 50, Stream(1));
  for (double s : zero.s) CHECK(s == 0.0);

  const auto phi = kernel_op({"phi", Kappa::Sign, 0.2, 0.5, 0, 0, 0, 0, 0, 0});
  const auto a = synthesize_array(phi, 5, 200, Stream(2));
  for (std::size_t alpha = 1; alpha < 5; ++alpha) {
    for (std::size_t i = 0; i < 200; ++i) CHECK(a.at(alpha, i) == a.at(0, i));
  }

  const auto mixed = kernel_op({"mixed", Kappa::Linear, 0.1, 0.3, 0.1, 0.0, 0.4, 0.0, 0.1, 0.0});
  const auto big = synthesize_array(mixed, 2, 200000, Stream(3));
  RunningStats forward, backward;
  for (std::size_t i = 0; i < big.n_sites; ++i) {
    forward.add(big.at(0, i) * big.at(1, i) * big.at(1, i));
    backward.add(big.at(1, i) * big.at(0, i) * big.at(0, i));
  }
  for (double s : big.s) CHECK(std::fabs(s) <= 1.0);
  // Exchangeability in distribution: compare across independent arrays so u draws average out.
  RunningStats f2, b2;
  for (int r = 0; r < 64; ++r) {
    const auto arr = synthesize_array(mixed, 2, 2000, Stream(4).child(Purpose::Replica, r));
    double x = 0, y = 0;
    for (std::size_t i = 0; i < arr.n_sites; ++i) {
      x += arr.at(0, i) * arr.at(1, i) * arr.at(1, i);
      y += arr.at(1, i) * arr.at(0, i) * arr.at(0, i);
    }
    f2.add(x / arr.n_sites);
    b2.add(y / arr.n_sites);
  }
  CHECK(std::fabs(f2.mean() - b2.mean()) <= 3.0 * combined_se(f2.se(), b2.se()));
}

TEST_CASE("overlap closed forms") {
  const auto zero = overlap_pair(kernel_op({}), 4, 100, Stream(5));
  CHECK(zero.q_low.value == 0.0);
  CHECK(zero.q_high.value == 0.0);
  CHECK_FALSE(zero.flagged);

  const auto phi = kernel_op({"phi", Kappa::Sign, 0.2, 0.5, 0, 0, 0, 0, 0, 0});
  const auto [ql, qh] = overlaps_exact(phi);
  CHECK(std::fabs(ql - kPhiSquared) < 1e-5);
  CHECK(std::fabs(qh - kPhiSquared) < 1e-5);

  const auto odd = kernel_op({"odd", Kappa::Sign, 0, 0, 0, 0, 0.2, 0.5, 0, 0});
  const auto [ol, oh] = overlaps_exact(odd);
  CHECK(std::fabs(ol) < 1e-12);
  CHECK(std::fabs(oh - kPhiSquared) < 1e-5);
  const auto rep = overlap_pair(odd, 6, 4000, Stream(6));
  CHECK(std::fabs(rep.q_low.value) <= 3.0 * rep.q_low.se);
  CHECK(std::fabs(rep.q_high.value - kPhiSquared) <= 3.0 * rep.q_high.se);
  CHECK(rep.q_low.value <= rep.q_high.value);
}

TEST_CASE("Monte Carlo overlaps agree with quadrature") {
  const std::vector<KernelSpec> battery{
      {"shift-sign", Kappa::Sign, 0.3, 0.2, 0, 0, 0.4, 0, 0, 0},
      {"w-linear", Kappa::Linear, 0.1, 0.3, 0, 0.2, 0.3, 0, 0, 0.1},
      {"u-mean", Kappa::Sign, 0.1, 0.0, 0.3, 0, 0.4, 0, 0, 0},
  };
  for (const auto& k : battery) {
    const auto op = kernel_op(k);
    const auto [ql, qh] = overlaps_exact(op);
    const auto rep = overlap_pair(op, 6, 2000, Stream(7), 32);
    CHECK_MESSAGE(std::fabs(rep.q_low.value - ql) <= 3.0 * rep.q_low.se, k.name);
    CHECK_MESSAGE(std::fabs(rep.q_high.value - qh) <= 3.0 * rep.q_high.se, k.name);
  }
}

TEST_CASE("two-value structure is flagged when the pair overlap depends on the states") {
  const auto u_mean = kernel_op({"u-mean", Kappa::Sign, 0.0, 0.0, 0.6, 0, 0.3, 0, 0, 0});
  CHECK(overlap_pair(u_mean, 6, 4000, Stream(8)).flagged);
  const auto plain = kernel_op({"plain", Kappa::Sign, 0.4, 0.0, 0.0, 0, 0.3, 0, 0, 0});
  CHECK_FALSE(overlap_pair(plain, 6, 4000, Stream(8)).flagged);
}

TEST_CASE("moment functions") {
  const auto c = kernel_op({"const", Kappa::Sign, -0.6, 0, 0, 0, 0, 0, 0, 0});
  for (int m = 1; m <= 5; ++m) CHECK(moment_m(c, m)(0.3, 0.7, 0.1) == doctest::Approx(std::pow(-0.6, m)));
  const auto sign = kernel_op({"sign", Kappa::Sign, 0, 0, 0, 0, 1.0, 0, 0, 0});
  for (int m = 1; m <= 6; ++m) {
    CHECK(std::fabs(moment_m(sign, m)(0.5, 0.5, 0.5) - (m % 2 == 0 ? 1.0 : 0.0)) < 1e-6);
  }
  const auto shifted = kernel_op({"shifted", Kappa::Linear, 0.2, 0.3, 0, 0, 0.4, 0.1, 0, 0});
  const auto f1 = moment_m(shifted, 1);
  const auto f2 = moment_m(shifted, 2);
  CHECK(std::fabs(integrate_wuv([&](double w, double u, double v) { return f1(w, u, v) * f1(w, u, v); }) -
                  overlaps_exact(shifted).first) < 1e-6);
  CHECK_THROWS(moment_m(shifted, 0));
  // Against the binomial closed form at a point.
  const double mu = 0.2 + 0.3 * (2 * 0.8 - 1), sd = 0.4 + 0.1 * (2 * 0.8 - 1);
  CHECK(std::fabs(f2(0.1, 0.9, 0.8) - (mu * mu + sd * sd / 3.0)) < 1e-6);
  for (double v : {0.05, 0.5, 0.95}) {
    CHECK(std::fabs(f1(0.2, 0.2, v)) <= 1.0);
    CHECK(f2(0.2, 0.2, v) >= 0.0);
  }
}

TEST_CASE("u-dependence residual") {
  CHECK(u_dependence_residual(kernel_op({"flat", Kappa::Linear, 0.2, 0.3, 0, 0, 0.5, 0, 0, 0}), 1) == 0.0);
  const auto skew_u = kernel_op({"skew-u", Kappa::Skewed, 0, 0, 0, 0, 0.4, 0, 0.4, 0});
  CHECK(u_dependence_residual(skew_u, 1) < 1e-12);
  // f^(3) = spread^3 / 4 with spread in {0, 0.8}: variance over u = (0.128 / 2)^2.
  CHECK(std::fabs(u_dependence_residual(skew_u, 3) - 0.064 * 0.064) < 1e-6);
  for (int m = 1; m <= 4; ++m) {
    const double r = u_dependence_residual(kernel_op({"u", Kappa::Sign, 0.1, 0.2, 0.5, 0, 0.2, 0, 0, 0}), m);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("multi-overlaps depend only on the partition of labels") {
  const auto op = kernel_op({"shift", Kappa::Linear, 0.3, 0.2, 0, 0, 0.5, 0, 0, 0});
  const auto [ql, qh] = overlaps_exact(op);
  const auto self = multi_overlap(op, {0, 0}, 2000, Stream(9), 32);
  const auto pair = multi_overlap(op, {0, 1}, 2000, Stream(10), 32);
  CHECK(std::fabs(self.value - qh) <= 3.0 * self.se);
  CHECK(std::fabs(pair.value - ql) <= 3.0 * pair.se);
  const auto a = multi_overlap(op, {0, 0, 1}, 2000, Stream(11), 32);
  const auto b = multi_overlap(op, {2, 1, 2}, 2000, Stream(12), 32);
  CHECK(std::fabs(a.value - b.value) <= 3.0 * combined_se(a.se, b.se));
  CHECK_THROWS(multi_overlap(op, {}, 10, Stream(1)));
}

TEST_CASE("symmetry statistic") {
  const auto odd = kernel_op({"odd", Kappa::Sign, 0, 0, 0, 0, 0.2, 0.5, 0, 0});
  CHECK(symmetry_statistic(odd, 5).value < 1e-12);
  const auto c = kernel_op({"const", Kappa::Sign, 0.35, 0, 0, 0, 0, 0, 0, 0});
  CHECK(symmetry_statistic(c, 3).value >= 0.35 - 1e-9);
  const auto linear_u = kernel_op({"odd-linear-u", Kappa::Linear, 0, 0, 0, 0, 0.4, 0.2, 0.3, 0});
  const auto stat = symmetry_statistic(linear_u, 7);
  const auto rep = overlap_pair(linear_u, 6, 2000, Stream(13));
  CHECK(stat.value < 3.0 * stat.se);
  CHECK(std::fabs(rep.q_low.value) < 3.0 * rep.q_low.se);
  CHECK_THROWS(symmetry_statistic(c, 4));
  CHECK_THROWS(symmetry_statistic(c, 1));
}

TEST_CASE("populations as order parameters") {
  Population pop(3, 4, std::vector<double>{0.5, 0.5, 0.5, 0.5,  //
                                           -1, 1, -1, 1,        //
                                           0.2, 0.4, 0.6, 0.8});
  CHECK(pop.q_star().value == doctest::Approx((0.25 + 0.0 + 0.25) / 3.0));
  CHECK(pop.q_star_star().value == doctest::Approx((0.25 + 1.0 + 0.3) / 3.0));
  CHECK(pop.eval(0.5, 0.9) == 1.0);
  CHECK(pop.eval(0.999999, 0.0) == 0.2);
  const OrderParameter op{pop, 0.5};
  const auto [ql, qh] = overlaps_exact(op);
  CHECK(ql <= qh);
  CHECK(moment_m(op, 2)(0.0, 0.0, 0.1) == doctest::Approx(0.25));
  CHECK(u_dependence_residual(op, 3) == 0.0);
  CHECK(symmetry_statistic(op, 3).value > 0.0);

  Population sym(200, 100);
  Stream s(14);
  for (std::size_t i = 0; i < 200; ++i) {
    const double a = s.uniform();
    for (std::size_t j = 0; j < 100; ++j) sym.at(i, j) = s.uniform() < 0.5 ? a : -a;
  }
  const auto st = symmetry_statistic(OrderParameter{sym, 0.5}, 3);
  CHECK(st.value < 3.0 * st.se);

  Population bad(1, 2, std::vector<double>{0.0, 1.5});
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
  CHECK_THROWS_AS(Population(2, 2, std::vector<double>{0.0}), std::invalid_argument);
}

TEST_CASE("order parameter import and export") {
  KernelSpec k{"x", Kappa::Skewed, 0.1, 0.2, -0.1, 0.05, 0.3, 0.0, 0.1, 0.0};
  const auto doc = kernel_to_json(k, 0.4);
  const auto back = kernel_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.zeta == 0.4);
  CHECK(kernel_to_json(*back.kernel(), back.zeta) == doc);
  auto extra = doc;
  extra["typo"] = 1;
  CHECK_THROWS(kernel_from_json(extra));

  Population pop(2, 3, std::vector<double>{0.1, -0.3333333333333333, 1.0, 0.0, 0.7, -1.0});
  CHECK(population_from_csv(population_to_csv(pop)) == pop);
  CHECK(population_sidecar(pop, 0.5, 9)["s_in"] == 3);
  CHECK_THROWS(population_from_csv("0.1,0.2\n0.3\n"));
}
