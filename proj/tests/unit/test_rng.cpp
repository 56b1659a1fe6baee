#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "dpspin/rng.hpp"
#include "dpspin/stats.hpp"

using namespace dpspin;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using philox::Counter;
  using philox::Key;
  CHECK(philox::philox4x32_10(Counter{0, 0, 0, 0}, Key{0, 0}) ==
        Counter{0x6627e8d5U, 0xe169c58dU, 0xbc57ac4cU, 0x9b00dbd8U});
  CHECK(philox::philox4x32_10(Counter{0xffffffffU, 0xffffffffU, 0xffffffffU, 0xffffffffU},
                              Key{0xffffffffU, 0xffffffffU}) ==
        Counter{0x408f276dU, 0x41c83b0eU, 0xa20bc7c6U, 0x6d5451fdU});
  CHECK(philox::philox4x32_10(Counter{0x243f6a88U, 0x85a308d3U, 0x13198a2eU, 0x03707344U},
                              Key{0xa4093822U, 0x299f31d0U}) ==
        Counter{0xd16cfe09U, 0x94fdccebU, 0x5001e420U, 0x24126ea1U});
}

TEST_CASE("streams are reproducible and children are distinct") {
  Stream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  const Stream root(7);
  std::set<std::uint64_t> ids;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    ids.insert(root.child(Purpose::Site, i).id());
    ids.insert(root.child(Purpose::Coin, i).id());
  }
  CHECK(ids.size() == 2000);

  Stream c1 = root.child(Purpose::Disorder, 3);
  Stream c2 = root.child(Purpose::Disorder, 3);
  CHECK(c1.uniform() == c2.uniform());
  CHECK(root.child(Purpose::Disorder, 3).next_u64() != root.child(Purpose::Disorder, 4).next_u64());
  CHECK(Stream(1).next_u64() != Stream(2).next_u64());
}

TEST_CASE("uniform lies in the open unit interval with the right moments") {
  Stream s(1);
  RunningStats st;
  for (int i = 0; i < 200000; ++i) {
    const double u = s.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    st.add(u);
  }
  CHECK(std::fabs(st.mean() - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / 200000));
  CHECK(std::fabs(st.variance() - 1.0 / 12.0) < 2e-3);
}

TEST_CASE("below is uniform on small ranges") {
  Stream s(2);
  const int n = 7, draws = 70000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) {
    const auto v = s.below(n);
    REQUIRE(v < static_cast<std::uint64_t>(n));
    ++counts[v];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / n;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 16.81);  // 99% quantile, 6 degrees of freedom
}

TEST_CASE("normal, exponential, poisson, gamma and beta moments") {
  Stream s(3);
  const int n = 200000;
  RunningStats norm, expo, pois_small, pois_large, gam, bet;
  for (int i = 0; i < n; ++i) {
    norm.add(s.normal());
    expo.add(s.exponential());
    pois_small.add(static_cast<double>(s.poisson(2.5)));
    pois_large.add(static_cast<double>(s.poisson(700.0)));
    gam.add(s.gamma(0.4));
    bet.add(s.beta(0.5, 1.5));
  }
  CHECK(std::fabs(norm.mean()) < 4.0 * norm.se());
  CHECK(std::fabs(norm.variance() - 1.0) < 0.015);
  CHECK(std::fabs(expo.mean() - 1.0) < 4.0 * expo.se());
  CHECK(std::fabs(pois_small.mean() - 2.5) < 4.0 * pois_small.se());
  CHECK(std::fabs(pois_small.variance() - 2.5) < 0.05);
  CHECK(std::fabs(pois_large.mean() - 700.0) < 4.0 * pois_large.se());
  CHECK(std::fabs(pois_large.variance() / 700.0 - 1.0) < 0.02);
  CHECK(std::fabs(gam.mean() - 0.4) < 4.0 * gam.se());
  CHECK(std::fabs(bet.mean() - 0.25) < 4.0 * bet.se());
  CHECK(Stream(4).poisson(0.0) == 0);
  CHECK_THROWS(Stream(4).poisson(-1.0));
  CHECK_THROWS(Stream(4).gamma(0.0));
}

TEST_CASE("log_avg_exp and log_cosh are stable") {
  CHECK(log_avg_exp(0.0, 0.0) == doctest::Approx(0.0));
  CHECK(log_avg_exp(1000.0, 0.0) == doctest::Approx(1000.0 - std::log(2.0)));
  CHECK(log_cosh(0.3) == doctest::Approx(std::log(std::cosh(0.3))).epsilon(1e-14));
  CHECK(log_cosh(-800.0) == doctest::Approx(800.0 - std::log(2.0)));
}
