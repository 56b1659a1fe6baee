#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dpspin/pd.hpp"

using namespace dpspin;

TEST_CASE("Poisson construction: decreasing weights that account for all mass") {
  for (double zeta : {0.2, 0.5, 0.8}) {
    const auto w = pd_sample(zeta, 1000, Stream(1).child(Purpose::PoissonDirichlet, 0));
    double total = w.tail_mass;
    for (std::size_t a = 0; a < w.size(); ++a) {
      CHECK(w.V[a] > 0.0);
      if (a > 0) CHECK(w.V[a] < w.V[a - 1]);
      total += w.V[a];
    }
    CHECK(std::fabs(total - 1.0) < 1e-12);
    CHECK(w.tail_error < kDefaultTailTolerance);
    CHECK(w.size() >= 1000);
  }
  CHECK_THROWS_AS(pd_sample(0.0, 100, Stream(1)), std::invalid_argument);
  CHECK_THROWS_AS(pd_sample(1.0, 100, Stream(1)), std::invalid_argument);
  CHECK_THROWS_AS(pd_sample(-0.5, 100, Stream(1)), std::invalid_argument);
  CHECK_THROWS_AS(pd_sample(0.5, 5, Stream(1)), std::invalid_argument);
}

TEST_CASE("K grows until the truncation error meets the tolerance") {
  const auto loose = pd_sample(0.9, 10, Stream(2), 1e-1);
  const auto tight = pd_sample(0.9, 10, Stream(2), 1e-4);
  CHECK(tight.size() > loose.size());
  CHECK(tight.tail_error < 1e-4);
  // Same stream: the leading points agree up to normalization.
  CHECK(tight.x[0] == loose.x[0]);
  CHECK(tight.x[5] == loose.x[5]);
}

TEST_CASE("point counts above t follow the mean measure t^-zeta") {
  const double zeta = 0.5;
  const int draws = 20000;
  for (double t : {1.0, 2.0, 4.0}) {
    double total = 0.0, total_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto w = pd_sample(zeta, 10, Stream(3).child(Purpose::PoissonDirichlet, i), 1.0);
      double c = 0.0;
      for (double x : w.x) c += x > t ? 1.0 : 0.0;
      total += c;
      total_sq += c * c;
    }
    const double mean = total / draws;
    const double se = std::sqrt((total_sq / draws - mean * mean) / draws);
    CHECK(std::fabs(mean - std::pow(t, -zeta)) < 3.0 * se);
  }
}

TEST_CASE("stick-breaking construction is decreasing with leftover mass as tail") {
  const auto w = pd_sample_stickbreaking(0.5, 2000, Stream(4));
  double total = w.tail_mass;
  for (std::size_t a = 0; a < w.size(); ++a) {
    if (a > 0) CHECK(w.V[a] <= w.V[a - 1]);
    total += w.V[a];
  }
  CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("both constructions satisfy E sum V^2 = 1 - zeta at zeta = 0.5") {
  const auto poisson = pd_study(0.5, 2000, 4000, PDConstruction::Poisson, Stream(5));
  const auto sticks = pd_study(0.5, 2000, 4000, PDConstruction::StickBreaking, Stream(6));
  CHECK(std::fabs(poisson.sum_v2.value - 0.5) <= 3.0 * poisson.sum_v2.se);
  CHECK(std::fabs(sticks.sum_v2.value - 0.5) <= 3.0 * sticks.sum_v2.se);
  CHECK(std::fabs(poisson.sum_v3.value - sticks.sum_v3.value) <=
        3.0 * combined_se(poisson.sum_v3.se, sticks.sum_v3.se));
  CHECK(pd_study_csv(poisson).find("draw,K,sum_v2") == 0);
}

TEST_CASE("tilt_reorder with equal tilts is the identity") {
  const auto w = pd_sample(0.5, 500, Stream(7));
  const std::vector<double> flat(w.size(), 2.5);
  const auto rec = tilt_reorder(w, flat);
  for (std::size_t a = 0; a < w.size(); ++a) {
    CHECK(rec.rho[a] == a);
    CHECK(std::fabs(rec.V[a] - w.V[a]) < 1e-15);
  }
  std::vector<double> bad = flat;
  bad[3] = std::nan("");
  CHECK_THROWS_AS(tilt_reorder(w, bad), std::invalid_argument);
}

TEST_CASE("tilt_reorder sorts tilted weights with a bijective rho") {
  const auto w = pd_sample(0.5, 300, Stream(8));
  Stream s(9);
  std::vector<double> tilts(w.size());
  for (double& a : tilts) a = s.normal();
  const auto rec = tilt_reorder(w, tilts);
  std::vector<int> seen(w.size(), 0);
  double total = rec.tail_mass;
  for (std::size_t k = 0; k < rec.V.size(); ++k) {
    ++seen[rec.rho[k]];
    if (k > 0) CHECK(rec.V[k] <= rec.V[k - 1]);
    total += rec.V[k];
  }
  for (int c : seen) CHECK(c == 1);
  CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("Gaussian tilts preserve the PD moment and decouple weights from tilts") {
  const auto study = tilt_study(0.5, 2000, 4000, 1.0, Stream(10));
  CHECK(std::fabs(study.sum_v2.value - 0.5) <= 3.0 * study.sum_v2.se);
  CHECK(std::fabs(study.top_covariance.value) <= 3.0 * study.top_covariance.se);
  CHECK(std::fabs(study.top_tilt_mean.value - 0.5) <= 3.0 * study.top_tilt_mean.se);
}
