#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dpspin/verify.hpp"

using namespace dpspin;

TEST_CASE("a corrupted PD sampler fails the named PD check") {
  VerifyOptions options;
  options.level = VerifyLevel::Quick;
  options.pd_zetas = {-0.2};
  const CheckResult r = run_criterion(3, options);
  CHECK_FALSE(r.passed);
  CHECK(r.name == "PD moment identity");
  CHECK(r.detail.find("error") != std::string::npos);
  CHECK(format_line(r).rfind("[FAIL]  3 PD moment identity", 0) == 0);
}

TEST_CASE("cheap criteria pass and rerun identically across worker counts") {
  VerifyOptions options;
  options.level = VerifyLevel::Quick;
  options.only = {1, 2, 5, 8, 10};
  int reported = 0;
  options.on_result = [&](const CheckResult&) { ++reported; };
  const auto results = run_acceptance(options);
  REQUIRE(results.size() == 5);
  CHECK(reported == 5);
  for (const auto& r : results) {
    CAPTURE(r.detail);
    CHECK(r.passed);
    CHECK(r.digest.size() == 16);
  }
  CHECK(results.back().id == 10);
}

TEST_CASE("digests change with the seed") {
  VerifyOptions a, b;
  a.level = b.level = VerifyLevel::Quick;
  b.seed = a.seed + 1;
  CHECK(run_criterion(5, a).digest != run_criterion(5, b).digest);
  CHECK(run_criterion(5, a).digest == run_criterion(5, a).digest);
  CHECK_THROWS_AS(run_criterion(11, a), std::out_of_range);
}

TEST_CASE("the symmetry battery mixes both classes") {
  const auto battery = default_symmetry_battery();
  CHECK(battery.size() >= 5);
  int odd = 0;
  for (const auto& k : battery) odd += (k.a0 == 0.0 && k.av == 0.0 && k.au == 0.0 && k.aw == 0.0) ? 1 : 0;
  CHECK(odd > 0);
  CHECK(odd < static_cast<int>(battery.size()));
}
