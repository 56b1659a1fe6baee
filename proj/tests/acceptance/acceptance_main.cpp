// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "dpspin/verify.hpp"

int main(int argc, char** argv) {
  dpspin::VerifyOptions options;
  bool quick = false;
  CLI::App app{"Acceptance battery"};
  app.add_flag("--quick", quick, "Reduced sample sizes");
  app.add_option("--seed", options.seed, "Root seed");
  app.add_option("--workers", options.workers, "Worker count of the primary pass")->check(CLI::PositiveNumber);
  app.add_option("--only", options.only, "Criterion ids to run (default: all)")->check(CLI::Range(1, 10));
  app.add_flag("!--no-determinism", options.check_determinism, "Skip the worker-count rerun");
  CLI11_PARSE(app, argc, argv);
  options.level = quick ? dpspin::VerifyLevel::Quick : dpspin::VerifyLevel::Full;
  options.on_result = [](const dpspin::CheckResult& r) {
    std::printf("%s\n", dpspin::format_line(r).c_str());
    std::fflush(stdout);
  };
  try {
    const auto results = dpspin::run_acceptance(options);
    int failed = 0;
    for (const auto& r : results) failed += r.passed ? 0 : 1;
    std::printf("%zu criteria, %d failed\n", results.size(), failed);
    return failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 2;
  }
}
