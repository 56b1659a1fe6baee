// dpspin: experiment runner for the diluted p-spin toolkit.
//
//   dpspin <subcommand> [--config PATH] [--seed U64] [--workers K] [--out DIR]
//
// Exit status: 0 success, 1 usage or configuration error, 2 module error,
// 3 the run completed but a check failed or population dynamics did not converge.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include "dpspin/io.hpp"
#include "dpspin/runner.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string level = "quick";
};

dpspin::ExperimentConfig load(const std::string& target, const CommonFlags& flags) {
  nlohmann::json doc = nlohmann::json::object();
  std::filesystem::path base;
  if (!flags.config.empty()) {
    try {
      doc = nlohmann::json::parse(dpspin::read_file(flags.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw dpspin::ConfigError("config: " + flags.config + " is not valid JSON: " + e.what());
    }
    base = std::filesystem::path(flags.config).parent_path();
  } else {
    doc["schema_version"] = dpspin::kConfigSchemaVersion;
    doc["id"] = target;
  }
  if (!doc.is_object()) throw dpspin::ConfigError("config: top level must be an object");
  if (doc.contains("target") && doc["target"] != target) {
    throw dpspin::ConfigError("config: target '" + doc["target"].get<std::string>() + "' does not match subcommand '" +
                              target + "'");
  }
  doc["target"] = target;
  if (flags.seed) doc["seed"] = *flags.seed;
  if (target == "verify") doc["verify_level"] = flags.level;
  dpspin::ExperimentConfig cfg = dpspin::config_from_json(doc);
  if (!cfg.population.empty() && cfg.population.is_relative()) cfg.population = base / cfg.population;
  return cfg;
}

int execute(const std::string& target, const CommonFlags& flags) {
  try {
    const dpspin::ExperimentConfig cfg = load(target, flags);
    if (flags.workers) omp_set_num_threads(*flags.workers);
    const std::filesystem::path out = flags.out.empty() ? dpspin::default_output_dir(cfg.id) : std::filesystem::path(flags.out);
    const dpspin::RunRecord rec = dpspin::run(cfg, out);
    std::printf("%s: wrote %s (%.1f s)\n", target.c_str(), out.string().c_str(), rec.wall_seconds);
    for (const auto& [name, sum] : rec.checksums) std::printf("  %-22s %s\n", name.c_str(), sum.c_str());
    if (!rec.passed) {
      std::fprintf(stderr, "dpspin %s: %s\n", target.c_str(), rec.message.c_str());
      return 3;
    }
    return 0;
  } catch (const dpspin::ConfigError& e) {
    std::fprintf(stderr, "dpspin %s: %s\n", target.c_str(), e.what());
    return 1;
  } catch (const dpspin::ConvergenceError& e) {
    std::fprintf(stderr, "dpspin %s: %s\n", target.c_str(), e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dpspin %s: %s\n", target.c_str(), e.what());
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diluted p-spin toolkit: exact enumeration, Poisson-Dirichlet sampling, order parameters, "
               "population dynamics and the acceptance battery"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dpspin::code_version());

  CommonFlags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"exact", "Quenched free energy and overlaps by exact enumeration"},
      {"pd", "Poisson-Dirichlet sampler studies"},
      {"orderparam", "Overlaps and symmetry of a kernel or population order parameter"},
      {"popdyn", "Solve the tilted cavity fixed point by population dynamics"},
      {"cavity-check", "Fixed-point residuals of an order parameter (runs popdyn when none is given)"},
      {"symmetry-test", "Symmetry statistic against q* on a kernel battery"},
      {"verify", "Run the acceptance battery"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Root seed (overrides the config)");
    sub->add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out,
                    std::string("Output directory (default: $") + dpspin::kOutRootEnv + "/<id>, else runs/<id>)");
    if (std::string(name) == "verify") {
      sub->add_option("--level", flags.level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
    }
  }
  CLI11_PARSE(app, argc, argv);
  for (const CLI::App* sub : app.get_subcommands()) return execute(sub->get_name(), flags);
  return 1;
}
