#pragma once

// Configuration-driven experiment runner behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpspin/cavity.hpp"
#include "dpspin/model.hpp"
#include "dpspin/order_parameter.hpp"

namespace dpspin {

/// Environment variable naming the default output root.
inline constexpr const char* kOutRootEnv = "DPSPIN_OUT_ROOT";
inline constexpr int kConfigSchemaVersion = 1;

/// Invalid configuration. The message names the offending key or section.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SizeConfig {
  std::vector<int> n_list{8};
  int reps = 16;
  int overlap_reps = 0;       // exact: overlap histogram replicates, 0 disables
  std::size_t atoms = 10000;  // pd: K
  std::size_t draws = 1000;   // pd: M
  double tilt_sd = 0.0;       // pd: Gaussian log-tilt sd, 0 disables the tilt study
  std::size_t sites = 2000;
  std::size_t states = 6;
  std::size_t replicates = 16;
  int m_max = 5;
};

struct ExperimentConfig {
  std::string id = "run";
  std::string target;
  std::uint64_t seed = 1;
  ModelParams model;
  PerturbationConfig perturbation;
  PopDynConfig popdyn;
  SizeConfig sizes;
  ResidualOptions residuals;
  double zeta = 0.5;
  std::vector<KernelSpec> kernels;
  std::filesystem::path population;  // CSV of a population order parameter
  std::string verify_level = "quick";

  /// Throws ConfigError.
  void validate() const;
};

inline const std::vector<std::string>& experiment_targets() {
  static const std::vector<std::string> targets{"exact",        "pd",            "orderparam", "popdyn",
                                                "cavity-check", "symmetry-test", "verify"};
  return targets;
}

/// Versioned schema; unknown keys are rejected at every level.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);

struct RunRecord {
  nlohmann::json config;
  std::string version;
  std::filesystem::path out_dir;
  double wall_seconds = 0.0;
  std::map<std::string, std::string> checksums;  // numeric outputs only
  nlohmann::json seeds;
  bool passed = true;  // false when a check failed or popdyn did not converge
  std::string message;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// $DPSPIN_OUT_ROOT/<id>, or runs/<id> when the variable is unset.
std::filesystem::path default_output_dir(const std::string& id);

/// Dispatches on config.target and writes every output under out_dir
/// atomically, finishing with run.json. Identical config and seed give
/// byte-identical numeric outputs; wall-times go to timing.csv and run.json only.
RunRecord run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

std::string code_version();

}  // namespace dpspin
