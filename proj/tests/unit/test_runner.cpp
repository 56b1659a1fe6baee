#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "dpspin/io.hpp"
#include "dpspin/runner.hpp"

using namespace dpspin;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dpspin_runner_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  return dir;
}

json base(const std::string& target) {
  return json{{"schema_version", 1}, {"id", "t-" + target}, {"target", target}, {"seed", 42}};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("configuration schema rejects unknown keys and bad values") {
  json doc = base("exact");
  CHECK_NOTHROW(config_from_json(doc));

  json extra = doc;
  extra["colour"] = "blue";
  CHECK_THROWS_WITH_AS(config_from_json(extra), doctest::Contains("unknown key 'colour'"), ConfigError);

  json nested = doc;
  nested["model"] = {{"p", 2}, {"lambda", 1.0}, {"beta", 1.0}, {"h", 0.0}, {"J", 1.0}};
  CHECK_THROWS_WITH_AS(config_from_json(nested), doctest::Contains("unknown key 'J' in model"), ConfigError);

  json pop = doc;
  pop["popdyn"] = {{"s_out", 1000}, {"sweeps", 3}};
  CHECK_THROWS_AS(config_from_json(pop), ConfigError);

  json version = doc;
  version["schema_version"] = 2;
  CHECK_THROWS_AS(config_from_json(version), ConfigError);

  json unsafe = doc;
  unsafe["id"] = "../escape";
  CHECK_THROWS_AS(config_from_json(unsafe), ConfigError);

  json target = doc;
  target["target"] = "anneal";
  CHECK_THROWS_AS(config_from_json(target), ConfigError);

  json zeta = doc;
  zeta["zeta"] = 1.0;
  CHECK_THROWS_AS(config_from_json(zeta), ConfigError);

  json typed = doc;
  typed["sizes"] = {{"N", "eight"}};
  CHECK_THROWS_AS(config_from_json(typed), ConfigError);
}

TEST_CASE("configuration round-trips through JSON") {
  json doc = base("orderparam");
  doc["kernels"] = json::array({{{"name", "k"}, {"kappa", "linear"}, {"b0", 0.5}}});
  doc["popdyn"] = {{"s_out", 200}, {"s_in", 300}, {"resample", "systematic"}, {"init", "zero"}};
  const ExperimentConfig c = config_from_json(doc);
  const ExperimentConfig again = config_from_json(to_json(c));
  CHECK(to_json(again) == to_json(c));
  CHECK(again.popdyn.resample == ResampleScheme::Systematic);
  CHECK(again.kernels.at(0).kappa == Kappa::Linear);
}

TEST_CASE("free-spin exact run writes log 2 rows and reruns identically") {
  json doc = base("exact");
  doc["model"] = {{"p", 2}, {"lambda", 1.0}, {"beta", 0.0}, {"h", 0.0}};
  doc["sizes"] = {{"N", {6, 8, 10}}, {"reps", 3}};
  const ExperimentConfig c = config_from_json(doc);
  const RunRecord first = run(c, scratch("exact-a"));
  const RunRecord second = run(c, scratch("exact-b"));
  CHECK(first.checksums == second.checksums);
  CHECK(first.passed);

  const auto rows = csv_rows(read_file(first.out_dir / "free_energy.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0][0] == "N");
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(std::fabs(std::stod(rows[r][2]) - std::log(2.0)) < 1e-12);

  const json record = json::parse(read_file(first.out_dir / "run.json"));
  CHECK(record.at("config").at("seed") == 42);
  CHECK(record.at("checksums").contains("free_energy.csv"));
  CHECK(record.at("version").get<std::string>().size() > 0);
  for (const auto& entry : fs::directory_iterator(first.out_dir)) {
    CHECK(entry.path().filename().string().find(".tmp.") == std::string::npos);
  }
}

TEST_CASE("popdyn run writes a monotone diagnostics series and a summary") {
  json doc = base("popdyn");
  doc["model"] = {{"p", 2}, {"lambda", 1.0}, {"beta", 0.5}, {"h", 0.3}};
  doc["popdyn"] = {{"s_out", 100}, {"s_in", 100}, {"window", 5}, {"patience", 2}};
  const RunRecord rec = run(config_from_json(doc), scratch("popdyn"));
  CHECK(rec.passed);
  const auto rows = csv_rows(read_file(rec.out_dir / "diagnostics.csv"));
  REQUIRE(rows.size() > 2);
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(std::stoul(rows[r][0]) == r);
  const json summary = json::parse(read_file(rec.out_dir / "summary.json"));
  CHECK(summary.at("converged") == true);
  CHECK(summary.at("q_star").at("value").get<double>() > 0.0);
  CHECK(fs::exists(rec.out_dir / "timing.csv"));
  CHECK_FALSE(rec.checksums.contains("timing.csv"));
  CHECK(rec.checksums.contains("population.csv"));

  doc["popdyn"]["max_sweeps"] = 3;
  const RunRecord short_run = run(config_from_json(doc), scratch("popdyn-short"));
  CHECK_FALSE(short_run.passed);
  CHECK(short_run.message.find("did not converge") != std::string::npos);
}

TEST_CASE("module errors carry the target as context") {
  json doc = base("cavity-check");
  doc["model"] = {{"p", 2}, {"lambda", 1.0}, {"beta", 1.0}, {"h", 0.3}};
  doc["popdyn"] = {{"s_out", 100}, {"s_in", 100}, {"max_sweeps", 2}};
  CHECK_THROWS_WITH_AS(run(config_from_json(doc), scratch("cavity")), doctest::Contains("cavity-check: "),
                       ConvergenceError);

  json missing = base("orderparam");
  missing["population"] = "/nonexistent/population.csv";
  CHECK_THROWS_WITH_AS(run(config_from_json(missing), scratch("missing")), doctest::Contains("orderparam: "),
                       std::runtime_error);
}

TEST_CASE("symmetry-test and orderparam runs on closed-form kernels") {
  json doc = base("symmetry-test");
  doc["sizes"] = {{"sites", 500}, {"replicates", 8}};
  const RunRecord rec = run(config_from_json(doc), scratch("symmetry"));
  CHECK(rec.passed);
  CHECK(csv_rows(read_file(rec.out_dir / "symmetry.csv")).size() == 7);

  json op = base("orderparam");
  op["kernels"] = json::array({{{"name", "odd"}, {"b0", 0.3}}, {{"name", "shift"}, {"a0", 0.3}, {"b0", 0.5}}});
  op["sizes"] = {{"sites", 500}, {"replicates", 8}};
  const RunRecord orec = run(config_from_json(op), scratch("orderparam"));
  const json summary = json::parse(read_file(orec.out_dir / "summary.json"));
  CHECK(summary.at("order_parameters").size() == 2);
  CHECK(summary.at("order_parameters")[1].at("q_star_exact").get<double>() == doctest::Approx(0.09).epsilon(1e-6));
}

TEST_CASE("default output root follows the environment") {
  ::setenv(kOutRootEnv, "/tmp/dpspin-root", 1);
  CHECK(default_output_dir("abc") == fs::path("/tmp/dpspin-root/abc"));
  ::unsetenv(kOutRootEnv);
  CHECK(default_output_dir("abc") == fs::path("runs/abc"));
}

TEST_CASE("checksums and atomic writes") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  const fs::path dir = scratch("atomic");
  atomic_write(dir / "x.txt", "one");
  atomic_write(dir / "x.txt", "two");
  CHECK(read_file(dir / "x.txt") == "two");
  CHECK(format_double(0.1) == "0.10000000000000001");
}
