#include "dpspin/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>
#include <sstream>

#include "dpspin/exact.hpp"
#include "dpspin/io.hpp"
#include "dpspin/pd.hpp"
#include "dpspin/rng.hpp"
#include "dpspin/verify.hpp"

#ifndef DPSPIN_VERSION
#define DPSPIN_VERSION "0.0.0"
#endif
#ifndef DPSPIN_GIT_REV
#define DPSPIN_GIT_REV "unknown"
#endif

namespace dpspin {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- config parsing

void only_keys(const json& doc, const std::string& section, const std::set<std::string>& allowed) {
  if (!doc.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.contains(key)) throw ConfigError("config: unknown key '" + key + "' in " + section);
  }
}

template <class T>
void read(const json& doc, const char* key, T& into, const std::string& section) {
  if (!doc.contains(key)) return;
  try {
    into = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: " + section + "." + key + ": " + e.what());
  }
}

ResampleScheme resample_from(const std::string& s) {
  if (s == "multinomial") return ResampleScheme::Multinomial;
  if (s == "systematic") return ResampleScheme::Systematic;
  throw ConfigError("config: popdyn.resample must be 'multinomial' or 'systematic'");
}

std::string resample_name(ResampleScheme r) { return r == ResampleScheme::Systematic ? "systematic" : "multinomial"; }

InitRule init_from(const std::string& s) {
  if (s == "uniform") return InitRule::Uniform;
  if (s == "zero") return InitRule::Zero;
  if (s == "plus") return InitRule::Plus;
  throw ConfigError("config: popdyn.init must be 'uniform', 'zero' or 'plus'");
}

std::string init_name(InitRule r) {
  switch (r) {
    case InitRule::Zero: return "zero";
    case InitRule::Plus: return "plus";
    default: return "uniform";
  }
}

PopDynConfig popdyn_from(const json& doc) {
  only_keys(doc, "popdyn", {"s_out", "s_in", "max_sweeps", "damping", "threshold", "window", "patience", "resample", "init"});
  PopDynConfig c;
  read(doc, "s_out", c.s_out, "popdyn");
  read(doc, "s_in", c.s_in, "popdyn");
  read(doc, "max_sweeps", c.max_sweeps, "popdyn");
  read(doc, "damping", c.damping, "popdyn");
  read(doc, "threshold", c.threshold, "popdyn");
  read(doc, "window", c.window, "popdyn");
  read(doc, "patience", c.patience, "popdyn");
  std::string resample = "multinomial", init = "uniform";
  read(doc, "resample", resample, "popdyn");
  read(doc, "init", init, "popdyn");
  c.resample = resample_from(resample);
  c.init = init_from(init);
  return c;
}

json popdyn_to_json(const PopDynConfig& c) {
  return json{{"s_out", c.s_out},         {"s_in", c.s_in},     {"max_sweeps", c.max_sweeps},
              {"damping", c.damping},     {"threshold", c.threshold}, {"window", c.window},
              {"patience", c.patience},   {"resample", resample_name(c.resample)}, {"init", init_name(c.init)}};
}

SizeConfig sizes_from(const json& doc) {
  only_keys(doc, "sizes",
            {"N", "reps", "overlap_reps", "atoms", "draws", "tilt_sd", "sites", "states", "replicates", "m_max"});
  SizeConfig s;
  read(doc, "N", s.n_list, "sizes");
  read(doc, "reps", s.reps, "sizes");
  read(doc, "overlap_reps", s.overlap_reps, "sizes");
  read(doc, "atoms", s.atoms, "sizes");
  read(doc, "draws", s.draws, "sizes");
  read(doc, "tilt_sd", s.tilt_sd, "sizes");
  read(doc, "sites", s.sites, "sizes");
  read(doc, "states", s.states, "sizes");
  read(doc, "replicates", s.replicates, "sizes");
  read(doc, "m_max", s.m_max, "sizes");
  return s;
}

json sizes_to_json(const SizeConfig& s) {
  return json{{"N", s.n_list},         {"reps", s.reps},       {"overlap_reps", s.overlap_reps},
              {"atoms", s.atoms},      {"draws", s.draws},     {"tilt_sd", s.tilt_sd},
              {"sites", s.sites},      {"states", s.states},   {"replicates", s.replicates},
              {"m_max", s.m_max}};
}

ResidualOptions residuals_from(const json& doc) {
  only_keys(doc, "residuals", {"sites", "states", "inner"});
  ResidualOptions r;
  read(doc, "sites", r.sites, "residuals");
  read(doc, "states", r.states, "residuals");
  read(doc, "inner", r.inner, "residuals");
  return r;
}

// ---------------------------------------------------------------- outputs

class Outputs {
 public:
  explicit Outputs(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void numeric(const std::string& name, const std::string& content) {
    atomic_write(dir_ / name, content);
    checksums_[name] = hex64(fnv1a64(content));
  }
  void timing(const std::string& name, const std::string& content) { atomic_write(dir_ / name, content); }
  void summary(const json& doc) { numeric("summary.json", doc.dump(2) + "\n"); }
  [[nodiscard]] const std::map<std::string, std::string>& checksums() const { return checksums_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> checksums_;
};

std::string num(double x) { return format_double(x); }

json est(const Estimate& e) { return json{{"value", e.value}, {"se", e.se}}; }

OrderParameter load_order_parameter(const ExperimentConfig& c) {
  if (!c.population.empty()) {
    OrderParameter op{population_from_csv(read_file(c.population)), c.zeta};
    op.validate();
    return op;
  }
  if (!c.kernels.empty()) {
    OrderParameter op{c.kernels.front(), c.zeta};
    op.validate();
    return op;
  }
  throw ConfigError("config: target '" + c.target + "' needs 'kernels' or 'population'");
}

// ---------------------------------------------------------------- targets

void run_exact(const ExperimentConfig& c, const Stream& root, Outputs& out, RunRecord& rec) {
  std::ostringstream fe;
  fe << "N,reps,free_energy,se\n";
  std::ostringstream hist;
  hist << "N,bin_center,mass\n";
  json summary{{"target", "exact"}, {"free_energy", json::array()}, {"overlap", json::array()}};
  for (int n : c.sizes.n_list) {
    const FreeEnergyResult r =
        quenched_free_energy(c.model, n, c.sizes.reps, c.perturbation, root.child(Purpose::Global, static_cast<std::uint64_t>(n)));
    fe << n << ',' << c.sizes.reps << ',' << num(r.estimate.value) << ',' << num(r.estimate.se) << '\n';
    summary["free_energy"].push_back({{"N", n}, {"estimate", est(r.estimate)}});
    if (c.sizes.overlap_reps > 0) {
      const OverlapStats o = overlap_statistics(c.model, n, c.sizes.overlap_reps, c.perturbation,
                                                root.child(Purpose::Replica, static_cast<std::uint64_t>(n)));
      for (std::size_t b = 0; b < o.histogram.size(); ++b) {
        hist << n << ',' << num(-1.0 + (static_cast<double>(b) + 0.5) * o.bin_width) << ',' << num(o.histogram[b]) << '\n';
      }
      json moments = json::array();
      for (const auto& m : o.moments) moments.push_back(est(m));
      summary["overlap"].push_back({{"N", n}, {"moments", moments}});
    }
  }
  out.numeric("free_energy.csv", fe.str());
  if (c.sizes.overlap_reps > 0) out.numeric("overlap.csv", hist.str());
  out.summary(summary);
  rec.seeds["streams"] = {{"free_energy", "root.child(Global, N).child(Disorder, r)"},
                          {"overlap", "root.child(Replica, N)"}};
}

void run_pd(const ExperimentConfig& c, const Stream& root, Outputs& out, RunRecord& rec) {
  json summary{{"target", "pd"}, {"zeta", c.zeta}, {"identity", 1.0 - c.zeta}};
  for (auto [construction, name] : {std::pair{PDConstruction::Poisson, "poisson"},
                                    std::pair{PDConstruction::StickBreaking, "stickbreaking"}}) {
    const PDStudy st = pd_study(c.zeta, c.sizes.atoms, c.sizes.draws, construction,
                                root.child(Purpose::PoissonDirichlet, static_cast<std::uint64_t>(construction)));
    out.numeric(std::string("pd_") + name + ".csv", pd_study_csv(st));
    summary[name] = {{"sum_v2", est(st.sum_v2)},
                     {"sum_v3", est(st.sum_v3)},
                     {"sum_v2_squared", est(st.sum_v2_squared)},
                     {"identity_passed", std::fabs(st.sum_v2.value - (1.0 - c.zeta)) <= 3.0 * st.sum_v2.se}};
  }
  if (c.sizes.tilt_sd > 0.0) {
    const TiltStudy t = tilt_study(c.zeta, c.sizes.atoms, c.sizes.draws, c.sizes.tilt_sd, root.child(Purpose::Tilt, 0));
    summary["tilt"] = {{"tilt_sd", t.tilt_sd},
                       {"sum_v2", est(t.sum_v2)},
                       {"top_covariance", est(t.top_covariance)},
                       {"top_tilt_mean", est(t.top_tilt_mean)},
                       {"top_tilt_mean_expected", c.zeta * t.tilt_sd * t.tilt_sd}};
  }
  out.summary(summary);
  rec.seeds["streams"] = {{"poisson", "root.child(PoissonDirichlet, 0)"},
                          {"stickbreaking", "root.child(PoissonDirichlet, 1)"},
                          {"tilt", "root.child(Tilt, 0)"}};
}

json describe_order_parameter(const OrderParameter& op, const ExperimentConfig& c, const Stream& s) {
  const auto [ql, qh] = overlaps_exact(op);
  const OverlapReport rep = overlap_pair(op, c.sizes.states, c.sizes.sites, s.child(Purpose::Replica, 0), c.sizes.replicates);
  const Estimate sym = symmetry_statistic(op, c.sizes.m_max);
  json doc{{"q_star_exact", ql},
           {"q_star_star_exact", qh},
           {"q_star", est(rep.q_low)},
           {"q_star_star", est(rep.q_high)},
           {"two_value_violation", rep.two_value_violation},
           {"two_value_tolerance", rep.tolerance},
           {"not_two_valued", rep.flagged},
           {"symmetry_statistic", est(sym)}};
  if (op.kernel() != nullptr) {
    json u = json::array();
    for (int m = 1; m <= 3; ++m) u.push_back(u_dependence_residual(op, m));
    doc["u_dependence"] = u;
  }
  return doc;
}

void run_orderparam(const ExperimentConfig& c, const Stream& root, Outputs& out, RunRecord& rec) {
  json summary{{"target", "orderparam"}, {"zeta", c.zeta}, {"order_parameters", json::array()}};
  std::vector<OrderParameter> ops;
  if (!c.population.empty() || c.kernels.empty()) {
    ops.push_back(load_order_parameter(c));
  } else {
    for (const auto& k : c.kernels) ops.push_back(OrderParameter{k, c.zeta});
  }
  std::ostringstream csv;
  csv << "name,q_star,q_star_se,q_star_star,q_star_star_se,symmetry,symmetry_se,not_two_valued\n";
  for (std::size_t i = 0; i < ops.size(); ++i) {
    ops[i].validate();
    const std::string name = ops[i].kernel() ? ops[i].kernel()->name : "population";
    json d = describe_order_parameter(ops[i], c, root.child(Purpose::State, i));
    d["name"] = name;
    csv << name << ',' << num(d["q_star"]["value"]) << ',' << num(d["q_star"]["se"]) << ','
        << num(d["q_star_star"]["value"]) << ',' << num(d["q_star_star"]["se"]) << ','
        << num(d["symmetry_statistic"]["value"]) << ',' << num(d["symmetry_statistic"]["se"]) << ','
        << (d["not_two_valued"].get<bool>() ? 1 : 0) << '\n';
    summary["order_parameters"].push_back(d);
  }
  out.numeric("orderparam.csv", csv.str());
  out.summary(summary);
  rec.seeds["streams"] = {{"overlap", "root.child(State, i).child(Replica, 0)"}};
}

std::string diagnostics_csv(const PopDynResult& r) {
  std::ostringstream os;
  os << "sweep,q_star,q_star_star,m1,m2,m3,m4,delta\n";
  for (const SweepDiagnostics& d : r.trajectory) {
    os << d.sweep << ',' << num(d.q_star) << ',' << num(d.q_star_star);
    for (double m : d.moments) os << ',' << num(m);
    os << ',' << num(d.delta) << '\n';
  }
  return os.str();
}

std::string timing_csv(const PopDynResult& r) {
  std::ostringstream os;
  os << "sweep,seconds\n";
  for (std::size_t t = 0; t < r.sweep_seconds.size(); ++t) os << t + 1 << ',' << r.sweep_seconds[t] << '\n';
  return os.str();
}

void write_population(const PopDynResult& r, const ExperimentConfig& c, Outputs& out) {
  out.numeric("diagnostics.csv", diagnostics_csv(r));
  out.timing("timing.csv", timing_csv(r));
  out.numeric("population.csv", population_to_csv(r.population));
  out.numeric("population.json", population_sidecar(r.population, c.zeta, c.seed).dump(2) + "\n");
}

json popdyn_summary(const PopDynResult& r) {
  return json{{"converged", r.converged},
              {"sweeps", r.sweeps},
              {"q_star", est(r.q_low)},
              {"q_star_star", est(r.q_high)},
              {"final_delta", r.trajectory.empty() ? -1.0 : r.trajectory.back().delta}};
}

void run_popdyn(const ExperimentConfig& c, const Stream& root, Outputs& out, RunRecord& rec) {
  const PopDynResult r = popdyn_solve(c.model, c.zeta, c.popdyn, root.child(Purpose::Population, 0));
  write_population(r, c, out);
  json summary = popdyn_summary(r);
  summary["target"] = "popdyn";
  out.summary(summary);
  if (!r.converged) {
    rec.passed = false;
    rec.message = "population dynamics did not converge within " + std::to_string(c.popdyn.max_sweeps) +
                  " sweeps; see diagnostics.csv";
  }
  rec.seeds["streams"] = {{"init", "root.child(Population, 0).child(Init, i)"},
                          {"sweep", "root.child(Population, 0).child(Sweep, t).child(Population, i)"}};
}

void run_cavity_check(const ExperimentConfig& c, const Stream& root, Outputs& out, RunRecord& rec) {
  json summary{{"target", "cavity-check"}};
  OrderParameter op;
  if (!c.population.empty() || !c.kernels.empty()) {
    op = load_order_parameter(c);
  } else {
    const PopDynResult r = popdyn_solve(c.model, c.zeta, c.popdyn, root.child(Purpose::Population, 0));
    write_population(r, c, out);
    summary["popdyn"] = popdyn_summary(r);
    if (!r.converged) {
      out.summary(summary);
      throw ConvergenceError("population dynamics did not converge within " + std::to_string(c.popdyn.max_sweeps) +
                                 " sweeps; see diagnostics.csv",
                             r);
    }
    op = r.order_parameter();
  }
  const CavityMomentResult cm = cavity_moment_residual(op, c.model, c.zeta, c.sizes.sites, root.child(Purpose::Cavity, 0));
  const ResidualResult eta = eta_variance_residual(op, c.model, c.zeta, root.child(Purpose::Cavity, 1), c.residuals);
  const ResidualResult dec = decorrelation_residual(op, c.model, c.zeta, root.child(Purpose::Cavity, 2), c.residuals);

  std::ostringstream csv;
  csv << "check,value,se,passed\n";
  json moments = json::array();
  for (const MomentCheck& m : cm.moments) {
    csv << "moment " << m.name << ',' << num(m.diff) << ',' << num(m.se) << ',' << (m.passed ? 1 : 0) << '\n';
    moments.push_back({{"name", m.name}, {"array", est(m.s_side)}, {"cavity", est(m.xi_side)}, {"passed", m.passed}});
  }
  csv << "eta variance," << num(eta.value.value) << ',' << num(eta.value.se) << ',' << (eta.passed ? 1 : 0) << '\n';
  csv << "decorrelation," << num(dec.value.value) << ',' << num(dec.value.se) << ',' << (dec.passed ? 1 : 0) << '\n';
  out.numeric("cavity_check.csv", csv.str());
  summary["moments"] = moments;
  summary["moment_residual"] = cm.residual;
  summary["moment_max_z"] = cm.max_z;
  summary["eta_variance"] = {{"estimate", est(eta.value)}, {"passed", eta.passed}};
  summary["decorrelation"] = {{"estimate", est(dec.value)}, {"passed", dec.passed}};
  const bool passed = cm.passed && eta.passed && dec.passed;
  summary["passed"] = passed;
  out.summary(summary);
  if (!passed) {
    rec.passed = false;
    rec.message = "fixed-point checks failed; see cavity_check.csv";
  }
  rec.seeds["streams"] = {{"moments", "root.child(Cavity, 0)"},
                          {"eta_variance", "root.child(Cavity, 1)"},
                          {"decorrelation", "root.child(Cavity, 2)"}};
}

void run_symmetry(const ExperimentConfig& c, const Stream& root, Outputs& out, RunRecord& rec) {
  const std::vector<KernelSpec> battery = c.kernels.empty() ? default_symmetry_battery() : c.kernels;
  std::ostringstream csv;
  csv << "name,q_star,q_star_se,statistic,statistic_se,zero_overlap,consistent\n";
  json rows = json::array();
  bool all = true;
  for (std::size_t i = 0; i < battery.size(); ++i) {
    const OrderParameter op{battery[i], c.zeta};
    op.validate();
    const OverlapReport rep =
        overlap_pair(op, c.sizes.states, c.sizes.sites, root.child(Purpose::Replica, i), c.sizes.replicates);
    const Estimate stat = symmetry_statistic(op, c.sizes.m_max);
    const bool zero = rep.q_low.value < 3.0 * rep.q_low.se;
    const bool consistent = zero ? stat.value < 3.0 * stat.se : stat.value > 5.0 * stat.se;
    all = all && consistent;
    csv << battery[i].name << ',' << num(rep.q_low.value) << ',' << num(rep.q_low.se) << ',' << num(stat.value) << ','
        << num(stat.se) << ',' << (zero ? 1 : 0) << ',' << (consistent ? 1 : 0) << '\n';
    rows.push_back({{"name", battery[i].name},
                    {"q_star", est(rep.q_low)},
                    {"statistic", est(stat)},
                    {"zero_overlap", zero},
                    {"consistent", consistent}});
  }
  out.numeric("symmetry.csv", csv.str());
  out.summary({{"target", "symmetry-test"}, {"kernels", rows}, {"passed", all}});
  if (!all) {
    rec.passed = false;
    rec.message = "symmetry and overlap classifications disagree; see symmetry.csv";
  }
  rec.seeds["streams"] = {{"overlap", "root.child(Replica, i)"}};
}

void run_verify(const ExperimentConfig& c, Outputs& out, RunRecord& rec) {
  VerifyOptions options;
  options.level = c.verify_level == "full" ? VerifyLevel::Full : VerifyLevel::Quick;
  options.seed = c.seed;
  const auto results = run_acceptance(options);
  std::ostringstream csv, timing;
  csv << "id,name,passed,digest\n";
  timing << "id,seconds\n";
  json rows = json::array();
  bool all = true;
  for (const CheckResult& r : results) {
    all = all && r.passed;
    csv << r.id << ',' << r.name << ',' << (r.passed ? 1 : 0) << ',' << r.digest << '\n';
    timing << r.id << ',' << r.seconds << '\n';
    rows.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"digest", r.digest}});
  }
  out.numeric("verify.csv", csv.str());
  out.timing("timing.csv", timing.str());
  out.summary({{"target", "verify"}, {"level", c.verify_level}, {"criteria", rows}, {"passed", all}});
  if (!all) {
    rec.passed = false;
    rec.message = "acceptance criteria failed; see verify.csv";
  }
  rec.seeds["streams"] = {{"criterion", "Stream(seed).child(Estimator, id)"}};
}

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  static const std::regex safe("[A-Za-z0-9._-]+");
  if (!std::regex_match(id, safe) || id == "." || id == "..") {
    throw ConfigError("config: id '" + id + "' must be non-empty and use only letters, digits, '.', '_' or '-'");
  }
  const auto& targets = experiment_targets();
  if (std::find(targets.begin(), targets.end(), target) == targets.end()) {
    throw ConfigError("config: unknown target '" + target + "'");
  }
  try {
    model.validate();
    perturbation.validate();
    popdyn.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(zeta > 0.0 && zeta < 1.0)) throw ConfigError("config: zeta must lie in (0, 1)");
  if (sizes.n_list.empty()) throw ConfigError("config: sizes.N must list at least one size");
  for (int n : sizes.n_list) {
    if (n < 1) throw ConfigError("config: sizes.N entries must be positive");
  }
  if (sizes.reps < 2) throw ConfigError("config: sizes.reps must be at least 2");
  if (sizes.overlap_reps < 0) throw ConfigError("config: sizes.overlap_reps must be non-negative");
  if (sizes.atoms < 10) throw ConfigError("config: sizes.atoms must be at least 10");
  if (sizes.draws < 2) throw ConfigError("config: sizes.draws must be at least 2");
  if (!(sizes.tilt_sd >= 0.0)) throw ConfigError("config: sizes.tilt_sd must be non-negative");
  if (sizes.sites < 2 || sizes.states < 2 || sizes.replicates < 2) {
    throw ConfigError("config: sizes.sites, sizes.states and sizes.replicates must be at least 2");
  }
  if (sizes.m_max < 3 || sizes.m_max % 2 == 0) throw ConfigError("config: sizes.m_max must be odd and at least 3");
  if (residuals.sites < 2 || residuals.states < 2 || residuals.inner < 1) {
    throw ConfigError("config: residuals need sites >= 2, states >= 2, inner >= 1");
  }
  for (const auto& k : kernels) {
    try {
      k.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config: kernel '" + k.name + "': " + e.what());
    }
  }
  if (verify_level != "quick" && verify_level != "full") throw ConfigError("config: verify_level must be quick or full");
}

ExperimentConfig config_from_json(const json& doc) {
  only_keys(doc, "config",
            {"schema_version", "id", "target", "seed", "model", "perturbation", "popdyn", "sizes", "residuals", "zeta",
             "kernels", "population", "verify_level"});
  if (!doc.contains("schema_version") || doc.at("schema_version") != kConfigSchemaVersion) {
    throw ConfigError("config: schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  ExperimentConfig c;
  read(doc, "id", c.id, "config");
  read(doc, "target", c.target, "config");
  read(doc, "seed", c.seed, "config");
  read(doc, "zeta", c.zeta, "config");
  read(doc, "verify_level", c.verify_level, "config");
  try {
    if (doc.contains("model")) {
      only_keys(doc.at("model"), "model", {"p", "lambda", "beta", "h"});
      c.model = model_params_from_json(doc.at("model"));
    }
    if (doc.contains("perturbation")) {
      only_keys(doc.at("perturbation"), "perturbation", {"enabled1", "gamma", "x_weights", "enabled2", "c_rule"});
      c.perturbation = perturbation_from_json(doc.at("perturbation"));
    }
    if (doc.contains("kernels")) {
      if (!doc.at("kernels").is_array()) throw ConfigError("config: kernels must be an array");
      for (json k : doc.at("kernels")) {
        if (!k.contains("schema_version")) k["schema_version"] = 1;
        c.kernels.push_back(*kernel_from_json(k).kernel());
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (doc.contains("popdyn")) c.popdyn = popdyn_from(doc.at("popdyn"));
  if (doc.contains("sizes")) c.sizes = sizes_from(doc.at("sizes"));
  if (doc.contains("residuals")) c.residuals = residuals_from(doc.at("residuals"));
  std::string population;
  read(doc, "population", population, "config");
  c.population = population;
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json kernels = json::array();
  for (const auto& k : c.kernels) {
    json j = kernel_to_json(k, c.zeta);
    j.erase("zeta");
    kernels.push_back(j);
  }
  json doc{{"schema_version", kConfigSchemaVersion},
           {"id", c.id},
           {"target", c.target},
           {"seed", c.seed},
           {"model", to_json(c.model)},
           {"perturbation", to_json(c.perturbation)},
           {"popdyn", popdyn_to_json(c.popdyn)},
           {"sizes", sizes_to_json(c.sizes)},
           {"residuals", {{"sites", c.residuals.sites}, {"states", c.residuals.states}, {"inner", c.residuals.inner}}},
           {"zeta", c.zeta},
           {"kernels", kernels},
           {"verify_level", c.verify_level}};
  if (!c.population.empty()) doc["population"] = c.population.string();
  return doc;
}

// ---------------------------------------------------------------- run

json RunRecord::to_json() const {
  return json{{"config", config},           {"version", version},   {"wall_seconds", wall_seconds},
              {"checksums", checksums},     {"seeds", seeds},       {"passed", passed},
              {"message", message}};
}

std::filesystem::path default_output_dir(const std::string& id) {
  const char* root = std::getenv(kOutRootEnv);
  const std::filesystem::path base = root != nullptr && *root != '\0' ? std::filesystem::path(root) : "runs";
  return base / id;
}

std::string code_version() { return std::string(DPSPIN_VERSION) + "+" + DPSPIN_GIT_REV; }

RunRecord run(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  RunRecord rec;
  rec.config = to_json(config);
  rec.version = code_version();
  rec.out_dir = out_dir;
  rec.seeds = {{"root", config.seed}, {"root_stream", "Stream(seed).child(Global, 0)"}};
  std::filesystem::create_directories(out_dir);
  Outputs out(out_dir);
  const Stream root = Stream(config.seed).child(Purpose::Global, 0);
  const auto start = std::chrono::steady_clock::now();
  try {
    if (config.target == "exact") run_exact(config, root, out, rec);
    else if (config.target == "pd") run_pd(config, root, out, rec);
    else if (config.target == "orderparam") run_orderparam(config, root, out, rec);
    else if (config.target == "popdyn") run_popdyn(config, root, out, rec);
    else if (config.target == "cavity-check") run_cavity_check(config, root, out, rec);
    else if (config.target == "symmetry-test") run_symmetry(config, root, out, rec);
    else run_verify(config, out, rec);
  } catch (const ConfigError&) {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(config.target + ": " + e.what(), e.result());
  } catch (const std::exception& e) {
    throw std::runtime_error(config.target + ": " + e.what());
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.checksums = out.checksums();
  atomic_write(out_dir / "run.json", rec.to_json().dump(2) + "\n");
  return rec;
}

}  // namespace dpspin
