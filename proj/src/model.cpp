#include "dpspin/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dpspin/stats.hpp"

namespace dpspin {

double ModelParams::c() const noexcept { return std::tanh(h); }

void ModelParams::validate() const {
  if (p < 2) throw std::invalid_argument("ModelParams: p must be >= 2");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("ModelParams: lambda must be positive");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("ModelParams: beta must be nonnegative");
  }
  if (!std::isfinite(h)) throw std::invalid_argument("ModelParams: h must be finite");
}

double PerturbationConfig::s_N(int n) const { return std::pow(static_cast<double>(n), gamma); }

double PerturbationConfig::c_N(int n) const {
  const double base = std::log1p(static_cast<double>(n));
  switch (c_rule) {
    case CNRule::LogOnePlusN:
      return base;
    case CNRule::SqrtLog:
      return std::sqrt(base);
  }
  return base;
}

double PerturbationConfig::truncation_bound(int n) const {
  double xmax = 0.0;
  for (double x : x_weights) xmax = std::max(xmax, x);
  return s_N(n) * std::ldexp(1.0, -max_order()) * xmax;
}

void PerturbationConfig::validate() const {
  if (!(gamma > 0.25 && gamma < 0.5)) {
    throw std::invalid_argument("PerturbationConfig: gamma must lie in (1/4, 1/2)");
  }
  for (double x : x_weights) {
    if (!(x >= 0.0 && x <= 3.0)) {
      throw std::invalid_argument("PerturbationConfig: x weights must lie in [0, 3]");
    }
  }
}

double theta_pm(double g, double beta, std::span<const Spin> spins) {
  double prod = 1.0;
  for (Spin s : spins) prod *= s;
  return beta * g * prod;
}

double theta_ext_product(double beta_g, double m_product) noexcept {
  // ch(x)(1 + th(x) M) = ((1 + M) e^x + (1 - M) e^-x) / 2
  const double ax = std::fabs(beta_g);
  const double sm = beta_g >= 0.0 ? m_product : -m_product;
  const double tail = std::exp(-2.0 * ax);
  const double inner = (1.0 + sm) + (1.0 - sm) * tail;
  if (inner > 0.0) return ax + std::log(inner) - std::log(2.0);
  return -ax + std::log(1.0 - sm) - std::log(2.0);
}

double theta_ext(double g, double beta, std::span<const double> m) {
  double prod = 1.0;
  for (double mj : m) {
    if (!(std::fabs(mj) <= 1.0)) throw std::domain_error("theta_ext: magnetization outside [-1,1]");
    prod *= mj;
  }
  return theta_ext_product(beta * g, prod);
}

namespace {

Clause make_clause(double g, double beta, std::vector<int> sites) {
  return Clause{g, std::tanh(beta * g), std::move(sites)};
}

double clause_product(const Clause& clause, std::span<const Spin> sigma) {
  double prod = 1.0;
  for (int i : clause.sites) prod *= sigma[static_cast<std::size_t>(i)];
  return prod;
}

}  // namespace

HamiltonianInstance sample_instance(const ModelParams& params, int n,
                                    const PerturbationConfig& pert, const Stream& stream,
                                    std::optional<int> forced_clause_count) {
  params.validate();
  if (n < 1) throw std::invalid_argument("sample_instance: N must be >= 1");
  if (pert.enabled1 || pert.enabled2) pert.validate();

  HamiltonianInstance inst;
  inst.n = n;
  inst.params = params;
  inst.pert = pert;
  inst.seed = stream.seed();
  inst.stream_id = stream.id();

  std::uint64_t count = 0;
  if (forced_clause_count) {
    if (*forced_clause_count < 0) throw std::invalid_argument("sample_instance: negative clause count");
    count = static_cast<std::uint64_t>(*forced_clause_count);
  } else {
    Stream counter = stream.child(Purpose::ClauseCount, 0);
    count = counter.poisson(params.lambda * n);
  }
  const auto un = static_cast<std::uint64_t>(n);
  inst.clauses.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Stream gs = stream.child(Purpose::Couplings, k);
    Stream is = stream.child(Purpose::Indices, k);
    std::vector<int> sites(static_cast<std::size_t>(params.p));
    for (auto& s : sites) s = static_cast<int>(is.below(un));
    inst.clauses.push_back(make_clause(gs.normal(), params.beta, std::move(sites)));
  }

  if (pert.enabled1) {
    for (int l = 1; l <= pert.max_order(); ++l) {
      Stream gs = stream.child(Purpose::Perturbation1, static_cast<std::uint64_t>(l));
      std::size_t size = 1;
      for (int j = 0; j < l; ++j) size *= static_cast<std::size_t>(n);
      std::vector<double> coeffs(size);
      for (auto& c : coeffs) c = gs.normal();
      inst.pert1.push_back(std::move(coeffs));
    }
  }

  if (pert.enabled2) {
    Stream head = stream.child(Purpose::Perturbation2, 0);
    const std::uint64_t clusters = head.poisson(pert.c_N(n));
    for (std::uint64_t l = 0; l < clusters; ++l) {
      Stream cs = stream.child(Purpose::Perturbation2, l + 1);
      const std::uint64_t k = cs.poisson(params.lambda * params.p);
      CavityCluster cluster;
      for (std::uint64_t j = 0; j < k; ++j) {
        const double g = cs.normal();
        std::vector<int> sites(static_cast<std::size_t>(params.p - 1));
        for (auto& s : sites) s = static_cast<int>(cs.below(un));
        cluster.clauses.push_back(make_clause(g, params.beta, std::move(sites)));
      }
      inst.pert2.push_back(std::move(cluster));
    }
  }
  return inst;
}

double energy(const HamiltonianInstance& inst, std::span<const Spin> sigma) {
  if (static_cast<int>(sigma.size()) != inst.n) {
    throw std::invalid_argument("energy: configuration length does not match N");
  }
  const double beta = inst.params.beta;
  double total = 0.0;
  for (const auto& clause : inst.clauses) total += beta * clause.g * clause_product(clause, sigma);

  double magnetization = 0.0;
  for (Spin s : sigma) magnetization += s;
  total += inst.params.h * magnetization;

  if (!inst.pert1.empty()) {
    const double sn = inst.pert.s_N(inst.n);
    for (std::size_t li = 0; li < inst.pert1.size(); ++li) {
      const int l = static_cast<int>(li) + 1;
      const auto& coeffs = inst.pert1[li];
      double g_nl = 0.0;
      std::vector<int> idx(static_cast<std::size_t>(l), 0);
      for (double coeff : coeffs) {
        double prod = 1.0;
        for (int i : idx) prod *= sigma[static_cast<std::size_t>(i)];
        g_nl += coeff * prod;
        for (int j = l - 1; j >= 0; --j) {
          if (++idx[static_cast<std::size_t>(j)] < inst.n) break;
          idx[static_cast<std::size_t>(j)] = 0;
        }
      }
      g_nl /= std::pow(static_cast<double>(inst.n), 0.5 * l);
      total += sn * std::ldexp(inst.pert.x_weights[li], -l) * g_nl;
    }
  }

  for (const auto& cluster : inst.pert2) {
    double field = inst.params.h;
    for (const auto& clause : cluster.clauses) field += beta * clause.g * clause_product(clause, sigma);
    total += log_cosh(field);
  }
  return total;
}

Spin spins_from_magnetization(double sbar, double coin) {
  if (!(std::fabs(sbar) <= 1.0)) {
    throw std::domain_error("spins_from_magnetization: magnetization outside [-1,1]");
  }
  return coin <= 0.5 * (1.0 + sbar) ? Spin{1} : Spin{-1};
}

// ---------------------------------------------------------------- JSON

using nlohmann::json;

json to_json(const ModelParams& params) {
  return json{{"p", params.p}, {"lambda", params.lambda}, {"beta", params.beta}, {"h", params.h}};
}

ModelParams model_params_from_json(const json& doc) {
  ModelParams params;
  params.p = doc.at("p").get<int>();
  params.lambda = doc.at("lambda").get<double>();
  params.beta = doc.at("beta").get<double>();
  params.h = doc.at("h").get<double>();
  params.validate();
  return params;
}

json to_json(const PerturbationConfig& pert) {
  return json{{"enabled1", pert.enabled1},
              {"gamma", pert.gamma},
              {"x_weights", pert.x_weights},
              {"enabled2", pert.enabled2},
              {"c_rule", pert.c_rule == CNRule::LogOnePlusN ? "log1p" : "sqrt_log1p"}};
}

PerturbationConfig perturbation_from_json(const json& doc) {
  PerturbationConfig pert;
  pert.enabled1 = doc.value("enabled1", false);
  pert.gamma = doc.value("gamma", 1.0 / 3.0);
  if (doc.contains("x_weights")) pert.x_weights = doc.at("x_weights").get<std::vector<double>>();
  pert.enabled2 = doc.value("enabled2", false);
  const std::string rule = doc.value("c_rule", std::string("log1p"));
  if (rule == "log1p") {
    pert.c_rule = CNRule::LogOnePlusN;
  } else if (rule == "sqrt_log1p") {
    pert.c_rule = CNRule::SqrtLog;
  } else {
    throw std::invalid_argument("perturbation: unknown c_rule '" + rule + "'");
  }
  pert.validate();
  return pert;
}

namespace {
json clause_to_json(const Clause& c) { return json{{"g", c.g}, {"t", c.t}, {"sites", c.sites}}; }

Clause clause_from_json(const json& doc) {
  return Clause{doc.at("g").get<double>(), doc.at("t").get<double>(),
                doc.at("sites").get<std::vector<int>>()};
}
}  // namespace

json instance_to_json(const HamiltonianInstance& inst) {
  json doc;
  doc["schema_version"] = 1;
  doc["N"] = inst.n;
  doc["seed"] = inst.seed;
  doc["stream_id"] = inst.stream_id;
  doc["params"] = to_json(inst.params);
  doc["perturbation"] = to_json(inst.pert);
  json clauses = json::array();
  for (const auto& c : inst.clauses) clauses.push_back(clause_to_json(c));
  doc["clauses"] = std::move(clauses);
  doc["pert1"] = inst.pert1;
  json clusters = json::array();
  for (const auto& cluster : inst.pert2) {
    json cl = json::array();
    for (const auto& c : cluster.clauses) cl.push_back(clause_to_json(c));
    clusters.push_back(json{{"clauses", std::move(cl)}});
  }
  doc["pert2"] = std::move(clusters);
  return doc;
}

HamiltonianInstance instance_from_json(const json& doc) {
  if (doc.value("schema_version", 0) != 1) {
    throw std::invalid_argument("instance: unsupported schema_version");
  }
  HamiltonianInstance inst;
  inst.n = doc.at("N").get<int>();
  inst.seed = doc.at("seed").get<std::uint64_t>();
  inst.stream_id = doc.value("stream_id", std::uint64_t{0});
  inst.params = model_params_from_json(doc.at("params"));
  inst.pert = perturbation_from_json(doc.at("perturbation"));
  for (const auto& c : doc.at("clauses")) inst.clauses.push_back(clause_from_json(c));
  inst.pert1 = doc.at("pert1").get<std::vector<std::vector<double>>>();
  for (const auto& cl : doc.at("pert2")) {
    CavityCluster cluster;
    for (const auto& c : cl.at("clauses")) cluster.clauses.push_back(clause_from_json(c));
    inst.pert2.push_back(std::move(cluster));
  }
  for (const auto& c : inst.clauses) {
    for (int s : c.sites) {
      if (s < 0 || s >= inst.n) throw std::invalid_argument("instance: clause site out of range");
    }
  }
  return inst;
}

}  // namespace dpspin
