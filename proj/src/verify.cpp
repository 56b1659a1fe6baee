#include "dpspin/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <omp.h>

#include "dpspin/cavity.hpp"
#include "dpspin/exact.hpp"
#include "dpspin/io.hpp"
#include "dpspin/model.hpp"
#include "dpspin/order_parameter.hpp"
#include "dpspin/pd.hpp"
#include "dpspin/reference.hpp"
#include "dpspin/rng.hpp"

namespace dpspin {

namespace {

struct Sizes {
  std::size_t pd_atoms;
  std::size_t pd_draws;
  int cavity_reps;
  std::size_t population;
  std::size_t moment_sites;
};

Sizes sizes_for(VerifyLevel level) {
  if (level == VerifyLevel::Quick) return {1000, 2000, 200, 1000, 4000};
  return {10000, 10000, 1000, 1000, 4000};
}

struct Outcome {
  bool passed = true;
  std::ostringstream detail;
  Digest digest;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

std::string fmt(double x, int precision = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", precision, x);
  return buf;
}

std::string fmt_est(const Estimate& e) { return fmt(e.value) + "+-" + fmt(e.se, 2); }

ModelParams make_params(int p, double lambda, double beta, double h) {
  ModelParams m;
  m.p = p;
  m.lambda = lambda;
  m.beta = beta;
  m.h = h;
  return m;
}

PopDynConfig population_config(std::size_t size) {
  PopDynConfig cfg;
  cfg.s_out = size;
  cfg.s_in = size;
  return cfg;
}

void exactness(Outcome& out, const Stream& root) {
  double worst_free = 0.0;
  for (int n = 6; n <= 16; ++n) {
    const auto inst = sample_instance(make_params(2, 1.0, 0.0, 0.0), n, {}, root.child(Purpose::Disorder, n));
    const double f = GibbsEnumeration(inst).free_energy_density();
    out.digest.add(f);
    worst_free = std::max(worst_free, std::fabs(f - std::log(2.0)));
  }
  const double h = 0.7;
  const double target = std::log(2.0 * std::cosh(h));
  double worst_field = 0.0;
  for (int n = 6; n <= 16; ++n) {
    const auto inst =
        sample_instance(make_params(3, 1.0, 1.0, h), n, {}, root.child(Purpose::ClauseCount, n), 0);
    const double f = GibbsEnumeration(inst).free_energy_density();
    out.digest.add(f);
    worst_field = std::max(worst_field, std::fabs(f - target));
  }
  out.detail << "max|F-log2|=" << fmt(worst_free) << " max|F-log(2ch h)|=" << fmt(worst_field);
  out.require(worst_free <= 1e-12, "beta=0 free energy");
  out.require(worst_field <= 1e-12, "zero-clause free energy");
}

void oracle_equivalence(Outcome& out, const Stream& root) {
  double worst_logz = 0.0, worst_prob = 0.0;
  for (int r = 0; r < 50; ++r) {
    Stream s = root.child(Purpose::Disorder, static_cast<std::uint64_t>(r));
    const int n = 4 + r % 9;
    const ModelParams m = make_params(2 + r % 3, 0.5 + s.uniform(), 0.2 + 1.5 * s.uniform(), s.normal() * 0.5);
    const auto inst = sample_instance(m, n, {}, s.child(Purpose::Couplings, 0));
    const GibbsEnumeration gibbs(inst);
    const double naive = reference::log_partition_naive(inst);
    worst_logz = std::max(worst_logz, std::fabs(gibbs.log_partition() - naive));
    const auto probs = reference::probabilities_naive(inst);
    const auto fast = gibbs.probabilities();
    for (std::size_t x = 0; x < probs.size(); ++x) worst_prob = std::max(worst_prob, std::fabs(probs[x] - fast[x]));
    out.digest.add(gibbs.log_partition());
  }
  out.detail << "50 instances max|dlogZ|=" << fmt(worst_logz) << " max|dP|=" << fmt(worst_prob);
  out.require(worst_logz <= 1e-10, "log partition");
  out.require(worst_prob <= 1e-10, "probabilities");
}

void pd_identity(Outcome& out, const Stream& root, const VerifyOptions& o, const Sizes& z) {
  for (std::size_t i = 0; i < o.pd_zetas.size(); ++i) {
    const double zeta = o.pd_zetas[i];
    const Stream s = root.child(Purpose::PoissonDirichlet, i);
    const PDStudy poisson = pd_study(zeta, z.pd_atoms, z.pd_draws, PDConstruction::Poisson, s.child(Purpose::Global, 0));
    const PDStudy stick =
        pd_study(zeta, z.pd_atoms, z.pd_draws, PDConstruction::StickBreaking, s.child(Purpose::Global, 1));
    const double dv2 = poisson.sum_v2.value - stick.sum_v2.value;
    const double dv3 = poisson.sum_v3.value - stick.sum_v3.value;
    out.detail << " zeta=" << zeta << ": E sum V^2 " << fmt_est(poisson.sum_v2) << " / " << fmt_est(stick.sum_v2)
               << " E sum V^3 diff " << fmt(dv3);
    out.require(std::fabs(poisson.sum_v2.value - (1.0 - zeta)) <= 3.0 * poisson.sum_v2.se, "Poisson identity");
    out.require(std::fabs(stick.sum_v2.value - (1.0 - zeta)) <= 3.0 * stick.sum_v2.se, "stick-breaking identity");
    out.require(std::fabs(dv2) <= 3.0 * combined_se(poisson.sum_v2.se, stick.sum_v2.se), "constructions V^2");
    out.require(std::fabs(dv3) <= 3.0 * combined_se(poisson.sum_v3.se, stick.sum_v3.se), "constructions V^3");
    for (const auto* st : {&poisson, &stick}) {
      out.digest.add(st->sum_v2.value).add(st->sum_v2.se).add(st->sum_v3.value).add(st->sum_v3.se);
    }
  }
}

void tilt_invariance(Outcome& out, const Stream& root, const VerifyOptions& o, const Sizes& z) {
  constexpr double tilt_sd = 1.0;
  for (std::size_t i = 0; i < o.pd_zetas.size(); ++i) {
    const double zeta = o.pd_zetas[i];
    const TiltStudy t = tilt_study(zeta, z.pd_atoms, z.pd_draws, tilt_sd, root.child(Purpose::Tilt, i));
    out.detail << " zeta=" << zeta << ": E sum V'^2 " << fmt_est(t.sum_v2) << " cov " << fmt_est(t.top_covariance);
    out.require(std::fabs(t.sum_v2.value - (1.0 - zeta)) <= 3.0 * t.sum_v2.se, "tilted PD identity");
    out.require(std::fabs(t.top_covariance.value) <= 3.0 * t.top_covariance.se, "weight/tilt covariance");
    out.digest.add(t.sum_v2.value).add(t.sum_v2.se).add(t.top_covariance.value).add(t.top_covariance.se);
  }
}

void theta_extension(Outcome& out, const Stream& root) {
  double worst = 0.0;
  for (int p : {2, 3, 4}) {
    Stream s = root.child(Purpose::Couplings, static_cast<std::uint64_t>(p));
    std::vector<double> m(static_cast<std::size_t>(p));
    std::vector<Spin> sigma(static_cast<std::size_t>(p));
    for (int r = 0; r < 1000; ++r) {
      const double g = s.normal();
      const double beta = 3.0 * s.uniform();
      for (double& x : m) x = 2.0 * s.uniform() - 1.0;
      double brute = 0.0;
      for (unsigned mask = 0; mask < (1u << p); ++mask) {
        double weight = 1.0;
        for (int j = 0; j < p; ++j) {
          sigma[j] = (mask >> j) & 1u ? Spin{-1} : Spin{1};
          weight *= 0.5 * (1.0 + m[j] * sigma[j]);
        }
        brute += weight * std::exp(theta_pm(g, beta, sigma));
      }
      const double ext = std::exp(theta_ext(g, beta, m));
      worst = std::max(worst, std::fabs(ext - brute) / brute);
      out.digest.add(ext);
    }
  }
  out.detail << "3000 draws max relative error " << fmt(worst);
  out.require(worst <= 1e-12, "theta extension");
}

void finite_n_cavity(Outcome& out, const Stream& root, const Sizes& z) {
  const ModelParams m = make_params(2, 0.5, 0.5, 0.2);
  const MomentQuery query{1, 1, 2, {{0, 1}}};
  const auto r8 = cavity_residual_finite_N(m, 8, z.cavity_reps, query, root.child(Purpose::Cavity, 8));
  const auto r16 = cavity_residual_finite_N(m, 16, z.cavity_reps, query, root.child(Purpose::Cavity, 16));
  const double allowance = combined_se(r8.residual.se, r16.residual.se);
  const auto free = cavity_residual_finite_N(make_params(2, 0.5, 0.0, 0.2), 8, 20, query, root.child(Purpose::Cavity, 0));
  double worst_free = 0.0;
  for (double d : free.differences) worst_free = std::max(worst_free, std::fabs(d));
  out.detail << "r8=" << fmt_est(r8.residual) << " r16=" << fmt_est(r16.residual) << " beta=0 max|diff|="
             << fmt(worst_free);
  out.require(r16.residual.value <= r8.residual.value + allowance, "residual grows with N");
  out.require(worst_free <= 1e-10, "beta=0 residual");
  for (const auto* r : {&r8, &r16, &free}) out.digest.add(r->residual.value).add(r->residual.se).add(r->lhs.value);
}

void fixed_point(Outcome& out, const Stream& root, const Sizes& z) {
  const ModelParams m = make_params(2, 1.0, 1.0, 0.3);
  constexpr double zeta = 0.5;
  const PopDynResult run = popdyn_solve(m, zeta, population_config(z.population), root.child(Purpose::Population, 0));
  out.digest.add(run.q_low.value).add(run.q_high.value).add(static_cast<std::int64_t>(run.sweeps));
  out.detail << "converged=" << run.converged << " sweeps=" << run.sweeps << " q*=" << fmt_est(run.q_low)
             << " q**=" << fmt_est(run.q_high);
  out.require(run.converged, "popdyn convergence");
  if (!run.converged) return;
  const OrderParameter op = run.order_parameter();
  const CavityMomentResult cm = cavity_moment_residual(op, m, zeta, z.moment_sites, root.child(Purpose::Cavity, 0));
  const ResidualResult eta = eta_variance_residual(op, m, zeta, root.child(Purpose::Cavity, 1));
  const ResidualResult dec = decorrelation_residual(op, m, zeta, root.child(Purpose::Cavity, 2));
  out.detail << " cavity moments max|diff|=" << fmt(cm.residual) << " max z=" << fmt(cm.max_z, 3)
             << " eta var=" << fmt_est(eta.value) << " decorrelation=" << fmt_est(dec.value);
  out.require(cm.passed, "cavity moment battery");
  out.require(eta.passed, "eta variance");
  out.require(dec.passed, "decorrelation");
  for (const auto& c : cm.moments) out.digest.add(c.diff).add(c.se);
  out.digest.add(eta.value.value).add(eta.value.se).add(dec.value.value).add(dec.value.se);
}

void symmetry_equivalence(Outcome& out, const Stream& root) {
  const auto battery = default_symmetry_battery();
  int symmetric = 0;
  for (std::size_t i = 0; i < battery.size(); ++i) {
    const OrderParameter op{battery[i], 0.5};
    op.validate();
    const OverlapReport rep = overlap_pair(op, 6, 2000, root.child(Purpose::Replica, i), 32);
    const Estimate stat = symmetry_statistic(op, 5);
    const bool zero_overlap = rep.q_low.value < 3.0 * rep.q_low.se;
    const bool ok = zero_overlap ? stat.value < 3.0 * stat.se : stat.value > 5.0 * stat.se;
    symmetric += zero_overlap ? 1 : 0;
    out.detail << " [" << battery[i].name << ": q*=" << fmt_est(rep.q_low) << " S=" << fmt(stat.value) << "]";
    out.require(ok, battery[i].name);
    out.digest.add(rep.q_low.value).add(rep.q_low.se).add(stat.value);
  }
  out.require(symmetric > 0 && symmetric < static_cast<int>(battery.size()), "battery covers both classes");
}

void field_forces_overlap(Outcome& out, const Stream& root, const Sizes& z) {
  const double h = 0.5;
  const QStarReport free = qstar_positivity_check(make_params(2, 1.0, 0.0, h), 0.5, population_config(z.population),
                                                  root.child(Purpose::Population, 0));
  const double exact = std::tanh(h) * std::tanh(h);
  out.detail << "beta=0: q*=" << fmt(free.q_star.value, 10) << " (th(0.5)^2=" << fmt(exact, 10) << ")";
  out.require(free.passed, "beta=0 positivity");
  out.require(std::fabs(free.q_star.value - exact) <= 1e-12, "beta=0 closed form");

  const QStarReport point = qstar_positivity_check(make_params(2, 1.0, 1.0, 0.3), 0.5, population_config(z.population),
                                                   root.child(Purpose::Population, 1));
  out.detail << " fixed point: q*=" << fmt_est(point.q_star) << " identity residual " << fmt(point.identity_residual);
  out.require(point.passed, "q* > 5 se at the fixed point");
  out.require(point.identity_residual <= 1e-12, "one-site identity");
  out.digest.add(free.q_star.value).add(point.q_star.value).add(point.q_star.se).add(point.identity_residual);
}

const char* criterion_name(int id) {
  switch (id) {
    case 1: return "exactness";
    case 2: return "gray-code vs naive enumeration";
    case 3: return "PD moment identity";
    case 4: return "tilt invariance";
    case 5: return "theta extension";
    case 6: return "finite-N cavity residual";
    case 7: return "fixed-point self-consistency";
    case 8: return "symmetry iff q*=0";
    case 9: return "field forces overlap";
    case 10: return "determinism across worker counts";
    default: return "unknown";
  }
}

}  // namespace

std::vector<KernelSpec> default_symmetry_battery() {
  return {
      {"odd sign, v-spread", Kappa::Sign, 0.0, 0.0, 0.0, 0.0, 0.2, 0.5, 0.0, 0.0},
      {"odd linear, u-spread", Kappa::Linear, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.3, 0.0},
      {"odd sign, w-spread", Kappa::Sign, 0.0, 0.0, 0.0, 0.0, 0.4, 0.0, 0.0, 0.3},
      {"shifted sign", Kappa::Sign, 0.3, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0},
      {"v-shifted", Kappa::Sign, 0.0, 0.4, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0},
      {"constant", Kappa::Sign, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
  };
}

CheckResult run_criterion(int id, const VerifyOptions& options) {
  if (id < 1 || id > 9) throw std::out_of_range("criterion id must lie in 1..9");
  const Sizes z = sizes_for(options.level);
  const Stream root = Stream(options.seed).child(Purpose::Estimator, static_cast<std::uint64_t>(id));
  CheckResult result;
  result.id = id;
  result.name = criterion_name(id);
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (id) {
      case 1: exactness(out, root); break;
      case 2: oracle_equivalence(out, root); break;
      case 3: pd_identity(out, root, options, z); break;
      case 4: tilt_invariance(out, root, options, z); break;
      case 5: theta_extension(out, root); break;
      case 6: finite_n_cavity(out, root, z); break;
      case 7: fixed_point(out, root, z); break;
      case 8: symmetry_equivalence(out, root); break;
      case 9: field_forces_overlap(out, root, z); break;
      default: break;
    }
  } catch (const std::exception& e) {
    out.passed = false;
    out.detail << " error: " << e.what();
    out.digest.add(std::string_view{e.what()});
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.passed = out.passed;
  result.detail = out.detail.str();
  if (!result.detail.empty() && result.detail.front() == ' ') result.detail.erase(0, 1);
  result.digest = out.digest.hex();
  return result;
}

std::vector<CheckResult> run_acceptance(const VerifyOptions& options) {
  std::vector<int> ids = options.only;
  if (ids.empty()) {
    for (int i = 1; i <= kCriterionCount; ++i) ids.push_back(i);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const bool want_determinism =
      options.check_determinism && std::find(ids.begin(), ids.end(), 10) != ids.end();
  std::vector<int> primary;
  for (int id : ids) {
    if (id >= 1 && id <= 9) primary.push_back(id);
    else if (id != 10) throw std::out_of_range("criterion id must lie in 1..10");
  }
  // Asking for criterion 10 alone still reruns the whole battery.
  std::vector<int> rerun = primary.empty() ? std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9} : primary;

  const int saved = omp_get_max_threads();
  const auto report = [&](const CheckResult& r) {
    if (options.on_result) options.on_result(r);
  };

  std::vector<CheckResult> results;
  omp_set_num_threads(std::max(1, options.workers));
  for (int id : primary) {
    results.push_back(run_criterion(id, options));
    report(results.back());
  }

  if (want_determinism) {
    CheckResult det;
    det.id = 10;
    det.name = criterion_name(10);
    det.passed = true;
    const auto start = std::chrono::steady_clock::now();
    std::ostringstream detail;
    Digest digest;
    for (int id : rerun) {
      std::string reference_digest;
      for (int workers : {8, 1}) {
        std::string d;
        const auto existing = std::find_if(results.begin(), results.end(), [&](const CheckResult& r) { return r.id == id; });
        if (workers == options.workers && existing != results.end()) {
          d = existing->digest;
        } else {
          omp_set_num_threads(workers);
          d = run_criterion(id, options).digest;
        }
        if (reference_digest.empty()) {
          reference_digest = d;
        } else if (d != reference_digest) {
          det.passed = false;
          detail << " FAILED[criterion " << id << ": " << reference_digest << " vs " << d << "]";
        }
        digest.add(d);
      }
    }
    if (det.passed) {
      detail << " criteria";
      for (int id : rerun) detail << ' ' << id;
      detail << " byte-identical under 8 and 1 workers";
    }
    det.detail = detail.str();
    if (det.detail.front() == ' ') det.detail.erase(0, 1);
    det.digest = digest.hex();
    det.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(det);
    report(results.back());
  }
  omp_set_num_threads(saved);
  return results;
}

std::string format_line(const CheckResult& r) {
  char head[160];
  std::snprintf(head, sizeof head, "[%s] %2d %s (%.1f s): ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
                r.seconds);
  return head + r.detail;
}

}  // namespace dpspin
