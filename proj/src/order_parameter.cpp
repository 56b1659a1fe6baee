#include "dpspin/order_parameter.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dpspin {

namespace {

constexpr int kInitialNodes = 256;
constexpr int kMaxNodes = 1 << 13;
constexpr double kQuadratureTolerance = 1e-6;
// u enters kernels only through sgn(u - 1/2), so these two nodes average exactly.
constexpr std::array<double, 2> kUNodes{0.25, 0.75};

double sgn_half(double u) noexcept { return u < 0.5 ? -1.0 : 1.0; }

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

/// Midpoint rule over [0,1]^2, doubling until successive estimates agree to tol.
double integrate_wv(const std::function<double(double, double)>& g, double tol) {
  double previous = 0.0;
  bool have_previous = false;
  for (int n = kInitialNodes; n <= kMaxNodes; n *= 2) {
    const double h = 1.0 / n;
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
      const double w = (a + 0.5) * h;
      double row = 0.0;
      for (int b = 0; b < n; ++b) row += g(w, (b + 0.5) * h);
      total += row;
    }
    total *= h * h;
    if (have_previous && std::fabs(total - previous) < tol) return total;
    previous = total;
    have_previous = true;
  }
  return previous;
}

void check_population_shape(std::size_t s_out, std::size_t s_in, std::size_t size) {
  if (s_out == 0 || s_in == 0) throw std::invalid_argument("Population: sizes must be >= 1");
  if (size != s_out * s_in) throw std::invalid_argument("Population: value count does not match sizes");
}

}  // namespace

// ---------------------------------------------------------------- kappa

double kappa(Kappa k, double x) noexcept {
  switch (k) {
    case Kappa::Sign:
      return x < 0.5 ? -1.0 : 1.0;
    case Kappa::Linear:
      return 2.0 * x - 1.0;
    case Kappa::Skewed:
      return x < 1.0 / 3.0 ? 1.0 : -0.5;
  }
  return 0.0;
}

std::vector<double> kappa_breakpoints(Kappa k) {
  switch (k) {
    case Kappa::Sign:
      return {0.5};
    case Kappa::Linear:
      return {};
    case Kappa::Skewed:
      return {1.0 / 3.0};
  }
  return {};
}

double kappa_moment(Kappa k, int j) {
  if (j < 0) throw std::invalid_argument("kappa_moment: order must be >= 0");
  std::vector<double> edges{0.0};
  for (double b : kappa_breakpoints(k)) edges.push_back(b);
  edges.push_back(1.0);
  double previous = 0.0;
  bool have_previous = false;
  for (int n = kInitialNodes; n <= kMaxNodes; n *= 2) {
    double total = 0.0;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
      const double lo = edges[p];
      const double h = (edges[p + 1] - lo) / n;
      for (int a = 0; a < n; ++a) total += std::pow(kappa(k, lo + (a + 0.5) * h), j) * h;
    }
    if (have_previous && std::fabs(total - previous) < kQuadratureTolerance) return total;
    previous = total;
    have_previous = true;
  }
  return previous;
}

double kappa_moment_exact(Kappa k, int j) {
  switch (k) {
    case Kappa::Sign:
      return j % 2 == 0 ? 1.0 : 0.0;
    case Kappa::Linear:
      return j % 2 == 0 ? 1.0 / (j + 1) : 0.0;
    case Kappa::Skewed:
      return 1.0 / 3.0 + 2.0 / 3.0 * std::pow(-0.5, j);
  }
  return 0.0;
}

// ---------------------------------------------------------------- kernels

double KernelSpec::mean(double w, double u, double v) const noexcept {
  return a0 + av * (2.0 * v - 1.0) + au * sgn_half(u) + aw * (2.0 * w - 1.0);
}

double KernelSpec::spread(double w, double u, double v) const noexcept {
  return b0 + bv * (2.0 * v - 1.0) + bu * sgn_half(u) + bw * (2.0 * w - 1.0);
}

double KernelSpec::operator()(double w, double u, double v, double x) const noexcept {
  return mean(w, u, v) + spread(w, u, v) * dpspin::kappa(kappa, x);
}

double KernelSpec::sup_abs() const {
  // Affine in (2v-1), (2w-1) and kappa for fixed sgn(u-1/2): extremes sit at corners.
  const double k_lo = kappa == Kappa::Skewed ? -0.5 : -1.0;
  double sup = 0.0;
  for (double sv : {-1.0, 1.0}) {
    for (double su : {-1.0, 1.0}) {
      for (double sw : {-1.0, 1.0}) {
        const double m = a0 + av * sv + au * su + aw * sw;
        const double s = b0 + bv * sv + bu * su + bw * sw;
        for (double k : {k_lo, 1.0}) sup = std::max(sup, std::fabs(m + s * k));
      }
    }
  }
  return sup;
}

void KernelSpec::validate() const {
  for (double c : {a0, av, au, aw, b0, bv, bu, bw}) {
    if (!std::isfinite(c)) throw std::invalid_argument("KernelSpec: non-finite coefficient");
  }
  if (sup_abs() > 1.0 + 1e-12) {
    throw std::invalid_argument("KernelSpec '" + name + "': magnetizations leave [-1, 1]");
  }
}

// ---------------------------------------------------------------- populations

Population::Population(std::size_t s_out, std::size_t s_in, double fill)
    : s_out_(s_out), s_in_(s_in), values_(s_out * s_in, fill) {
  check_population_shape(s_out, s_in, values_.size());
}

Population::Population(std::size_t s_out, std::size_t s_in, std::vector<double> values)
    : s_out_(s_out), s_in_(s_in), values_(std::move(values)) {
  check_population_shape(s_out, s_in, values_.size());
}

double Population::eval(double v, double x) const noexcept {
  const auto i = std::min(static_cast<std::size_t>(v * static_cast<double>(s_out_)), s_out_ - 1);
  const auto j = std::min(static_cast<std::size_t>(x * static_cast<double>(s_in_)), s_in_ - 1);
  return at(i, j);
}

void Population::validate() const {
  for (double m : values_) {
    if (!std::isfinite(m) || std::fabs(m) > 1.0) {
      throw std::domain_error("Population: magnetization outside [-1, 1]");
    }
  }
}

Estimate Population::q_star() const {
  RunningStats s;
  for (std::size_t i = 0; i < s_out_; ++i) {
    double m = 0.0;
    for (double x : row(i)) m += x;
    m /= static_cast<double>(s_in_);
    s.add(m * m);
  }
  return s.estimate();
}

Estimate Population::q_star_star() const {
  RunningStats s;
  for (std::size_t i = 0; i < s_out_; ++i) {
    double m2 = 0.0;
    for (double x : row(i)) m2 += x * x;
    s.add(m2 / static_cast<double>(s_in_));
  }
  return s.estimate();
}

std::array<double, 4> Population::moments() const {
  std::array<double, 4> out{};
  for (double x : values_) {
    double p = 1.0;
    for (double& o : out) {
      p *= x;
      o += p;
    }
  }
  for (double& o : out) o /= static_cast<double>(values_.size());
  return out;
}

// ---------------------------------------------------------------- order parameter

double OrderParameter::eval(double w, double u, double v, double x) const {
  if (const auto* k = kernel()) return (*k)(w, u, v, x);
  return std::get<Population>(repr).eval(v, x);
}

void OrderParameter::validate() const {
  if (!(zeta > 0.0 && zeta < 1.0)) throw std::invalid_argument("OrderParameter: zeta must lie in (0, 1)");
  if (const auto* k = kernel()) {
    k->validate();
  } else {
    std::get<Population>(repr).validate();
  }
}

MagnetizationArray synthesize_array(const OrderParameter& op, std::size_t n_states, std::size_t n_sites,
                                    const Stream& stream) {
  if (n_states < 1 || n_sites < 1) throw std::invalid_argument("synthesize_array: sizes must be >= 1");
  MagnetizationArray a;
  a.n_states = n_states;
  a.n_sites = n_sites;
  a.w = stream.child(Purpose::Global, 0).uniform();
  Stream us = stream.child(Purpose::State, 0);
  Stream vs = stream.child(Purpose::Site, 0);
  a.u.resize(n_states);
  a.v.resize(n_sites);
  for (double& u : a.u) u = us.uniform();
  for (double& v : a.v) v = vs.uniform();
  a.s.resize(n_states * n_sites);
  for (std::size_t alpha = 0; alpha < n_states; ++alpha) {
    Stream xs = stream.child(Purpose::Coin, alpha);
    for (std::size_t i = 0; i < n_sites; ++i) {
      a.s[alpha * n_sites + i] = op.eval(a.w, a.u[alpha], a.v[i], xs.uniform());
    }
  }
  return a;
}

OverlapReport overlap_pair(const OrderParameter& op, std::size_t n_states, std::size_t n_sites,
                           const Stream& stream, std::size_t replicates) {
  if (n_states < 2) throw std::invalid_argument("overlap_pair: need at least two states");
  if (n_sites < 2) throw std::invalid_argument("overlap_pair: need at least two sites");
  if (replicates < 2) throw std::invalid_argument("overlap_pair: need at least two replicates");

  std::vector<MagnetizationArray> arrays;
  RunningStats low, high;
  for (std::size_t r = 0; r < replicates; ++r) {
    arrays.push_back(synthesize_array(op, n_states, n_sites, stream.child(Purpose::Replica, r)));
    const auto& a = arrays.back();
    double sum_low = 0.0, sum_high = 0.0;
    for (std::size_t i = 0; i < n_sites; ++i) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t alpha = 0; alpha < n_states; ++alpha) {
        const double x = a.at(alpha, i);
        s1 += x;
        s2 += x * x;
      }
      const auto n = static_cast<double>(n_states);
      sum_low += (s1 * s1 - s2) / (n * (n - 1.0));
      sum_high += s2 / n;
    }
    low.add(sum_low / static_cast<double>(n_sites));
    high.add(sum_high / static_cast<double>(n_sites));
  }

  OverlapReport rep;
  rep.q_low = low.estimate();
  rep.q_high = high.estimate();
  rep.n_states = n_states;
  rep.n_sites = n_sites;
  rep.replicates = replicates;
  double pair_se = 0.0;
  for (const auto& a : arrays) {
    for (std::size_t alpha = 0; alpha < n_states; ++alpha) {
      for (std::size_t beta = alpha; beta < n_states; ++beta) {
        RunningStats r;
        for (std::size_t i = 0; i < n_sites; ++i) r.add(a.at(alpha, i) * a.at(beta, i));
        const double target = std::fabs(r.mean() - rep.q_low.value) <= std::fabs(r.mean() - rep.q_high.value)
                                  ? rep.q_low.value
                                  : rep.q_high.value;
        rep.two_value_violation = std::max(rep.two_value_violation, std::fabs(r.mean() - target));
        pair_se = std::max(pair_se, r.se());
      }
    }
  }
  rep.tolerance = 3.0 * pair_se + 1e-3;
  rep.flagged = rep.two_value_violation > rep.tolerance;
  return rep;
}

MomentFunction moment_m(const OrderParameter& op, int m) {
  if (m < 1) throw std::invalid_argument("moment_m: m must be >= 1");
  if (const auto* k = op.kernel()) {
    std::vector<double> coef(static_cast<std::size_t>(m) + 1);
    for (int j = 0; j <= m; ++j) coef[static_cast<std::size_t>(j)] = binomial(m, j) * kappa_moment(k->kappa, j);
    return [kernel = *k, coef, m](double w, double u, double v) {
      const double mu = kernel.mean(w, u, v);
      const double sd = kernel.spread(w, u, v);
      double total = 0.0;
      for (int j = 0; j <= m; ++j) {
        total += coef[static_cast<std::size_t>(j)] * std::pow(mu, m - j) * std::pow(sd, j);
      }
      return total;
    };
  }
  const auto& pop = std::get<Population>(op.repr);
  std::vector<double> per_entry(pop.s_out());
  for (std::size_t i = 0; i < pop.s_out(); ++i) {
    double s = 0.0;
    for (double x : pop.row(i)) s += std::pow(x, m);
    per_entry[i] = s / static_cast<double>(pop.s_in());
  }
  const std::size_t s_out = pop.s_out();
  return [per_entry = std::move(per_entry), s_out](double, double, double v) {
    return per_entry[std::min(static_cast<std::size_t>(v * static_cast<double>(s_out)), s_out - 1)];
  };
}

double integrate_wuv(const std::function<double(double, double, double)>& g, double tol) {
  return integrate_wv(
      [&](double w, double v) {
        double s = 0.0;
        for (double u : kUNodes) s += g(w, u, v);
        return s / static_cast<double>(kUNodes.size());
      },
      tol);
}

std::pair<double, double> overlaps_exact(const OrderParameter& op) {
  if (const auto* pop = op.population()) return {pop->q_star().value, pop->q_star_star().value};
  const auto f1 = moment_m(op, 1);
  const auto f2 = moment_m(op, 2);
  // Distinct states carry independent u, so the pair average factorizes over u.
  const double q_low = integrate_wv(
      [&](double w, double v) {
        double s = 0.0;
        for (double u : kUNodes) s += f1(w, u, v);
        s /= static_cast<double>(kUNodes.size());
        return s * s;
      },
      kQuadratureTolerance);
  const double q_high = integrate_wuv(f2, kQuadratureTolerance);
  return {q_low, q_high};
}

double u_dependence_residual(const OrderParameter& op, int m) {
  if (op.is_population()) return 0.0;
  const auto fm = moment_m(op, m);
  return integrate_wv(
      [&](double w, double v) {
        const double d = 0.5 * (fm(w, kUNodes[0], v) - fm(w, kUNodes[1], v));
        return d * d;
      },
      kQuadratureTolerance);
}

Estimate multi_overlap(const OrderParameter& op, const std::vector<int>& pattern, std::size_t n_sites,
                       const Stream& stream, std::size_t replicates) {
  if (pattern.empty()) throw std::invalid_argument("multi_overlap: empty pattern");
  if (replicates < 2) throw std::invalid_argument("multi_overlap: need at least two replicates");
  const std::set<int> labels(pattern.begin(), pattern.end());
  if (*labels.begin() < 0) throw std::invalid_argument("multi_overlap: negative label");
  const auto n_states = static_cast<std::size_t>(*labels.rbegin()) + 1;
  RunningStats reps;
  for (std::size_t r = 0; r < replicates; ++r) {
    const auto a = synthesize_array(op, n_states, n_sites, stream.child(Purpose::Replica, r));
    double total = 0.0;
    for (std::size_t i = 0; i < n_sites; ++i) {
      double prod = 1.0;
      for (int l : pattern) prod *= a.at(static_cast<std::size_t>(l), i);
      total += prod;
    }
    reps.add(total / static_cast<double>(n_sites));
  }
  return reps.estimate();
}

Estimate symmetry_statistic(const OrderParameter& op, int m_max) {
  if (m_max < 3 || m_max % 2 == 0) throw std::invalid_argument("symmetry_statistic: m_max must be odd and >= 3");
  Estimate best{0.0, 0.0};
  if (op.kernel() != nullptr) {
    for (int m = 1; m <= m_max; m += 2) {
      const auto fm = moment_m(op, m);
      const double l1 = integrate_wuv([&](double w, double u, double v) { return std::fabs(fm(w, u, v)); },
                                      kQuadratureTolerance);
      best.value = std::max(best.value, l1);
    }
    best.se = kQuadratureTolerance;
    return best;
  }
  const auto& pop = std::get<Population>(op.repr);
  const auto n_in = static_cast<double>(pop.s_in());
  for (int m = 1; m <= m_max; m += 2) {
    RunningStats site;
    double inner_var = 0.0;
    for (std::size_t i = 0; i < pop.s_out(); ++i) {
      RunningStats in;
      for (double x : pop.row(i)) in.add(std::pow(x, m));
      site.add(std::fabs(in.mean()));
      inner_var += in.variance() / n_in;
    }
    inner_var /= static_cast<double>(pop.s_out());
    if (site.mean() >= best.value) {
      best.value = site.mean();
      best.se = std::sqrt(site.se() * site.se() + inner_var);
    }
  }
  return best;
}

// ---------------------------------------------------------------- I/O

using nlohmann::json;

namespace {

std::string kappa_name(Kappa k) {
  switch (k) {
    case Kappa::Sign:
      return "sign";
    case Kappa::Linear:
      return "linear";
    case Kappa::Skewed:
      return "skewed";
  }
  return "sign";
}

Kappa kappa_from_name(const std::string& s) {
  if (s == "sign") return Kappa::Sign;
  if (s == "linear") return Kappa::Linear;
  if (s == "skewed") return Kappa::Skewed;
  throw std::invalid_argument("kernel: unknown kappa '" + s + "'");
}

}  // namespace

json kernel_to_json(const KernelSpec& k, double zeta) {
  return json{{"schema_version", 1}, {"kind", "kernel"}, {"name", k.name}, {"kappa", kappa_name(k.kappa)},
              {"zeta", zeta},      {"a0", k.a0},         {"av", k.av},     {"au", k.au},
              {"aw", k.aw},        {"b0", k.b0},         {"bv", k.bv},     {"bu", k.bu},
              {"bw", k.bw}};
}

OrderParameter kernel_from_json(const json& doc) {
  static const std::set<std::string> known{"schema_version", "kind", "name", "kappa", "zeta", "a0", "av",
                                           "au",             "aw",   "b0",   "bv",    "bu",   "bw"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw std::invalid_argument("kernel: unknown key '" + key + "'");
  }
  if (doc.value("schema_version", 0) != 1) throw std::invalid_argument("kernel: unsupported schema_version");
  if (doc.value("kind", std::string("kernel")) != "kernel") throw std::invalid_argument("kernel: kind must be 'kernel'");
  KernelSpec k;
  k.name = doc.value("name", std::string("kernel"));
  k.kappa = kappa_from_name(doc.value("kappa", std::string("sign")));
  k.a0 = doc.value("a0", 0.0);
  k.av = doc.value("av", 0.0);
  k.au = doc.value("au", 0.0);
  k.aw = doc.value("aw", 0.0);
  k.b0 = doc.value("b0", 0.0);
  k.bv = doc.value("bv", 0.0);
  k.bu = doc.value("bu", 0.0);
  k.bw = doc.value("bw", 0.0);
  OrderParameter op{k, doc.value("zeta", 0.5)};
  op.validate();
  return op;
}

std::string population_to_csv(const Population& pop) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < pop.s_out(); ++i) {
    const auto r = pop.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j > 0) os << ',';
      os << r[j];
    }
    os << '\n';
  }
  return os.str();
}

Population population_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw std::invalid_argument("population csv: ragged rows");
    ++rows;
  }
  Population pop(rows, cols, std::move(values));
  pop.validate();
  return pop;
}

json population_sidecar(const Population& pop, double zeta, std::uint64_t seed) {
  return json{{"schema_version", 1}, {"kind", "population"}, {"zeta", zeta},
              {"seed", seed},        {"s_out", pop.s_out()}, {"s_in", pop.s_in()}};
}

}  // namespace dpspin
