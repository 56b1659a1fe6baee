#include "dpspin/pd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "parallel.hpp"

namespace dpspin {

namespace {

constexpr std::size_t kMaxAtoms = std::size_t{1} << 24;

void check_zeta(double zeta) {
  if (!(zeta > 0.0 && zeta < 1.0)) throw std::invalid_argument("PD: zeta must lie in (0, 1)");
}

void check_atoms(std::size_t K) {
  if (K < 10) throw std::invalid_argument("PD: K must be >= 10");
}

}  // namespace

double PDWeights::power_sum(int k) const {
  double s = 0.0;
  for (double v : V) s += std::pow(v, k);
  return s;
}

PDWeights pd_sample(double zeta, std::size_t K, const Stream& stream, double tail_tolerance) {
  check_zeta(zeta);
  check_atoms(K);
  if (!(tail_tolerance > 0.0)) throw std::invalid_argument("pd_sample: tail tolerance must be positive");
  Stream s = stream;
  std::vector<double> log_x;
  double eta = 0.0;
  std::size_t target = K;
  double scale = 0.0;     // total mass in units of x_1
  double tail = 0.0;      // expected omitted mass in units of x_1
  double tail_sd = 0.0;
  for (;;) {
    while (log_x.size() < target) {
      eta += s.exponential();
      log_x.push_back(-std::log(eta) / zeta);
    }
    const double top = log_x.front();
    double sum = 0.0;
    for (double lx : log_x) sum += std::exp(lx - top);
    const double log_eta = std::log(eta);
    // Omitted points beyond eta_K: mean and sd of sum eta^{-1/zeta} over a unit-rate tail.
    tail = zeta / (1.0 - zeta) * std::exp((1.0 - 1.0 / zeta) * log_eta - top);
    tail_sd = std::sqrt(1.0 / (2.0 / zeta - 1.0)) * std::exp(0.5 * (1.0 - 2.0 / zeta) * log_eta - top);
    scale = sum + tail;
    if (tail_sd / scale < tail_tolerance) break;
    if (target >= kMaxAtoms) throw std::runtime_error("pd_sample: truncation error above tolerance at maximum K");
    target *= 2;
  }
  PDWeights out;
  out.zeta = zeta;
  out.V.reserve(log_x.size());
  out.x.reserve(log_x.size());
  const double top = log_x.front();
  for (double lx : log_x) {
    out.V.push_back(std::exp(lx - top) / scale);
    out.x.push_back(std::exp(lx));
  }
  out.tail_mass = tail / scale;
  out.tail_error = tail_sd / scale;
  return out;
}

PDWeights pd_sample_stickbreaking(double zeta, std::size_t K, const Stream& stream) {
  check_zeta(zeta);
  check_atoms(K);
  Stream s = stream;
  PDWeights out;
  out.zeta = zeta;
  out.V.reserve(K);
  double rest = 1.0;
  for (std::size_t j = 1; j <= K; ++j) {
    const double b = s.beta(1.0 - zeta, zeta * static_cast<double>(j));
    out.V.push_back(b * rest);
    rest *= 1.0 - b;
  }
  std::sort(out.V.begin(), out.V.end(), std::greater<>());
  out.tail_mass = rest;
  out.tail_error = rest;
  return out;
}

TiltRecord tilt_reorder(const PDWeights& weights, std::span<const double> logtilts) {
  if (logtilts.size() != weights.V.size()) {
    throw std::invalid_argument("tilt_reorder: need one log-tilt per atom");
  }
  double top = -std::numeric_limits<double>::infinity();
  for (double a : logtilts) {
    if (!std::isfinite(a)) throw std::invalid_argument("tilt_reorder: non-finite log-tilt");
    top = std::max(top, a);
  }
  const std::size_t K = weights.V.size();
  std::vector<double> tilted(K);
  double mean_factor = 0.0;
  double total = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    const double factor = std::exp(logtilts[a] - top);
    mean_factor += factor;
    tilted[a] = weights.V[a] * factor;
    total += tilted[a];
  }
  mean_factor /= static_cast<double>(K);
  const double tail = weights.tail_mass * mean_factor;
  total += tail;

  TiltRecord out;
  out.logtilts.assign(logtilts.begin(), logtilts.end());
  out.rho.resize(K);
  std::iota(out.rho.begin(), out.rho.end(), std::size_t{0});
  std::stable_sort(out.rho.begin(), out.rho.end(),
                   [&](std::size_t a, std::size_t b) { return tilted[a] > tilted[b]; });
  out.V.reserve(K);
  for (std::size_t k : out.rho) out.V.push_back(tilted[k] / total);
  out.tail_mass = tail / total;
  return out;
}

PDStudy pd_study(double zeta, std::size_t K, std::size_t M, PDConstruction construction,
                 const Stream& stream) {
  check_zeta(zeta);
  check_atoms(K);
  if (M < 2) throw std::invalid_argument("pd_study: need at least two draws");
  PDStudy out;
  out.zeta = zeta;
  out.construction = construction;
  out.draws.resize(M);
  detail::parallel_for(M, [&](std::size_t i) {
    const Stream s = stream.child(Purpose::PoissonDirichlet, i);
    const PDWeights w = construction == PDConstruction::Poisson ? pd_sample(zeta, K, s)
                                                                : pd_sample_stickbreaking(zeta, K, s);
    auto& d = out.draws[i];
    d.index = i;
    d.K = w.size();
    for (double v : w.V) {
      d.sum_v2 += v * v;
      d.sum_v3 += v * v * v;
    }
    d.tail_mass = w.tail_mass;
    d.top.assign(w.V.begin(), w.V.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(5, w.size())));
  }, 16);
  RunningStats v2, v3, v2sq, v2cu;
  for (const auto& d : out.draws) {
    v2.add(d.sum_v2);
    v3.add(d.sum_v3);
    v2sq.add(d.sum_v2 * d.sum_v2);
    v2cu.add(d.sum_v2 * d.sum_v2 * d.sum_v2);
  }
  out.sum_v2 = v2.estimate();
  out.sum_v3 = v3.estimate();
  out.sum_v2_squared = v2sq.estimate();
  out.sum_v2_cubed = v2cu.estimate();
  return out;
}

TiltStudy tilt_study(double zeta, std::size_t K, std::size_t M, double tilt_sd, const Stream& stream) {
  check_zeta(zeta);
  if (M < 2) throw std::invalid_argument("tilt_study: need at least two draws");
  if (!(tilt_sd >= 0.0) || !std::isfinite(tilt_sd)) throw std::invalid_argument("tilt_study: bad tilt sd");
  std::vector<double> v2(M), top(M), top_tilt(M);
  detail::parallel_for(M, [&](std::size_t i) {
    const auto ui = static_cast<std::uint64_t>(i);
    const PDWeights w = pd_sample(zeta, K, stream.child(Purpose::PoissonDirichlet, ui));
    Stream ts = stream.child(Purpose::Tilt, ui);
    std::vector<double> tilts(w.size());
    for (double& a : tilts) a = tilt_sd * ts.normal();
    const TiltRecord rec = tilt_reorder(w, tilts);
    double s = 0.0;
    for (double v : rec.V) s += v * v;
    v2[i] = s;
    top[i] = rec.V.front();
    top_tilt[i] = tilts[rec.rho.front()];
  }, 16);
  TiltStudy out;
  out.zeta = zeta;
  out.tilt_sd = tilt_sd;
  out.sum_v2 = summarize(v2);
  const Estimate a = summarize(top);
  out.top_tilt_mean = summarize(top_tilt);
  RunningStats cov;
  for (std::size_t i = 0; i < M; ++i) cov.add((top[i] - a.value) * (top_tilt[i] - out.top_tilt_mean.value));
  out.top_covariance = {cov.mean() * static_cast<double>(M) / static_cast<double>(M - 1), cov.se()};
  return out;
}

std::string pd_study_csv(const PDStudy& study) {
  std::ostringstream os;
  os.precision(17);
  os << "draw,K,sum_v2,sum_v3,tail_mass,v1,v2,v3,v4,v5\n";
  for (const auto& d : study.draws) {
    os << d.index << ',' << d.K << ',' << d.sum_v2 << ',' << d.sum_v3 << ',' << d.tail_mass;
    for (std::size_t k = 0; k < 5; ++k) {
      os << ',';
      if (k < d.top.size()) os << d.top[k];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace dpspin
