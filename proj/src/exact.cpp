#include "dpspin/exact.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace dpspin {

namespace {

constexpr int kMaxChunkBits = 6;
constexpr int kReductionChunks = 64;
constexpr int kHardMaxSpins = 30;

struct Monomial {
  double coef;
  std::uint32_t mask;
};

inline double chi(std::uint32_t x) noexcept { return (std::popcount(x) & 1U) ? -1.0 : 1.0; }

std::uint32_t mask_of(const std::vector<int>& sites) {
  std::uint32_t m = 0;
  for (int s : sites) m ^= (1U << s);
  return m;
}

/// H(x) = constant + sum_m coef chi(x & mask) + sum_c log ch(h + sum coef chi(x & mask)).
struct CompiledHamiltonian {
  int n = 0;
  double constant = 0.0;
  double h = 0.0;
  std::vector<Monomial> monomials;
  std::vector<std::vector<Monomial>> clusters;
  std::vector<std::vector<std::uint32_t>> monomials_by_site;
  std::vector<std::vector<std::uint32_t>> clusters_by_site;

  explicit CompiledHamiltonian(const HamiltonianInstance& inst) : n(inst.n), h(inst.params.h) {
    const double beta = inst.params.beta;
    for (const auto& clause : inst.clauses) {
      const std::uint32_t m = mask_of(clause.sites);
      if (m == 0) {
        constant += beta * clause.g;
      } else {
        monomials.push_back({beta * clause.g, m});
      }
    }
    if (h != 0.0) {
      for (int i = 0; i < n; ++i) monomials.push_back({h, 1U << i});
    }
    if (!inst.pert1.empty()) {
      std::map<std::uint32_t, double> merged;
      const double sn = inst.pert.s_N(n);
      for (std::size_t li = 0; li < inst.pert1.size(); ++li) {
        const int l = static_cast<int>(li) + 1;
        const double scale = sn * std::ldexp(inst.pert.x_weights[li], -l) /
                             std::pow(static_cast<double>(n), 0.5 * l);
        std::vector<int> idx(static_cast<std::size_t>(l), 0);
        for (double coeff : inst.pert1[li]) {
          merged[mask_of(idx)] += scale * coeff;
          for (int j = l - 1; j >= 0; --j) {
            if (++idx[static_cast<std::size_t>(j)] < n) break;
            idx[static_cast<std::size_t>(j)] = 0;
          }
        }
      }
      for (const auto& [m, coef] : merged) {
        if (m == 0) {
          constant += coef;
        } else {
          monomials.push_back({coef, m});
        }
      }
    }
    for (const auto& cluster : inst.pert2) {
      std::vector<Monomial> terms;
      for (const auto& clause : cluster.clauses) terms.push_back({beta * clause.g, mask_of(clause.sites)});
      clusters.push_back(std::move(terms));
    }

    monomials_by_site.resize(static_cast<std::size_t>(n));
    clusters_by_site.resize(static_cast<std::size_t>(n));
    for (std::uint32_t k = 0; k < monomials.size(); ++k) {
      for (int i = 0; i < n; ++i) {
        if (monomials[k].mask >> i & 1U) monomials_by_site[static_cast<std::size_t>(i)].push_back(k);
      }
    }
    for (std::uint32_t c = 0; c < clusters.size(); ++c) {
      std::uint32_t touched = 0;
      for (const auto& t : clusters[c]) touched |= t.mask;
      for (int i = 0; i < n; ++i) {
        if (touched >> i & 1U) clusters_by_site[static_cast<std::size_t>(i)].push_back(c);
      }
    }
  }

  [[nodiscard]] double cluster_field(std::size_t c, std::uint32_t x) const noexcept {
    double f = h;
    for (const auto& t : clusters[c]) f += t.coef * chi(x & t.mask);
    return f;
  }
};

void check_size(int n, int n_max) {
  if (n < 1) throw std::invalid_argument("exact enumeration: N must be >= 1");
  if (n_max > kHardMaxSpins) throw std::length_error("exact enumeration: n_max above 30");
  if (n > n_max) {
    throw std::length_error("exact enumeration: N = " + std::to_string(n) +
                            " exceeds N_max = " + std::to_string(n_max));
  }
}

/// [begin, end) of reduction chunk c out of kReductionChunks over `size` items.
std::pair<std::size_t, std::size_t> chunk_range(std::size_t size, int c) {
  const auto b = size * static_cast<std::size_t>(c) / kReductionChunks;
  const auto e = size * static_cast<std::size_t>(c + 1) / kReductionChunks;
  return {b, e};
}

}  // namespace

std::vector<double> enumerate_energies(const HamiltonianInstance& inst, int n_max) {
  check_size(inst.n, n_max);
  const CompiledHamiltonian ham(inst);
  const int n = inst.n;
  const int chunk_bits = std::min(n, kMaxChunkBits);
  const int walk_bits = n - chunk_bits;
  const std::int64_t chunks = std::int64_t{1} << chunk_bits;
  const std::uint32_t steps = 1U << walk_bits;
  std::vector<double> energies(std::size_t{1} << n);

#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < chunks; ++c) {
    std::uint32_t x = static_cast<std::uint32_t>(c) << walk_bits;
    std::vector<double> fields(ham.clusters.size());
    double e = ham.constant;
    for (const auto& m : ham.monomials) e += m.coef * chi(x & m.mask);
    for (std::size_t k = 0; k < fields.size(); ++k) {
      fields[k] = ham.cluster_field(k, x);
      e += log_cosh(fields[k]);
    }
    energies[x] = e;
    for (std::uint32_t j = 1; j < steps; ++j) {
      const int bit = std::countr_zero(j);
      const std::uint32_t old = x;
      x ^= 1U << bit;
      for (std::uint32_t k : ham.monomials_by_site[static_cast<std::size_t>(bit)]) {
        const auto& m = ham.monomials[k];
        e -= 2.0 * m.coef * chi(old & m.mask);
      }
      for (std::uint32_t k : ham.clusters_by_site[static_cast<std::size_t>(bit)]) {
        const double f = ham.cluster_field(k, x);
        e += log_cosh(f) - log_cosh(fields[k]);
        fields[k] = f;
      }
      energies[x] = e;
    }
  }
  return energies;
}

double log_sum_exp_chunked(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  std::vector<double> partial(kReductionChunks, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < kReductionChunks; ++c) {
    const auto [b, e] = chunk_range(values.size(), c);
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += std::exp(values[i] - hi);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return hi + std::log(total);
}

void walsh_hadamard(std::span<double> data) {
  const std::size_t size = data.size();
  if (size == 0 || !std::has_single_bit(size)) {
    throw std::invalid_argument("walsh_hadamard: size must be a power of two");
  }
  const auto half = static_cast<std::int64_t>(size / 2);
  for (std::size_t len = 1; len < size; len <<= 1) {
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < half; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const std::size_t i = (uk / len) * 2 * len + (uk % len);
      const double a = data[i];
      const double b = data[i + len];
      data[i] = a + b;
      data[i + len] = a - b;
    }
  }
}

GibbsEnumeration::GibbsEnumeration(const HamiltonianInstance& inst, int n_max)
    : n_(inst.n), energies_(enumerate_energies(inst, n_max)) {
  log_z_ = log_sum_exp_chunked(energies_);
  probs_.resize(energies_.size());
  const auto size = static_cast<std::int64_t>(energies_.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t x = 0; x < size; ++x) {
    probs_[static_cast<std::size_t>(x)] = std::exp(energies_[static_cast<std::size_t>(x)] - log_z_);
  }
  corr_ = probs_;
  walsh_hadamard(corr_);
}

std::vector<double> GibbsEnumeration::overlap_distribution() const {
  std::vector<double> auto_corr(corr_.size());
  for (std::size_t s = 0; s < corr_.size(); ++s) auto_corr[s] = corr_[s] * corr_[s];
  walsh_hadamard(auto_corr);
  const double scale = 1.0 / static_cast<double>(corr_.size());
  std::vector<double> by_distance(static_cast<std::size_t>(n_) + 1, 0.0);
  for (std::size_t z = 0; z < auto_corr.size(); ++z) {
    by_distance[static_cast<std::size_t>(std::popcount(static_cast<std::uint32_t>(z)))] +=
        std::max(0.0, auto_corr[z] * scale);
  }
  return by_distance;
}

double log_partition(const HamiltonianInstance& inst, int n_max) {
  return log_sum_exp_chunked(enumerate_energies(inst, n_max));
}

FreeEnergyResult quenched_free_energy(const ModelParams& params, int n, int reps,
                                      const PerturbationConfig& pert, const Stream& stream,
                                      const ExactOptions& opts) {
  if (reps < 2) throw std::invalid_argument("quenched_free_energy: reps must be >= 2");
  check_size(n, opts.n_max);
  FreeEnergyResult out;
  out.n = n;
  out.per_replicate.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto inst = sample_instance(params, n, pert, stream.child(Purpose::Disorder, static_cast<std::uint64_t>(r)),
                                      opts.forced_clause_count);
    out.per_replicate.push_back(log_partition(inst, opts.n_max) / n);
  }
  out.estimate = summarize(out.per_replicate);
  return out;
}

double gibbs_moment(const GibbsEnumeration& gibbs, const std::vector<std::vector<int>>& replica_sets) {
  double prod = 1.0;
  for (const auto& set : replica_sets) {
    for (int s : set) {
      if (s < 0 || s >= gibbs.n_spins()) throw std::out_of_range("gibbs_moment: site index out of range");
    }
    prod *= gibbs.correlation(mask_of(set));
  }
  return prod;
}

double overlap_monomial_moment(const GibbsEnumeration& gibbs,
                               const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) return 1.0;
  int replicas = 0;
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b < 0) throw std::out_of_range("overlap_monomial_moment: negative replica label");
    replicas = std::max({replicas, a + 1, b + 1});
  }
  const int n = gibbs.n_spins();
  const auto corr = gibbs.correlations();
  const std::size_t d = pairs.size();
  std::vector<int> idx(d, 0);
  std::vector<std::uint32_t> masks(static_cast<std::size_t>(replicas));
  double total = 0.0;
  while (true) {
    std::fill(masks.begin(), masks.end(), 0U);
    for (std::size_t j = 0; j < d; ++j) {
      const std::uint32_t bit = 1U << idx[j];
      masks[static_cast<std::size_t>(pairs[j].first)] ^= bit;
      masks[static_cast<std::size_t>(pairs[j].second)] ^= bit;
    }
    double term = 1.0;
    for (std::uint32_t m : masks) term *= corr[m];
    total += term;
    std::size_t j = d;
    while (j > 0) {
      --j;
      if (++idx[j] < n) break;
      idx[j] = 0;
      if (j == 0) return total / std::pow(static_cast<double>(n), static_cast<double>(d));
    }
  }
}

OverlapStats overlap_statistics(const ModelParams& params, int n, int reps,
                                const PerturbationConfig& pert, const Stream& stream,
                                const ExactOptions& opts, double bin_width) {
  if (reps < 2) throw std::invalid_argument("overlap_statistics: reps must be >= 2");
  if (!(bin_width > 0.0 && bin_width <= 2.0)) {
    throw std::invalid_argument("overlap_statistics: bin width must lie in (0, 2]");
  }
  check_size(n, opts.n_max);
  const auto bins = static_cast<std::size_t>(std::ceil(2.0 / bin_width - 1e-9));
  OverlapStats out;
  out.n = n;
  out.reps = reps;
  out.bin_width = bin_width;
  out.histogram.assign(bins, 0.0);
  std::vector<RunningStats> moments(4);
  for (int r = 0; r < reps; ++r) {
    const auto inst = sample_instance(params, n, pert, stream.child(Purpose::Disorder, static_cast<std::uint64_t>(r)),
                                      opts.forced_clause_count);
    const GibbsEnumeration gibbs(inst, opts.n_max);
    const auto dist = gibbs.overlap_distribution();
    std::array<double, 4> m{};
    for (std::size_t k = 0; k < dist.size(); ++k) {
      const double overlap = 1.0 - 2.0 * static_cast<double>(k) / n;
      double power = 1.0;
      for (double& mk : m) {
        power *= overlap;
        mk += dist[k] * power;
      }
      auto bin = static_cast<std::size_t>(std::floor((overlap + 1.0) / bin_width + 1e-9));
      bin = std::min(bin, bins - 1);
      out.histogram[bin] += dist[k] / reps;
    }
    for (std::size_t k = 0; k < 4; ++k) moments[k].add(m[k]);
  }
  for (const auto& s : moments) out.moments.push_back(s.estimate());
  return out;
}

GGResult gg_residual(const ModelParams& params, int n_spins, int reps, int n_replicas, int power,
                     const PerturbationConfig& pert, const Stream& stream,
                     const ExactOptions& opts) {
  if (!pert.enabled1) throw std::invalid_argument("gg_residual: perturbation of the first kind must be enabled");
  if (reps < 2) throw std::invalid_argument("gg_residual: reps must be >= 2");
  if (n_replicas < 1) throw std::invalid_argument("gg_residual: n_replicas must be >= 1");
  if (power < 0) throw std::invalid_argument("gg_residual: power must be >= 0");
  if (power > 0 && n_replicas < 2) {
    throw std::invalid_argument("gg_residual: f = R_12^power needs at least two replicas");
  }
  check_size(n_spins, opts.n_max);

  const std::vector<std::pair<int, int>> f(static_cast<std::size_t>(power), {0, 1});
  auto with = [&](int a, int b) {
    auto pairs = f;
    pairs.emplace_back(a, b);
    return pairs;
  };
  const double inv_n = 1.0 / n_replicas;

  std::vector<double> lhs, r12, fv, cross;
  for (int r = 0; r < reps; ++r) {
    const auto inst = sample_instance(params, n_spins, pert,
                                      stream.child(Purpose::Disorder, static_cast<std::uint64_t>(r)),
                                      opts.forced_clause_count);
    const GibbsEnumeration gibbs(inst, opts.n_max);
    lhs.push_back(overlap_monomial_moment(gibbs, with(0, n_replicas)));
    r12.push_back(overlap_monomial_moment(gibbs, {{0, 1}}));
    fv.push_back(overlap_monomial_moment(gibbs, f));
    double c = 0.0;
    for (int l = 1; l < n_replicas; ++l) c += overlap_monomial_moment(gibbs, with(0, l));
    cross.push_back(c);
  }

  GGResult out;
  out.lhs = summarize(lhs).value;
  out.mean_r12 = summarize(r12).value;
  out.mean_f = summarize(fv).value;
  out.cross_sum = summarize(cross).value;
  const double d = out.lhs - inv_n * out.mean_r12 * out.mean_f - inv_n * out.cross_sum;

  RunningStats influence;
  for (std::size_t r = 0; r < lhs.size(); ++r) {
    influence.add(lhs[r] - inv_n * (r12[r] * out.mean_f + out.mean_r12 * fv[r]) - inv_n * cross[r]);
  }
  out.residual = {std::fabs(d), influence.se()};
  return out;
}

// ---------------------------------------------------------------- cavity

void MomentQuery::validate() const {
  if (q < 1) throw std::invalid_argument("MomentQuery: q must be >= 1");
  if (n < 1 || n > 3) throw std::invalid_argument("MomentQuery: n must lie in 1..3");
  if (m < n) throw std::invalid_argument("MomentQuery: requires n <= m");
  if (static_cast<int>(sets.size()) != q) throw std::invalid_argument("MomentQuery: need one set per replica");
  for (const auto& set : sets) {
    std::vector<int> sorted = set;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("MomentQuery: repeated coordinate in a set");
    }
    for (int c : set) {
      if (c < 0 || c >= m) throw std::out_of_range("MomentQuery: coordinate outside [0, m)");
    }
  }
}

std::vector<int> MomentQuery::cavity_part(int l) const {
  std::vector<int> out;
  for (int c : sets.at(static_cast<std::size_t>(l))) {
    if (c < n) out.push_back(c);
  }
  return out;
}

std::vector<int> MomentQuery::noncavity_part(int l) const {
  std::vector<int> out;
  for (int c : sets.at(static_cast<std::size_t>(l))) {
    if (c >= n) out.push_back(c);
  }
  return out;
}

double CavityMomentAccumulator::product_of_ratios() const {
  double prod = 1.0;
  for (std::size_t l = 0; l < U.size(); ++l) prod *= ratio(l);
  return prod;
}

CavityMomentAccumulator cavity_moments(const GibbsEnumeration& gibbs,
                                       std::span<const CavityClauses> cavity,
                                       const MomentQuery& query, const ModelParams& params) {
  query.validate();
  const int n_cav = query.n;
  if (static_cast<int>(cavity.size()) != n_cav) {
    throw std::invalid_argument("cavity_moments: need one clause list per cavity coordinate");
  }
  if (query.m - n_cav > gibbs.n_spins()) {
    throw std::out_of_range("cavity_moments: more non-cavity coordinates than spins");
  }
  const double beta = params.beta;
  double shift = 0.0;
  std::vector<std::vector<Monomial>> fields(static_cast<std::size_t>(n_cav));
  for (int i = 0; i < n_cav; ++i) {
    shift += std::fabs(params.h);
    for (const auto& clause : cavity[static_cast<std::size_t>(i)]) {
      for (int s : clause.sites) {
        if (s < 0 || s >= gibbs.n_spins()) throw std::out_of_range("cavity_moments: clause site out of range");
      }
      fields[static_cast<std::size_t>(i)].push_back({beta * clause.g, mask_of(clause.sites)});
      shift += std::fabs(beta * clause.g);
    }
  }
  const auto q = static_cast<std::size_t>(query.q);
  std::vector<std::uint32_t> cav_masks(q), spin_masks(q);
  for (std::size_t l = 0; l < q; ++l) {
    for (int c : query.cavity_part(static_cast<int>(l))) cav_masks[l] |= 1U << c;
    std::vector<int> sites;
    for (int c : query.noncavity_part(static_cast<int>(l))) sites.push_back(c - n_cav);
    spin_masks[l] = mask_of(sites);
  }

  const auto probs = gibbs.probabilities();
  std::vector<std::vector<double>> partial(kReductionChunks, std::vector<double>(q + 1, 0.0));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < kReductionChunks; ++c) {
    const auto [b, e] = chunk_range(probs.size(), c);
    auto& acc = partial[static_cast<std::size_t>(c)];
    std::vector<double> th(static_cast<std::size_t>(n_cav));
    for (std::size_t x = b; x < e; ++x) {
      const auto ux = static_cast<std::uint32_t>(x);
      double log_w = -shift;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        double f = params.h;
        for (const auto& t : fields[i]) f += t.coef * chi(ux & t.mask);
        log_w += log_cosh(f);
        th[i] = std::tanh(f);
      }
      const double w = probs[x] * std::exp(log_w);
      acc[q] += w;
      for (std::size_t l = 0; l < q; ++l) {
        double v = w * chi(ux & spin_masks[l]);
        for (int i = 0; i < n_cav; ++i) {
          if (cav_masks[l] >> i & 1U) v *= th[static_cast<std::size_t>(i)];
        }
        acc[l] += v;
      }
    }
  }
  CavityMomentAccumulator out;
  out.U.assign(q, 0.0);
  for (const auto& acc : partial) {
    for (std::size_t l = 0; l < q; ++l) out.U[l] += acc[l];
    out.V += acc[q];
  }
  return out;
}

CavityResidualResult cavity_residual_finite_N(const ModelParams& params, int n_spins, int reps,
                                              const MomentQuery& query, const Stream& stream,
                                              const ExactOptions& opts) {
  query.validate();
  if (reps < 2) throw std::invalid_argument("cavity_residual_finite_N: reps must be >= 2");
  const int n_cav = query.n;
  check_size(n_spins + n_cav, opts.n_max);
  if (query.m - n_cav > n_spins) {
    throw std::out_of_range("cavity_residual_finite_N: more non-cavity coordinates than spins");
  }
  const PerturbationConfig no_pert;
  const auto un = static_cast<std::uint64_t>(n_spins);

  auto big_site = [&](int c) { return c < n_cav ? n_spins + c : c - n_cav; };

  std::vector<double> lhs, rhs;
  RunningStats diff;
  CavityResidualResult out;
  out.n = n_spins;
  for (int r = 0; r < reps; ++r) {
    const Stream rs = stream.child(Purpose::Cavity, static_cast<std::uint64_t>(r));
    const auto big = sample_instance(params, n_spins + n_cav, no_pert, rs.child(Purpose::Disorder, 0),
                                     opts.forced_clause_count);
    HamiltonianInstance small = big;
    small.n = n_spins;
    small.clauses.clear();
    for (const auto& clause : big.clauses) {
      if (std::all_of(clause.sites.begin(), clause.sites.end(), [&](int s) { return s < n_spins; })) {
        small.clauses.push_back(clause);
      }
    }
    std::vector<CavityClauses> cavity(static_cast<std::size_t>(n_cav));
    for (int i = 0; i < n_cav; ++i) {
      Stream cs = rs.child(Purpose::Environment, static_cast<std::uint64_t>(i));
      const std::uint64_t k = opts.forced_clause_count
                                  ? static_cast<std::uint64_t>(*opts.forced_clause_count)
                                  : cs.poisson(params.lambda * params.p);
      for (std::uint64_t j = 0; j < k; ++j) {
        const double g = cs.normal();
        std::vector<int> sites(static_cast<std::size_t>(params.p - 1));
        for (auto& s : sites) s = static_cast<int>(cs.below(un));
        cavity[static_cast<std::size_t>(i)].push_back(Clause{g, std::tanh(params.beta * g), std::move(sites)});
      }
    }

    const GibbsEnumeration big_gibbs(big, opts.n_max);
    std::vector<std::vector<int>> mapped;
    for (const auto& set : query.sets) {
      std::vector<int> sites;
      for (int c : set) sites.push_back(big_site(c));
      mapped.push_back(std::move(sites));
    }
    const double left = gibbs_moment(big_gibbs, mapped);

    const GibbsEnumeration small_gibbs(small, opts.n_max);
    const double right = cavity_moments(small_gibbs, cavity, query, params).product_of_ratios();

    lhs.push_back(left);
    rhs.push_back(right);
    out.differences.push_back(left - right);
    diff.add(left - right);
  }
  out.lhs = summarize(lhs);
  out.rhs = summarize(rhs);
  out.residual = {std::fabs(diff.mean()), diff.se()};
  return out;
}

}  // namespace dpspin
