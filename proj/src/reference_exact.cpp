#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpspin/reference.hpp"

namespace dpspin::reference {

namespace {

std::vector<double> naive_energies(const HamiltonianInstance& inst, int n_max) {
  if (inst.n < 1 || inst.n > n_max || n_max > 30) {
    throw std::length_error("naive enumeration: N outside supported range");
  }
  const std::size_t states = std::size_t{1} << inst.n;
  std::vector<double> energies(states);
  std::vector<Spin> sigma(static_cast<std::size_t>(inst.n));
  for (std::size_t x = 0; x < states; ++x) {
    for (int i = 0; i < inst.n; ++i) sigma[static_cast<std::size_t>(i)] = (x >> i & 1U) ? Spin{-1} : Spin{1};
    energies[x] = energy(inst, sigma);
  }
  return energies;
}

double naive_lse(const std::vector<double>& values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  double total = 0.0;
  for (double v : values) total += std::exp(v - hi);
  return hi + std::log(total);
}

}  // namespace

double log_partition_naive(const HamiltonianInstance& inst, int n_max) {
  return naive_lse(naive_energies(inst, n_max));
}

std::vector<double> probabilities_naive(const HamiltonianInstance& inst, int n_max) {
  auto energies = naive_energies(inst, n_max);
  const double log_z = naive_lse(energies);
  for (double& e : energies) e = std::exp(e - log_z);
  return energies;
}

}  // namespace dpspin::reference
