#pragma once

// Serial reference implementations of the parallel kernels, for tests and
// benchmarks. The enumeration references share no code with the Gray-code
// kernel; the serial population step shares only the per-entry update.

#include <vector>

#include "dpspin/model.hpp"

namespace dpspin::reference {

/// Direct double loop: every state, every clause, two-pass log-sum-exp.
double log_partition_naive(const HamiltonianInstance& inst, int n_max = 20);

/// Gibbs probability of every state by direct evaluation.
std::vector<double> probabilities_naive(const HamiltonianInstance& inst, int n_max = 20);

}  // namespace dpspin::reference
