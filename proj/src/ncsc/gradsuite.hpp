#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncsc {

struct GradCheckResult {
  std::string name;  // op kind name, or "network"
  std::size_t instances = 0;
  double max_error = 0.0;
};

// Finite-difference check of every differentiable op on `instances` seeded
// random inputs. Kinked ops (relu, abs) draw inputs at least 10 * eps away
// from the kink.
std::vector<GradCheckResult> run_op_gradient_suite(std::uint64_t seed, std::size_t instances, double eps = 1e-5);

// Checks the gradient of subspace loss plus classifier-side collaborative terms
// on a small dense network, for every network parameter and C.
GradCheckResult run_network_gradient_check(std::uint64_t seed, double eps = 1e-5);

}  // namespace ncsc
