#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fpsr/rng.hpp"
#include "fpsr/tensor.hpp"

namespace fpsr::testkit {

/// One randomly drawn problem: the leaves to differentiate with respect to
/// and a closure that recomputes the output from their current values.
struct GradInstance {
  std::vector<Tensor<double>> inputs;
  std::function<Tensor<double>()> forward;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(Rng&)> draw;
};

struct GradCheckOptions {
  int instances = 20;
  /// Coordinates probed per tensor per instance; larger tensors are sampled.
  int max_coords = 48;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error. Entries whose gradient is
  /// below it are therefore held to tolerance * floor in absolute terms.
  double scale_floor = 1e-3;
};

struct GradCheckResult {
  std::string name;
  int instances = 0;
  std::int64_t coords = 0;
  /// Probes settled by a one-sided difference after the central one straddled a kink.
  std::int64_t kink_refinements = 0;
  double max_rel_error = 0.0;
  std::string worst;
  bool passed = false;
};

/// Compares reverse-mode gradients of a random projection of the output with
/// central differences (h = 1e-5 max(1, |v|)), and also along one random
/// direction covering every coordinate. A probe whose central difference
/// misses is retried with second-order one-sided differences.
GradCheckResult check_gradients(const GradCase& c, std::uint64_t seed, const GradCheckOptions& opts = {});

/// Every differentiable op and loss.
std::vector<GradCase> op_grad_cases();
/// Tiny complete networks and composed chains.
std::vector<GradCase> network_grad_cases();

}  // namespace fpsr::testkit
