#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bcgp::optimize {

struct Bounds {
  double lower = 0.0;
  double upper = 1.0;
};

/// Quantum-behaved particle swarm settings. The contraction-expansion coefficient
/// decays linearly from ce_start at the first iteration to ce_end at the last.
struct QpsoConfig {
  int swarm = 40;
  int iterations = 200;
  double ce_start = 1.0;
  double ce_end = 0.5;
  std::vector<Bounds> bounds;
  std::uint64_t seed = 0;
  /// Worker threads for objective evaluation; results do not depend on it.
  int threads = 1;

  void validate() const;
};

struct QpsoResult {
  std::vector<double> best_point;
  double best_value = 0.0;
  std::vector<double> trace;  // best-so-far after each iteration
  std::size_t evaluations = 0;
};

using Objective = std::function<double(std::span<const double>)>;

/// Minimises `objective` over the box. Non-finite values count as +inf; positions
/// leaving the box are reflected back in. Throws OptimizerFailure if no evaluation
/// is finite.
QpsoResult qpso_minimize(const Objective& objective, const QpsoConfig& config);

}  // namespace bcgp::optimize
