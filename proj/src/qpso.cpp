#include "bcgp/qpso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "bcgp/errors.hpp"

namespace bcgp::optimize {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double reflect(double x, const Bounds& b) {
  if (x >= b.lower && x <= b.upper) return x;
  const double range = b.upper - b.lower;
  if (!std::isfinite(x)) return b.lower + 0.5 * range;
  double offset = std::fmod(x - b.lower, 2.0 * range);
  if (offset < 0.0) offset += 2.0 * range;
  if (offset > range) offset = 2.0 * range - offset;
  return std::clamp(b.lower + offset, b.lower, b.upper);
}

// Fills values[i] = objective(positions[i]); evaluation order never affects results.
void evaluate_swarm(const Objective& objective, const std::vector<std::vector<double>>& positions,
                    std::vector<double>& values, int threads) {
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double v = objective(positions[i]);
      values[i] = std::isfinite(v) ? v : kInf;
    }
  };
  const std::size_t n = positions.size();
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, static_cast<int>(n)));
  if (workers <= 1) {
    run(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk, end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back(run, begin, end);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void QpsoConfig::validate() const {
  if (swarm < 2) throw InvalidArgument("QPSO swarm must hold at least 2 particles");
  if (iterations < 1) throw InvalidArgument("QPSO needs at least one iteration");
  if (bounds.empty()) throw InvalidArgument("QPSO needs at least one dimension");
  for (const auto& b : bounds)
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper))
      throw InvalidArgument("QPSO bounds must be finite with lower < upper");
  if (!std::isfinite(ce_start) || !std::isfinite(ce_end)) throw InvalidArgument("QPSO coefficients must be finite");
}

QpsoResult qpso_minimize(const Objective& objective, const QpsoConfig& config) {
  config.validate();
  const auto dims = config.bounds.size();
  const auto swarm = static_cast<std::size_t>(config.swarm);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> x(swarm, std::vector<double>(dims));
  for (auto& particle : x)
    for (std::size_t d = 0; d < dims; ++d)
      particle[d] = config.bounds[d].lower + unit(rng) * (config.bounds[d].upper - config.bounds[d].lower);

  std::vector<double> values(swarm);
  evaluate_swarm(objective, x, values, config.threads);
  QpsoResult result;
  result.evaluations = swarm;

  auto personal = x;
  auto personal_value = values;
  std::size_t leader = static_cast<std::size_t>(std::distance(
      personal_value.begin(), std::min_element(personal_value.begin(), personal_value.end())));

  std::vector<double> mean_best(dims);
  for (int t = 0; t < config.iterations; ++t) {
    const double frac = config.iterations > 1 ? static_cast<double>(t) / (config.iterations - 1) : 0.0;
    const double beta = config.ce_start + (config.ce_end - config.ce_start) * frac;

    std::fill(mean_best.begin(), mean_best.end(), 0.0);
    for (const auto& p : personal)
      for (std::size_t d = 0; d < dims; ++d) mean_best[d] += p[d] / static_cast<double>(swarm);

    const auto& best = personal[leader];
    for (std::size_t i = 0; i < swarm; ++i) {
      for (std::size_t d = 0; d < dims; ++d) {
        const double phi = unit(rng);
        double u = unit(rng);
        while (u <= 0.0) u = unit(rng);
        const bool plus = unit(rng) < 0.5;
        const double attractor = phi * personal[i][d] + (1.0 - phi) * best[d];
        const double step = beta * std::abs(mean_best[d] - x[i][d]) * std::log(1.0 / u);
        x[i][d] = reflect(plus ? attractor + step : attractor - step, config.bounds[d]);
      }
    }

    evaluate_swarm(objective, x, values, config.threads);
    result.evaluations += swarm;
    for (std::size_t i = 0; i < swarm; ++i) {
      if (values[i] < personal_value[i]) {
        personal_value[i] = values[i];
        personal[i] = x[i];
        if (values[i] < personal_value[leader]) leader = i;
      }
    }
    result.trace.push_back(personal_value[leader]);
  }

  if (!std::isfinite(personal_value[leader])) throw OptimizerFailure("every QPSO evaluation was non-finite");
  result.best_point = personal[leader];
  result.best_value = personal_value[leader];
  return result;
}

}  // namespace bcgp::optimize
