#include "bcgp/metrics.hpp"

#include <cmath>

#include "bcgp/errors.hpp"

namespace bcgp::metrics {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double gaussian_nll(double y, double mean, double var) {
  const double d = y - mean;
  return 0.5 * kLog2Pi + 0.5 * std::log(var) + 0.5 * d * d / var;
}

}  // namespace

double nmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("nMSE inputs differ in length");
  if (truth.size() < 2) throw InvalidArgument("nMSE needs at least two points");
  const double n = static_cast<double>(truth.size());
  const double variance = (truth.array() - truth.mean()).square().sum() / n;
  if (!(variance > 0.0)) throw DegenerateTruth("truth has zero variance");
  const double sse = (predicted - truth).squaredNorm();
  return 100.0 * sse / (n * variance);
}

double msll(const gp::PredictiveDistribution& predicted, const Eigen::VectorXd& truth, double train_mean,
            double train_var) {
  if (predicted.mean.size() != truth.size() || predicted.variance.size() != truth.size())
    throw InvalidArgument("MSLL inputs differ in length");
  if (truth.size() == 0) throw InvalidArgument("MSLL needs at least one point");
  if (!(train_var > 0.0)) throw ZeroVariance("trivial model variance must be positive");
  double total = 0.0;
  for (Eigen::Index k = 0; k < truth.size(); ++k) {
    const double var = predicted.variance(k);
    if (!(var > 0.0)) throw ZeroVariance("predictive variance must be positive");
    total += gaussian_nll(truth(k), predicted.mean(k), var) - gaussian_nll(truth(k), train_mean, train_var);
  }
  return total / static_cast<double>(truth.size());
}

MetricReport evaluate(const gp::PredictiveDistribution& predicted, const Eigen::VectorXd& truth,
                      const Eigen::VectorXd& train_targets) {
  if (train_targets.size() == 0) throw InvalidArgument("metrics need training targets");
  const double mean = train_targets.mean();
  const double var = (train_targets.array() - mean).square().mean();
  MetricReport report;
  report.nmse = nmse(predicted.mean, truth);
  report.msll = msll(predicted, truth, mean, var);
  report.n_test = static_cast<std::size_t>(truth.size());
  report.squared_errors = (predicted.mean - truth).array().square();
  return report;
}

}  // namespace bcgp::metrics
