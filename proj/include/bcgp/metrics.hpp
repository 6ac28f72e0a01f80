#pragma once

#include <Eigen/Dense>

#include "bcgp/gp.hpp"

namespace bcgp::metrics {

struct MetricReport {
  double nmse = 0.0;  // percent
  double msll = 0.0;  // nats
  std::size_t n_test = 0;
  Eigen::VectorXd squared_errors;
};

/// Normalised mean square error in percent, using the population variance of the
/// truth: 0 for a perfect prediction, exactly 100 for predicting its mean.
/// Throws DegenerateTruth for constant truth and InvalidArgument for N < 2.
double nmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& truth);

/// Mean standardised log loss against a trivial Gaussian N(train_mean, train_var).
/// Negative values favour the model. Throws ZeroVariance for non-positive variances.
double msll(const gp::PredictiveDistribution& predicted, const Eigen::VectorXd& truth, double train_mean,
            double train_var);

/// Both metrics plus per-point squared errors. Trivial-model statistics are the
/// mean and population variance of the training targets.
MetricReport evaluate(const gp::PredictiveDistribution& predicted, const Eigen::VectorXd& truth,
                      const Eigen::VectorXd& train_targets);

}  // namespace bcgp::metrics
