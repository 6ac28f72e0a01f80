#pragma once

#include <span>
#include <string>

#include <Eigen/Dense>

#include "bcgp/point.hpp"

namespace bcgp::kernels {

enum class Family { Matern32, SquaredExponential };

const char* to_string(Family family);
Family family_from_string(const std::string& name);

/// Isotropic stationary covariance k(r) with signal variance and lengthscale.
struct KernelSpec {
  Family family = Family::Matern32;
  double signal_variance = 1.0;  // sigma_f^2
  double lengthscale = 1.0;      // l, mm

  /// Throws InvalidArgument unless both parameters are positive and finite.
  void validate() const;
};

/// k(r) at distance r.
double covariance(const KernelSpec& kernel, double r);

/// K[a, b] = k(|x_a - x'_b|).
Eigen::MatrixXd covariance(const KernelSpec& kernel, std::span<const Point> xs, std::span<const Point> ys);

/// Spectral density S(omega) of the isotropic kernel in `dim` dimensions (1 or 2),
/// normalised so that (2 pi)^-d times its integral over R^d equals k(0).
///
/// Matern 3/2, d = 2: sigma_f^2 * 4 pi (2 nu)^nu / l^(2 nu) * Gamma(nu + 1) / Gamma(nu)
///   * (2 nu / l^2 + omega^2)^-(nu + 1) with nu = 3/2.
double spectral_density(const KernelSpec& kernel, double omega, int dim = 2);

}  // namespace bcgp::kernels
