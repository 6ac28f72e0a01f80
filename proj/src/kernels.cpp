#include "bcgp/kernels.hpp"

#include <cmath>
#include <numbers>

#include "bcgp/errors.hpp"

namespace bcgp::kernels {

const char* to_string(Family family) {
  return family == Family::Matern32 ? "matern32" : "squared_exponential";
}

Family family_from_string(const std::string& name) {
  if (name == "matern32" || name == "Matern32") return Family::Matern32;
  if (name == "squared_exponential" || name == "se" || name == "SquaredExponential") return Family::SquaredExponential;
  throw InvalidArgument("unknown kernel family '" + name + "'");
}

void KernelSpec::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw InvalidArgument("kernel signal variance must be positive");
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) throw InvalidArgument("kernel lengthscale must be positive");
}

double covariance(const KernelSpec& kernel, double r) {
  const double s = r / kernel.lengthscale;
  switch (kernel.family) {
    case Family::Matern32: {
      const double a = std::numbers::sqrt3 * s;
      return kernel.signal_variance * (1.0 + a) * std::exp(-a);
    }
    case Family::SquaredExponential:
      return kernel.signal_variance * std::exp(-0.5 * s * s);
  }
  return 0.0;
}

Eigen::MatrixXd covariance(const KernelSpec& kernel, std::span<const Point> xs, std::span<const Point> ys) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t b = 0; b < ys.size(); ++b)
    for (std::size_t a = 0; a < xs.size(); ++a)
      k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = covariance(kernel, distance(xs[a], ys[b]));
  return k;
}

double spectral_density(const KernelSpec& kernel, double omega, int dim) {
  if (dim != 1 && dim != 2) throw InvalidArgument("spectral density is available for 1 and 2 dimensions");
  const double l = kernel.lengthscale;
  const double w2 = omega * omega;
  switch (kernel.family) {
    case Family::Matern32: {
      constexpr double nu = 1.5;
      const double base = 2.0 * nu / (l * l) + w2;
      if (dim == 2) {
        const double c = 4.0 * std::numbers::pi * std::pow(2.0 * nu, nu) / std::pow(l, 2.0 * nu) *
                         (std::tgamma(nu + 1.0) / std::tgamma(nu));
        return kernel.signal_variance * c * std::pow(base, -(nu + 1.0));
      }
      // 2 sqrt(pi) Gamma(nu + 1/2) / Gamma(nu) (2 nu)^nu / l^(2 nu) = 12 sqrt(3) / l^3
      const double c = 2.0 * std::sqrt(std::numbers::pi) * std::tgamma(nu + 0.5) / std::tgamma(nu) *
                       std::pow(2.0 * nu, nu) / std::pow(l, 2.0 * nu);
      return kernel.signal_variance * c * std::pow(base, -(nu + 0.5));
    }
    case Family::SquaredExponential: {
      const double c = std::pow(std::sqrt(2.0 * std::numbers::pi) * l, dim);
      return kernel.signal_variance * c * std::exp(-0.5 * l * l * w2);
    }
  }
  return 0.0;
}

}  // namespace bcgp::kernels
