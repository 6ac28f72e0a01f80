#pragma once

#include <memory>
#include <optional>
#include <span>
#include <variant>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "bcgp/kernels.hpp"
#include "bcgp/laplace_eig.hpp"
#include "bcgp/point.hpp"
#include "bcgp/qpso.hpp"

namespace bcgp::gp {

struct Hyperparams {
  kernels::KernelSpec kernel;
  double noise_variance = 1e-2;  // sigma_n^2

  void validate() const;
};

struct TrainingSet {
  Points x;
  Eigen::VectorXd y;

  std::size_t size() const noexcept { return x.size(); }
  /// Throws InvalidArgument on length mismatch, non-finite values or duplicate inputs.
  void validate() const;
};

struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  /// Variances below -1e-10 that were clamped to zero.
  std::size_t clamped = 0;
};

/// Cholesky factor of a symmetric matrix. If the plain factorisation fails, jitter
/// of 1e-10 * trace / n is added to the diagonal and escalated tenfold up to
/// 1e-6 * trace / n before giving up.
struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;

  explicit JitteredCholesky(const Eigen::MatrixXd& a);
  double log_det() const;
};

/// Full GP with zero mean function.
class StandardGP {
 public:
  StandardGP(TrainingSet data, Hyperparams hyper);

  /// Latent predictive mean and variance; add the noise variance for y*.
  PredictiveDistribution predict(std::span<const Point> points, bool include_noise = false) const;
  /// 1/2 y^T Ky^-1 y + 1/2 log|Ky| + n/2 log 2 pi with Ky = K + sigma_n^2 I.
  double nlml() const;

  const TrainingSet& data() const noexcept { return data_; }
  const Hyperparams& hyperparams() const noexcept { return hyper_; }

 private:
  TrainingSet data_;
  Hyperparams hyper_;
  std::optional<JitteredCholesky> factor_;
  Eigen::VectorXd alpha_;
};

enum class NlmlRoute {
  Auto,    // whichever factorisation is smaller
  Primal,  // m x m: Lambda^1/2 Phi^T Phi Lambda^1/2 + sigma_n^2 I
  Dual,    // N x N: sigma_n^2 I + Phi Lambda Phi^T, via the determinant lemma
};

/// Reduced-rank negative log marginal likelihood from explicit Phi (N x m) and
/// Lambda (length m):
///   1/2 (N - m) log sigma_n^2 + 1/2 sum_j log Lambda_jj + 1/2 log|A| + N/2 log 2 pi
///   + 1/(2 sigma_n^2) (y^T y - y^T Phi A^-1 Phi^T y),   A = sigma_n^2 Lambda^-1 + Phi^T Phi.
double reduced_rank_nlml(const Eigen::MatrixXd& phi, const Eigen::VectorXd& lambda, const Eigen::VectorXd& y,
                         double noise_variance, NlmlRoute route = NlmlRoute::Auto);

/// Lambda_jj = S(sqrt(mu_j)) for a basis; entries may underflow to zero.
Eigen::VectorXd basis_weights(const kernels::KernelSpec& kernel, const laplace::SpectralBasis& basis);

/// Reduced-rank GP in the Laplacian eigenbasis of the domain. Its covariance
/// sum_j S(sqrt(mu_j)) phi_j(x) phi_j(x') inherits the boundary condition of the
/// basis. Only m x m systems are factorised.
class ConstrainedGP {
 public:
  ConstrainedGP(TrainingSet data, Hyperparams hyper, std::shared_ptr<const laplace::SpectralBasis> basis);

  /// mean = Phi* A^-1 Phi^T y, variance = sigma_n^2 diag(Phi* A^-1 Phi*^T).
  PredictiveDistribution predict(std::span<const Point> points, bool include_noise = false) const;
  double nlml(NlmlRoute route = NlmlRoute::Auto) const;

  const TrainingSet& data() const noexcept { return data_; }
  const Hyperparams& hyperparams() const noexcept { return hyper_; }
  const laplace::SpectralBasis& basis() const noexcept { return *basis_; }
  std::shared_ptr<const laplace::SpectralBasis> basis_ptr() const noexcept { return basis_; }
  const Eigen::MatrixXd& phi() const noexcept { return phi_; }
  const Eigen::VectorXd& lambda() const noexcept { return lambda_; }

 private:
  TrainingSet data_;
  Hyperparams hyper_;
  std::shared_ptr<const laplace::SpectralBasis> basis_;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd lambda_;
  Eigen::VectorXd root_lambda_;
  std::optional<JitteredCholesky> factor_;  // of Lambda^1/2 Phi^T Phi Lambda^1/2 + sigma_n^2 I
  Eigen::VectorXd weights_;                 // A^-1 Phi^T y
};

// Free-function forms of the model operations.
PredictiveDistribution predict_standard(const StandardGP& model, std::span<const Point> points);
PredictiveDistribution predict_constrained(const ConstrainedGP& model, std::span<const Point> points);
double nlml_standard(const StandardGP& model);
double nlml_constrained(const ConstrainedGP& model);

// Hyperparameter fitting.

enum class ModelKind { Standard, Constrained };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Search box in (log sigma_f^2, log l/mm, log sigma_n^2).
struct LogBounds {
  optimize::Bounds log_signal_variance{-6.0, 6.0};
  optimize::Bounds log_lengthscale{0.0, 6.2146080984221914};  // [log 1, log 500]
  optimize::Bounds log_noise_variance{-12.0, 2.0};
};

/// Affine target map applied before fitting: y' = (y - offset) / scale.
struct TargetTransform {
  double offset = 0.0;
  double scale = 1.0;

  /// offset = mean(y) when centring; scale = RMS of the (centred) targets when
  /// normalising, 1 if that RMS is zero.
  static TargetTransform fit(const Eigen::VectorXd& y, bool center, bool normalize);
  Eigen::VectorXd forward(const Eigen::VectorXd& y) const;
  PredictiveDistribution inverse(PredictiveDistribution p) const;
};

struct FitOptions {
  kernels::Family family = kernels::Family::Matern32;
  LogBounds bounds;
  optimize::QpsoConfig qpso;  // bounds are filled in from `bounds`
  bool center_targets = false;
  bool normalize_targets = false;
};

/// NLML of the standard GP as a function of log hyperparameters, with the
/// pairwise distances cached.
class StandardObjective {
 public:
  StandardObjective(const TrainingSet& data, kernels::Family family);
  double operator()(std::span<const double> log_theta) const;

 private:
  Eigen::MatrixXd distances_;
  Eigen::VectorXd y_;
  kernels::Family family_;
};

/// Reduced-rank NLML as a function of log hyperparameters; Phi, Phi^T Phi and
/// Phi^T y are computed once.
class ConstrainedObjective {
 public:
  ConstrainedObjective(const TrainingSet& data, const laplace::SpectralBasis& basis, kernels::Family family);
  double operator()(std::span<const double> log_theta) const;

 private:
  Eigen::MatrixXd phi_;
  Eigen::MatrixXd gram_;  // Phi^T Phi
  Eigen::VectorXd phi_y_;
  Eigen::VectorXd y_;
  Eigen::VectorXd frequencies_;
  double yy_;
  int dim_;
  kernels::Family family_;
};

Hyperparams hyperparams_from_log(std::span<const double> log_theta, kernels::Family family);

/// A model whose hyperparameters came from QPSO, together with its target map.
class FittedModel {
 public:
  FittedModel(TargetTransform transform, std::variant<StandardGP, ConstrainedGP> model, double nlml,
              std::vector<double> trace);

  ModelKind kind() const noexcept;
  PredictiveDistribution predict(std::span<const Point> points, bool include_noise = false) const;
  const Hyperparams& hyperparams() const noexcept;
  const TargetTransform& transform() const noexcept { return transform_; }
  /// NLML at the optimum, in transformed target units.
  double nlml() const noexcept { return nlml_; }
  const std::vector<double>& trace() const noexcept { return trace_; }
  const std::variant<StandardGP, ConstrainedGP>& model() const noexcept { return model_; }
  /// Training set in original target units.
  TrainingSet training_data() const;

 private:
  TargetTransform transform_;
  std::variant<StandardGP, ConstrainedGP> model_;
  double nlml_;
  std::vector<double> trace_;
};

/// QPSO minimiser of the matching NLML over options.bounds. A basis is required for
/// the constrained kind. Throws EmptyTrainingSet for N = 0.
FittedModel fit(ModelKind kind, const TrainingSet& data, std::shared_ptr<const laplace::SpectralBasis> basis,
                const FitOptions& options);

/// Rebuilds a model with fixed hyperparameters (no optimisation).
FittedModel make_model(ModelKind kind, const TrainingSet& data, const Hyperparams& hyper,
                       std::shared_ptr<const laplace::SpectralBasis> basis, TargetTransform transform = {});

}  // namespace bcgp::gp
