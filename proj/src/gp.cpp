#include "bcgp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bcgp/errors.hpp"

namespace bcgp::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void clamp_variance(PredictiveDistribution& out) {
  for (Eigen::Index k = 0; k < out.variance.size(); ++k) {
    double& v = out.variance(k);
    if (v < 0.0) {
      if (v < -1e-10) ++out.clamped;
      v = 0.0;
    }
  }
}

double unit_kernel(kernels::Family family, double s) {
  if (family == kernels::Family::Matern32) {
    const double a = std::numbers::sqrt3 * s;
    return (1.0 + a) * std::exp(-a);
  }
  return std::exp(-0.5 * s * s);
}

// Working with B = D Phi^T Phi D + sigma^2 I, D = Lambda^(1/2), keeps the system
// well conditioned when spectral weights underflow; A = D^-1 B D^-1.
struct RrTerms {
  double log_det_b;
  double quadratic;  // y^T y - y^T Phi A^-1 Phi^T y
};

RrTerms primal_terms(const Eigen::MatrixXd& gram, const Eigen::VectorXd& phi_y, double yy, const Eigen::VectorXd& lambda,
                     double noise) {
  const Eigen::VectorXd d = lambda.cwiseSqrt();
  Eigen::MatrixXd b = d.asDiagonal() * gram * d.asDiagonal();
  b.diagonal().array() += noise;
  const JitteredCholesky factor(b);
  const Eigen::VectorXd u = d.cwiseProduct(phi_y);
  return {factor.log_det(), yy - u.dot(factor.llt.solve(u))};
}

RrTerms dual_terms(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const Eigen::VectorXd& lambda, double noise) {
  const auto n = phi.rows();
  const auto m = phi.cols();
  Eigen::MatrixXd c = phi * lambda.asDiagonal() * phi.transpose();
  c.diagonal().array() += noise;
  const JitteredCholesky factor(c);
  // |C| = sigma^(2(N-m)) |B|
  const double log_det_b = factor.log_det() - static_cast<double>(n - m) * std::log(noise);
  return {log_det_b, noise * y.dot(factor.llt.solve(y))};
}

double assemble_rr_nlml(const RrTerms& t, Eigen::Index n, Eigen::Index m, double noise) {
  return 0.5 * static_cast<double>(n - m) * std::log(noise) + 0.5 * t.log_det_b + 0.5 * static_cast<double>(n) * kLog2Pi +
         t.quadratic / (2.0 * noise);
}

bool use_dual(NlmlRoute route, Eigen::Index n, Eigen::Index m) {
  return route == NlmlRoute::Dual || (route == NlmlRoute::Auto && n < m);
}

Eigen::VectorXd spectral_weights(const kernels::KernelSpec& kernel, const Eigen::VectorXd& frequencies, int dim) {
  Eigen::VectorXd lambda(frequencies.size());
  for (Eigen::Index j = 0; j < frequencies.size(); ++j) lambda(j) = kernels::spectral_density(kernel, frequencies(j), dim);
  return lambda;
}

}  // namespace

void Hyperparams::validate() const {
  kernel.validate();
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) throw InvalidArgument("noise variance must be positive");
}

void TrainingSet::validate() const {
  if (static_cast<Eigen::Index>(x.size()) != y.size()) throw InvalidArgument("training inputs and targets differ in length");
  if (!y.allFinite()) throw InvalidArgument("training targets must be finite");
  Points sorted = x;
  for (const auto& p : sorted)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("training inputs must be finite");
  std::sort(sorted.begin(), sorted.end(), [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidArgument("training inputs contain duplicates");
}

// JitteredCholesky

JitteredCholesky::JitteredCholesky(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  const double base = n > 0 ? a.trace() / static_cast<double>(n) : 0.0;
  if (!std::isfinite(base)) throw IllConditioned("matrix to factorise is not finite");
  for (double factor = 0.0; factor <= 1.0000001e-6; factor = factor == 0.0 ? 1e-10 : factor * 10.0) {
    Eigen::MatrixXd b = a;
    jitter = factor * base;
    b.diagonal().array() += jitter;
    llt.compute(b);
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all() &&
        llt.matrixLLT().diagonal().allFinite())
      return;
  }
  throw IllConditioned("Cholesky factorisation failed after maximum jitter; consider raising the noise variance");
}

double JitteredCholesky::log_det() const { return 2.0 * llt.matrixLLT().diagonal().array().log().sum(); }

// StandardGP

StandardGP::StandardGP(TrainingSet data, Hyperparams hyper) : data_(std::move(data)), hyper_(hyper) {
  data_.validate();
  hyper_.validate();
  if (data_.size() == 0) return;
  Eigen::MatrixXd k = kernels::covariance(hyper_.kernel, data_.x, data_.x);
  k.diagonal().array() += hyper_.noise_variance;
  factor_.emplace(k);
  alpha_ = factor_->llt.solve(data_.y);
}

PredictiveDistribution StandardGP::predict(std::span<const Point> points, bool include_noise) const {
  PredictiveDistribution out;
  const auto p = static_cast<Eigen::Index>(points.size());
  out.variance = Eigen::VectorXd::Constant(p, kernels::covariance(hyper_.kernel, 0.0));
  if (!factor_) {
    out.mean = Eigen::VectorXd::Zero(p);
  } else {
    const Eigen::MatrixXd cross = kernels::covariance(hyper_.kernel, data_.x, points);  // N x P
    out.mean = cross.transpose() * alpha_;
    const Eigen::MatrixXd v = factor_->llt.matrixL().solve(cross);
    out.variance -= v.colwise().squaredNorm().transpose();
  }
  clamp_variance(out);
  if (include_noise) out.variance.array() += hyper_.noise_variance;
  return out;
}

double StandardGP::nlml() const {
  if (!factor_) return 0.0;
  const auto n = static_cast<double>(data_.size());
  return 0.5 * data_.y.dot(alpha_) + 0.5 * factor_->log_det() + 0.5 * n * kLog2Pi;
}

// Reduced rank

double reduced_rank_nlml(const Eigen::MatrixXd& phi, const Eigen::VectorXd& lambda, const Eigen::VectorXd& y,
                         double noise_variance, NlmlRoute route) {
  if (phi.rows() != y.size() || phi.cols() != lambda.size()) throw InvalidArgument("reduced-rank NLML shape mismatch");
  if (!(lambda.array() >= 0.0).all() || !lambda.allFinite())
    throw InvalidArgument("spectral weights must be finite and non-negative");
  const RrTerms terms = use_dual(route, phi.rows(), phi.cols())
                            ? dual_terms(phi, y, lambda, noise_variance)
                            : primal_terms(phi.transpose() * phi, phi.transpose() * y, y.squaredNorm(), lambda,
                                           noise_variance);
  return assemble_rr_nlml(terms, phi.rows(), phi.cols(), noise_variance);
}

Eigen::VectorXd basis_weights(const kernels::KernelSpec& kernel, const laplace::SpectralBasis& basis) {
  return spectral_weights(kernel, basis.eigenvalues().cwiseMax(0.0).cwiseSqrt(), basis.dimension());
}

ConstrainedGP::ConstrainedGP(TrainingSet data, Hyperparams hyper, std::shared_ptr<const laplace::SpectralBasis> basis)
    : data_(std::move(data)), hyper_(hyper), basis_(std::move(basis)) {
  if (!basis_) throw InvalidArgument("constrained GP needs an eigenbasis");
  data_.validate();
  hyper_.validate();
  phi_ = basis_->evaluate(data_.x);
  lambda_ = basis_weights(hyper_.kernel, *basis_);
  root_lambda_ = lambda_.cwiseSqrt();
  Eigen::MatrixXd b = root_lambda_.asDiagonal() * (phi_.transpose() * phi_) * root_lambda_.asDiagonal();
  b.diagonal().array() += hyper_.noise_variance;
  factor_.emplace(b);
  weights_ = root_lambda_.cwiseProduct(factor_->llt.solve(root_lambda_.cwiseProduct(phi_.transpose() * data_.y)));
}

PredictiveDistribution ConstrainedGP::predict(std::span<const Point> points, bool include_noise) const {
  const Eigen::MatrixXd phi_star = basis_->evaluate(points);
  PredictiveDistribution out;
  out.mean = phi_star * weights_;
  const Eigen::MatrixXd v = factor_->llt.matrixL().solve(root_lambda_.asDiagonal() * phi_star.transpose());  // m x P
  out.variance = hyper_.noise_variance * v.colwise().squaredNorm().transpose();
  clamp_variance(out);
  if (include_noise) out.variance.array() += hyper_.noise_variance;
  return out;
}

double ConstrainedGP::nlml(NlmlRoute route) const {
  return reduced_rank_nlml(phi_, lambda_, data_.y, hyper_.noise_variance, route);
}

PredictiveDistribution predict_standard(const StandardGP& model, std::span<const Point> points) {
  return model.predict(points);
}
PredictiveDistribution predict_constrained(const ConstrainedGP& model, std::span<const Point> points) {
  return model.predict(points);
}
double nlml_standard(const StandardGP& model) { return model.nlml(); }
double nlml_constrained(const ConstrainedGP& model) { return model.nlml(); }

// Fitting

const char* to_string(ModelKind kind) { return kind == ModelKind::Standard ? "standard" : "constrained"; }

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "standard") return ModelKind::Standard;
  if (name == "constrained") return ModelKind::Constrained;
  throw InvalidArgument("unknown model kind '" + name + "'");
}

TargetTransform TargetTransform::fit(const Eigen::VectorXd& y, bool center, bool normalize) {
  TargetTransform t;
  if (center && y.size() > 0) t.offset = y.mean();
  if (normalize && y.size() > 0) {
    const double rms = std::sqrt((y.array() - t.offset).square().mean());
    if (rms > 0.0 && std::isfinite(rms)) t.scale = rms;
  }
  return t;
}

Eigen::VectorXd TargetTransform::forward(const Eigen::VectorXd& y) const { return (y.array() - offset) / scale; }

PredictiveDistribution TargetTransform::inverse(PredictiveDistribution p) const {
  p.mean = (p.mean.array() * scale + offset).matrix();
  p.variance *= scale * scale;
  return p;
}

Hyperparams hyperparams_from_log(std::span<const double> log_theta, kernels::Family family) {
  if (log_theta.size() != 3) throw InvalidArgument("expected three log hyperparameters");
  return Hyperparams{kernels::KernelSpec{family, std::exp(log_theta[0]), std::exp(log_theta[1])}, std::exp(log_theta[2])};
}

StandardObjective::StandardObjective(const TrainingSet& data, kernels::Family family) : y_(data.y), family_(family) {
  const auto n = static_cast<Eigen::Index>(data.size());
  distances_.resize(n, n);
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index a = 0; a < n; ++a) distances_(a, b) = distance(data.x[a], data.x[b]);
}

double StandardObjective::operator()(std::span<const double> log_theta) const {
  const Hyperparams hp = hyperparams_from_log(log_theta, family_);
  const auto n = distances_.rows();
  Eigen::MatrixXd k(n, n);
  const double inv_l = 1.0 / hp.kernel.lengthscale;
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index a = b; a < n; ++a) k(a, b) = hp.kernel.signal_variance * unit_kernel(family_, distances_(a, b) * inv_l);
  k.diagonal().array() += hp.noise_variance;
  k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
  try {
    const JitteredCholesky factor(k);
    return 0.5 * y_.dot(factor.llt.solve(y_)) + 0.5 * factor.log_det() + 0.5 * static_cast<double>(n) * kLog2Pi;
  } catch (const IllConditioned&) {
    return std::numeric_limits<double>::infinity();
  }
}

ConstrainedObjective::ConstrainedObjective(const TrainingSet& data, const laplace::SpectralBasis& basis,
                                           kernels::Family family)
    : phi_(basis.evaluate(data.x)),
      y_(data.y),
      frequencies_(basis.eigenvalues().cwiseMax(0.0).cwiseSqrt()),
      yy_(data.y.squaredNorm()),
      dim_(basis.dimension()),
      family_(family) {
  gram_ = phi_.transpose() * phi_;
  phi_y_ = phi_.transpose() * y_;
}

double ConstrainedObjective::operator()(std::span<const double> log_theta) const {
  const Hyperparams hp = hyperparams_from_log(log_theta, family_);
  const Eigen::VectorXd lambda = spectral_weights(hp.kernel, frequencies_, dim_);
  try {
    const RrTerms terms = use_dual(NlmlRoute::Auto, phi_.rows(), phi_.cols())
                              ? dual_terms(phi_, y_, lambda, hp.noise_variance)
                              : primal_terms(gram_, phi_y_, yy_, lambda, hp.noise_variance);
    return assemble_rr_nlml(terms, phi_.rows(), phi_.cols(), hp.noise_variance);
  } catch (const IllConditioned&) {
    return std::numeric_limits<double>::infinity();
  }
}

// FittedModel

FittedModel::FittedModel(TargetTransform transform, std::variant<StandardGP, ConstrainedGP> model, double nlml,
                         std::vector<double> trace)
    : transform_(transform), model_(std::move(model)), nlml_(nlml), trace_(std::move(trace)) {}

ModelKind FittedModel::kind() const noexcept {
  return std::holds_alternative<StandardGP>(model_) ? ModelKind::Standard : ModelKind::Constrained;
}

PredictiveDistribution FittedModel::predict(std::span<const Point> points, bool include_noise) const {
  return transform_.inverse(std::visit([&](const auto& m) { return m.predict(points, include_noise); }, model_));
}

const Hyperparams& FittedModel::hyperparams() const noexcept {
  return std::visit([](const auto& m) -> const Hyperparams& { return m.hyperparams(); }, model_);
}

TrainingSet FittedModel::training_data() const {
  TrainingSet out = std::visit([](const auto& m) { return m.data(); }, model_);
  out.y = (out.y.array() * transform_.scale + transform_.offset).matrix();
  return out;
}

FittedModel make_model(ModelKind kind, const TrainingSet& data, const Hyperparams& hyper,
                       std::shared_ptr<const laplace::SpectralBasis> basis, TargetTransform transform) {
  TrainingSet scaled{data.x, transform.forward(data.y)};
  if (kind == ModelKind::Standard) {
    StandardGP model(std::move(scaled), hyper);
    const double value = model.nlml();
    return FittedModel(transform, std::move(model), value, {});
  }
  ConstrainedGP model(std::move(scaled), hyper, std::move(basis));
  const double value = model.nlml();
  return FittedModel(transform, std::move(model), value, {});
}

FittedModel fit(ModelKind kind, const TrainingSet& data, std::shared_ptr<const laplace::SpectralBasis> basis,
                const FitOptions& options) {
  data.validate();
  if (data.size() == 0) throw EmptyTrainingSet("cannot fit a GP to an empty training set");
  if (kind == ModelKind::Constrained && !basis) throw InvalidArgument("constrained fit needs an eigenbasis");

  const TargetTransform transform = TargetTransform::fit(data.y, options.center_targets, options.normalize_targets);
  const TrainingSet scaled{data.x, transform.forward(data.y)};

  optimize::QpsoConfig qpso = options.qpso;
  qpso.bounds = {options.bounds.log_signal_variance, options.bounds.log_lengthscale, options.bounds.log_noise_variance};

  optimize::QpsoResult best;
  if (kind == ModelKind::Standard)
    best = optimize::qpso_minimize(StandardObjective(scaled, options.family), qpso);
  else
    best = optimize::qpso_minimize(ConstrainedObjective(scaled, *basis, options.family), qpso);

  const Hyperparams hyper = hyperparams_from_log(best.best_point, options.family);
  FittedModel fitted = make_model(kind, data, hyper, std::move(basis), transform);
  return FittedModel(transform, fitted.model(), best.best_value, std::move(best.trace));
}

}  // namespace bcgp::gp
