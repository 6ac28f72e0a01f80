#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "bcgp/errors.hpp"
#include "bcgp/gp.hpp"
#include "bcgp/laplace_eig.hpp"
#include "support.hpp"

using namespace bcgp;
using namespace bcgp::gp;
using bcgp::kernels::Family;
using bcgp::kernels::KernelSpec;
using testing_support::Gen;

namespace {

constexpr double log_2pi = 1.8378770664093453;

// Dense oracle written out independently of the library.
double matern(double r, double sf2, double l) {
  const double a = std::sqrt(3.0) * r / l;
  return sf2 * (1.0 + a) * std::exp(-a);
}

struct DenseOracle {
  Eigen::VectorXd mean, variance;
  double nlml = 0.0;
};

DenseOracle dense_oracle(const Points& x, const Eigen::VectorXd& y, const Points& xs, double sf2, double l, double sn2) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) K(a, b) = matern(distance(x[a], x[b]), sf2, l);
  K.diagonal().array() += sn2;
  const Eigen::MatrixXd Kinv = K.fullPivLu().inverse();
  DenseOracle out;
  out.mean.resize(static_cast<Eigen::Index>(xs.size()));
  out.variance.resize(out.mean.size());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    Eigen::VectorXd k(n);
    for (Eigen::Index a = 0; a < n; ++a) k[a] = matern(distance(xs[s], x[a]), sf2, l);
    out.mean[s] = k.dot(Kinv * y);
    out.variance[s] = sf2 - k.dot(Kinv * k);
  }
  out.nlml = 0.5 * y.dot(Kinv * y) + 0.5 * std::log(K.determinant()) + 0.5 * n * log_2pi;
  return out;
}

Hyperparams matern_hyper(double sf2, double l, double sn2) { return {{Family::Matern32, sf2, l}, sn2}; }

Points on_line(std::initializer_list<double> xs) {
  Points out;
  for (double v : xs) out.push_back({v, 0.0});
  return out;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

// Smooth 1D test signal sampled with noise at n even steps across [lo, 1 - lo].
TrainingSet interval_data(int n, double noise_sd, std::uint64_t seed, double lo = 0.05) {
  Gen gen(seed);
  TrainingSet data;
  data.y.resize(n);
  for (int k = 0; k < n; ++k) {
    const double x = lo + (1.0 - 2.0 * lo) * (k + 0.5) / n;
    data.x.push_back({x, 0.0});
    data.y[k] = std::sin(2.0 * std::numbers::pi * x) + 0.5 * std::cos(5.0 * x) + noise_sd * gen.normal();
  }
  return data;
}

double rms(const Eigen::VectorXd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace

TEST(StandardGP, NoDataGivesPrior) {
  const StandardGP gp({}, matern_hyper(2.0, 5.0, 0.1));
  const Points xs{{0.0, 0.0}, {3.0, 4.0}};
  const auto p = gp.predict(xs);
  EXPECT_EQ(p.mean.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(p.variance[0], 2.0);
  EXPECT_DOUBLE_EQ(p.variance[1], 2.0);
  EXPECT_DOUBLE_EQ(gp.predict(xs, true).variance[0], 2.1);
}

TEST(StandardGP, NoiselessInterpolation) {
  const StandardGP single({on_line({0.7}), vec({-1.3})}, matern_hyper(1.0, 1.0, 1e-12));
  const Points x0 = on_line({0.7});
  EXPECT_NEAR(single.predict(x0).mean[0], -1.3, 1e-6);

  Gen gen(5);
  TrainingSet data;
  data.y.resize(15);
  for (int k = 0; k < 15; ++k) {
    data.x.push_back({gen.uniform(0.0, 50.0), gen.uniform(0.0, 50.0)});
    data.y[k] = gen.normal();
  }
  const StandardGP gp(data, matern_hyper(1.0, 10.0, 1e-12));
  EXPECT_LT((gp.predict(data.x).mean - data.y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(StandardGP, TwoPointRegressionPinned) {
  const Points x = on_line({0.0, 1.0});
  const Points xs = on_line({0.5});
  const StandardGP gp({x, vec({1.0, -1.0})}, matern_hyper(1.0, 1.0, 0.1));
  const auto p = gp.predict(xs);
  EXPECT_NEAR(p.mean[0], 0.0, 1e-15);
  EXPECT_NEAR(p.variance[0], 0.22184529779356021, 1e-12);
  EXPECT_NEAR(gp.nlml(), 3.447603596470394, 1e-12);

  const Points xs2 = on_line({0.25});
  const StandardGP gp2({x, vec({1.0, 0.5})}, matern_hyper(1.0, 1.0, 0.1));
  const auto p2 = gp2.predict(xs2);
  EXPECT_NEAR(p2.mean[0], 0.859826981042395, 1e-12);
  EXPECT_NEAR(p2.variance[0], 0.160844576806908, 1e-12);
  EXPECT_NEAR(gp2.nlml(), 2.282530877111035, 1e-12);
}

TEST(StandardGP, MatchesDenseOracleOnRandomProblems) {
  Gen gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = gen.integer(1, 25);
    TrainingSet data;
    data.y.resize(n);
    for (int k = 0; k < n; ++k) {
      data.x.push_back({gen.uniform(0.0, 100.0), gen.uniform(0.0, 100.0)});
      data.y[k] = gen.normal();
    }
    Points xs(8);
    for (auto& p : xs) p = {gen.uniform(0.0, 100.0), gen.uniform(0.0, 100.0)};
    const double sf2 = gen.uniform(0.2, 3.0), l = gen.uniform(5.0, 40.0), sn2 = gen.uniform(0.01, 0.5);
    const StandardGP gp(data, matern_hyper(sf2, l, sn2));
    const auto oracle = dense_oracle(data.x, data.y, xs, sf2, l, sn2);
    const auto p = gp.predict(xs);
    EXPECT_LT((p.mean - oracle.mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((p.variance - oracle.variance).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(gp.nlml(), oracle.nlml, 1e-8 * std::max(1.0, std::abs(oracle.nlml)));
  }
}

TEST(StandardGP, SingleZeroTargetNlml) {
  const StandardGP gp({on_line({0.0}), vec({0.0})}, matern_hyper(1.0, 1.0, 1.0));
  EXPECT_NEAR(gp.nlml(), 0.5 * std::log(2.0) + 0.5 * log_2pi, 1e-12);
  EXPECT_NEAR(gp.nlml(), 1.26551, 1e-5);
}

TEST(StandardGP, NlmlGrowsWithSignalVarianceForZeroTargets) {
  const Points x = on_line({0.0, 1.5, 4.0});
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  double previous = -1e300;
  for (double sf2 = 0.25; sf2 < 100.0; sf2 *= 2.0) {
    const double v = StandardGP({x, y}, matern_hyper(sf2, 2.0, 0.1)).nlml();
    EXPECT_GT(v, previous);
    previous = v;
  }
}

TEST(StandardGP, VariancesAreNeverNegative) {
  Gen gen(23);
  for (int trial = 0; trial < 10; ++trial) {
    TrainingSet data;
    data.y.resize(40);
    for (int k = 0; k < 40; ++k) {
      data.x.push_back({gen.uniform(0.0, 10.0), gen.uniform(0.0, 10.0)});
      data.y[k] = gen.normal();
    }
    const StandardGP gp(data, matern_hyper(1.0, 30.0, 1e-10));
    const auto p = gp.predict(data.x);
    EXPECT_GE(p.variance.minCoeff(), 0.0);
    EXPECT_LE(p.clamped, data.x.size());
  }
}

TEST(TrainingSet, RejectsDuplicatesAndMismatches) {
  EXPECT_THROW((TrainingSet{on_line({1.0, 1.0}), vec({0.0, 1.0})}.validate()), InvalidArgument);
  EXPECT_THROW((TrainingSet{on_line({1.0}), vec({0.0, 1.0})}.validate()), InvalidArgument);
  EXPECT_THROW((TrainingSet{on_line({1.0}), vec({std::nan("")})}.validate()), InvalidArgument);
  EXPECT_NO_THROW((TrainingSet{on_line({1.0, 2.0}), vec({0.0, 1.0})}.validate()));
  EXPECT_THROW((Hyperparams{{Family::Matern32, 1.0, 1.0}, 0.0}.validate()), InvalidArgument);
}

TEST(ReducedRankNlml, SingleBasisHandValue) {
  const Eigen::MatrixXd phi = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(1);
  const double expected = 0.5 * std::log(2.0) + 0.5 * log_2pi + 0.5 * (1.0 - 0.5);
  for (auto route : {NlmlRoute::Primal, NlmlRoute::Dual, NlmlRoute::Auto}) {
    EXPECT_NEAR(reduced_rank_nlml(phi, lambda, y, 1.0, route), expected, 1e-12);
    EXPECT_NEAR(reduced_rank_nlml(phi, lambda, y, 1.0, route), 1.51551, 1e-5);
  }
}

TEST(ReducedRankNlml, MatchesGaussianDensityOfLowRankCovariance) {
  Gen gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen.integer(1, 30), m = gen.integer(1, 30);
    const Eigen::MatrixXd phi = Eigen::MatrixXd::NullaryExpr(n, m, [&] { return gen.normal(); });
    const Eigen::VectorXd lambda = Eigen::VectorXd::NullaryExpr(m, [&] { return gen.uniform(0.01, 3.0); });
    const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(n, [&] { return gen.normal(); });
    const double sn2 = gen.uniform(0.05, 2.0);
    Eigen::MatrixXd cov = phi * lambda.asDiagonal() * phi.transpose();
    cov.diagonal().array() += sn2;
    const double expected =
        0.5 * y.dot(cov.fullPivLu().solve(y)) + 0.5 * std::log(cov.determinant()) + 0.5 * n * log_2pi;
    for (auto route : {NlmlRoute::Primal, NlmlRoute::Dual})
      EXPECT_NEAR(reduced_rank_nlml(phi, lambda, y, sn2, route), expected, 1e-8 * std::max(1.0, std::abs(expected)));
  }
}

TEST(ReducedRankNlml, ZeroTargetsLeaveOnlyDeterminantTerms) {
  const Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(2, 2.0);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  // Covariance (2 + 3) I: 1/2 * 2 log 5 + log 2 pi.
  EXPECT_NEAR(reduced_rank_nlml(phi, lambda, y, 3.0), std::log(5.0) + log_2pi, 1e-12);
}

TEST(ConstrainedGP, NoDataGivesReducedRankPrior) {
  const auto basis = std::make_shared<laplace::IntervalEigenbasis>(1.0, 200, 32, laplace::BoundaryCondition::NeumannZero);
  const Hyperparams hyper = matern_hyper(1.5, 0.2, 0.1);
  const ConstrainedGP gp({}, hyper, basis);
  const Points xs = on_line({0.1, 0.5, 0.93});
  const auto p = gp.predict(xs);
  const Eigen::MatrixXd phi = basis->evaluate(xs);
  const Eigen::VectorXd lambda = basis_weights(hyper.kernel, *basis);
  const Eigen::VectorXd prior = (phi * lambda.asDiagonal() * phi.transpose()).diagonal();
  EXPECT_EQ(p.mean.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((p.variance - prior).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ConstrainedGP, AgreesWithStandardAwayFromBoundary) {
  // Training and test points stay two lengthscales clear of the ends.
  const TrainingSet data = interval_data(40, 0.1, 41, 0.2);
  const Hyperparams hyper = matern_hyper(1.0, 0.1, 0.01);
  const StandardGP standard(data, hyper);
  Points xs;
  for (double x = 0.2; x <= 0.8 + 1e-12; x += 0.01) xs.push_back({x, 0.0});
  const auto reference = standard.predict(xs);

  double previous = 1e300;
  for (int m : {16, 64, 256}) {
    const auto basis = std::make_shared<laplace::IntervalEigenbasis>(1.0, 1024, m, laplace::BoundaryCondition::NeumannZero);
    const ConstrainedGP constrained(data, hyper, basis);
    const double disagreement = rms(constrained.predict(xs).mean - reference.mean);
    if (m >= 64) {
      EXPECT_LT(disagreement, 0.05 * std::sqrt(hyper.kernel.signal_variance)) << "m=" << m;
      EXPECT_LT(std::abs(constrained.nlml() - standard.nlml()) / std::abs(standard.nlml()), 0.05) << "m=" << m;
    }
    EXPECT_LE(disagreement, previous) << "m=" << m;
    previous = disagreement;
  }
}

TEST(ConstrainedGP, RoutesAgreeOnPlate) {
  const auto basis = testing_support::plate_basis();
  Gen gen(43);
  TrainingSet data;
  const auto cells = basis->mask().ones();
  for (int k = 0; k < 80; ++k) {
    const auto& c = cells[static_cast<std::size_t>(k) * 23 % cells.size()];
    data.x.push_back(basis->mask().center(c));
  }
  data.y = Eigen::VectorXd::NullaryExpr(80, [&] { return gen.normal(); });
  for (auto family : {Family::Matern32, Family::SquaredExponential}) {
    const ConstrainedGP gp(data, {{family, 1.0, 40.0}, 0.05}, basis);
    const double primal = gp.nlml(NlmlRoute::Primal), dual = gp.nlml(NlmlRoute::Dual);
    EXPECT_NEAR(primal, dual, 1e-8 * std::abs(primal));
    const auto p = gp.predict(data.x);
    EXPECT_TRUE(p.mean.allFinite());
    EXPECT_GE(p.variance.minCoeff(), 0.0);
    EXPECT_LT(rms(p.mean - data.y), rms(data.y));
  }
}

TEST(ConstrainedGP, NeumannMeanIsFlatAtTheEnds) {
  const TrainingSet data = interval_data(30, 0.05, 47);
  const auto basis = std::make_shared<laplace::IntervalEigenbasis>(1.0, 512, 64, laplace::BoundaryCondition::NeumannZero);
  const ConstrainedGP gp(data, matern_hyper(1.0, 0.2, 0.01), basis);
  const double h = basis->step();
  const Points ends = on_line({0.0, h / 2, 1.0, 1.0 - h / 2});
  const auto p = gp.predict(ends);
  const double bound = 1e-2 * p.mean.cwiseAbs().maxCoeff() / 0.2;
  EXPECT_LT(std::abs(p.mean[1] - p.mean[0]) / (h / 2), bound);
  EXPECT_LT(std::abs(p.mean[3] - p.mean[2]) / (h / 2), bound);
}

TEST(Objectives, MatchModelNlml) {
  const TrainingSet data = interval_data(25, 0.1, 53);
  const auto basis = std::make_shared<laplace::IntervalEigenbasis>(1.0, 256, 48, laplace::BoundaryCondition::NeumannZero);
  const StandardObjective standard(data, Family::Matern32);
  const ConstrainedObjective constrained(data, *basis, Family::Matern32);
  const std::vector<double> theta{std::log(0.8), std::log(0.15), std::log(0.02)};
  const Hyperparams hyper = hyperparams_from_log(theta, Family::Matern32);
  EXPECT_NEAR(hyper.kernel.lengthscale, 0.15, 1e-15);
  EXPECT_NEAR(standard(theta), StandardGP(data, hyper).nlml(), 1e-9);
  EXPECT_NEAR(constrained(theta), ConstrainedGP(data, hyper, basis).nlml(), 1e-9);
}

TEST(Objectives, CentralDifferencesFollowTheSecantTrend) {
  const TrainingSet data = interval_data(25, 0.1, 59);
  const auto basis = std::make_shared<laplace::IntervalEigenbasis>(1.0, 256, 48, laplace::BoundaryCondition::NeumannZero);
  const StandardObjective standard(data, Family::Matern32);
  const ConstrainedObjective constrained(data, *basis, Family::Matern32);
  Gen gen(61);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<double> theta{gen.uniform(-1.0, 1.0), gen.uniform(-2.5, -1.0), gen.uniform(-5.0, -2.0)};
    for (int d = 0; d < 3; ++d) {
      for (const auto* f : {static_cast<const void*>(&standard), static_cast<const void*>(&constrained)}) {
        auto eval = [&](double delta) {
          std::vector<double> t = theta;
          t[d] += delta;
          return f == &standard ? standard(t) : constrained(t);
        };
        const double central = (eval(1e-5) - eval(-1e-5)) / 2e-5;
        const double secant = (eval(1e-2) - eval(-1e-2)) / 2e-2;
        if (std::abs(secant) < 1e-3) continue;
        EXPECT_GT(central * secant, 0.0);
        EXPECT_LT(std::abs(central - secant), 0.2 * std::abs(secant));
      }
    }
  }
}

TEST(TargetTransform, CentresAndScales) {
  const Eigen::VectorXd y = vec({1.0, 3.0, 5.0});
  const auto plain = TargetTransform::fit(y, false, false);
  EXPECT_EQ(plain.offset, 0.0);
  EXPECT_EQ(plain.scale, 1.0);
  const auto t = TargetTransform::fit(y, true, true);
  EXPECT_DOUBLE_EQ(t.offset, 3.0);
  EXPECT_DOUBLE_EQ(t.scale, std::sqrt(8.0 / 3.0));
  const Eigen::VectorXd z = t.forward(y);
  EXPECT_NEAR(z.mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.squaredNorm() / 3.0, 1.0, 1e-15);
  PredictiveDistribution p{z, Eigen::VectorXd::Ones(3), 0};
  const auto back = t.inverse(p);
  EXPECT_LT((back.mean - y).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(back.variance[0], 8.0 / 3.0, 1e-14);
  EXPECT_EQ(TargetTransform::fit(vec({2.0, 2.0}), true, true).scale, 1.0);
}

TEST(Fit, RecoversHyperparametersOfAGpDraw) {
  Gen gen(67);
  const int n = 200;
  TrainingSet data;
  for (int k = 0; k < n; ++k) data.x.push_back({gen.uniform(0.0, 200.0), gen.uniform(0.0, 200.0)});
  Eigen::MatrixXd K = kernels::covariance({Family::Matern32, 1.0, 20.0}, data.x, data.x);
  K.diagonal().array() += 0.01;
  const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(n, [&] { return gen.normal(); });
  data.y = Eigen::LLT<Eigen::MatrixXd>(K).matrixL() * z;

  FitOptions options;
  options.qpso.swarm = 20;
  options.qpso.iterations = 60;
  options.qpso.seed = 71;
  const auto model = fit(ModelKind::Standard, data, nullptr, options);
  const auto& h = model.hyperparams();
  EXPECT_LT(std::abs(std::log(h.kernel.signal_variance / 1.0)), std::log(2.0)) << h.kernel.signal_variance;
  EXPECT_LT(std::abs(std::log(h.kernel.lengthscale / 20.0)), std::log(2.0)) << h.kernel.lengthscale;
  EXPECT_LT(std::abs(std::log(h.noise_variance / 0.01)), std::log(2.0)) << h.noise_variance;
  EXPECT_EQ(model.kind(), ModelKind::Standard);
  EXPECT_EQ(model.trace().size(), 60u);
}

TEST(Fit, ConstantTargetsDriveSignalVarianceDown) {
  TrainingSet data;
  for (int k = 0; k < 20; ++k) data.x.push_back({5.0 * k, 3.0 * (k % 4)});
  data.y = Eigen::VectorXd::Constant(20, 0.5);
  FitOptions options;
  options.center_targets = true;
  options.normalize_targets = true;
  options.qpso.swarm = 20;
  options.qpso.iterations = 60;
  const auto model = fit(ModelKind::Standard, data, nullptr, options);
  EXPECT_LT(std::log(model.hyperparams().kernel.signal_variance), options.bounds.log_signal_variance.lower + 1.0);
  EXPECT_TRUE(std::isfinite(model.nlml()));
  const auto p = model.predict(data.x);
  EXPECT_LT((p.mean.array() - 0.5).abs().maxCoeff(), 1e-6);
}

TEST(Fit, SinglePointAndEmptySet) {
  FitOptions options;
  options.qpso.swarm = 10;
  options.qpso.iterations = 20;
  const TrainingSet one{on_line({3.0}), vec({0.4})};
  EXPECT_TRUE(std::isfinite(fit(ModelKind::Standard, one, nullptr, options).nlml()));
  const auto basis = std::make_shared<laplace::IntervalEigenbasis>(10.0, 100, 16, laplace::BoundaryCondition::NeumannZero);
  EXPECT_TRUE(std::isfinite(fit(ModelKind::Constrained, one, basis, options).nlml()));
  EXPECT_THROW(fit(ModelKind::Standard, TrainingSet{}, nullptr, options), EmptyTrainingSet);
  EXPECT_THROW(fit(ModelKind::Constrained, one, nullptr, options), InvalidArgument);
}

TEST(Fit, SameSeedSameModel) {
  const TrainingSet data = interval_data(30, 0.1, 73);
  const auto basis = std::make_shared<laplace::IntervalEigenbasis>(1.0, 256, 32, laplace::BoundaryCondition::NeumannZero);
  FitOptions options;
  options.qpso.swarm = 10;
  options.qpso.iterations = 30;
  options.qpso.seed = 5;
  options.qpso.bounds.clear();
  options.bounds.log_lengthscale = {std::log(0.01), std::log(2.0)};
  const auto a = fit(ModelKind::Constrained, data, basis, options);
  options.qpso.threads = 3;
  const auto b = fit(ModelKind::Constrained, data, basis, options);
  EXPECT_EQ(a.trace(), b.trace());
  EXPECT_EQ(a.hyperparams().kernel.lengthscale, b.hyperparams().kernel.lengthscale);
}

TEST(FittedModel, PredictsInOriginalUnits) {
  const TrainingSet data = interval_data(20, 0.05, 79);
  TrainingSet scaled = data;
  scaled.y = 1e-4 * data.y.array() + 2e-3;
  const auto t = TargetTransform::fit(scaled.y, true, true);
  const auto model = make_model(ModelKind::Standard, scaled, matern_hyper(1.0, 0.2, 0.01), nullptr, t);
  const auto direct = StandardGP({scaled.x, t.forward(scaled.y)}, matern_hyper(1.0, 0.2, 0.01)).predict(data.x, true);
  const auto p = model.predict(data.x, true);
  EXPECT_LT((p.mean - (direct.mean.array() * t.scale + t.offset).matrix()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((p.variance - direct.variance * t.scale * t.scale).cwiseAbs().maxCoeff(), 1e-20);
  EXPECT_LT((model.training_data().y - scaled.y).cwiseAbs().maxCoeff(), 1e-17);
  EXPECT_EQ(to_string(ModelKind::Constrained), std::string("constrained"));
  EXPECT_EQ(model_kind_from_string("standard"), ModelKind::Standard);
}
