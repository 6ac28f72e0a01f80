#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bcgp/errors.hpp"
#include "bcgp/experiment.hpp"
#include "support.hpp"

using namespace bcgp;
using namespace bcgp::experiment;
using bcgp::gp::ModelKind;
using bcgp::gp::PredictiveDistribution;
using testing_support::Gen;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bcgp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  c.m = 32;
  c.qpso.swarm = 6;
  c.qpso.iterations = 5;
  c.out = out;
  synth::ScenarioSpec a{40.0, synth::BoundaryMode::InlineWithGrid};
  a.pairs = {3, 15};
  synth::ScenarioSpec b{60.0, synth::BoundaryMode::NoBoundary};
  b.pairs = {3, 15};
  c.scenarios = {a, b};
  return c;
}

const Workspace& small_workspace() {
  static const Workspace ws = Workspace::build(small_config("unused"));
  return ws;
}

std::vector<PredictiveDistribution> flat_predictions(std::size_t cells, double variance) {
  std::vector<PredictiveDistribution> out(synth::kPairCount);
  for (auto& p : out) {
    p.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells));
    p.variance = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cells), variance);
  }
  return out;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = small_config("results");
  c.bc = laplace::BoundaryCondition::DirichletZero;
  c.kernel = {kernels::Family::SquaredExponential, 2.5, 33.0};
  c.noise_variance = 0.003;
  c.center_targets = true;
  c.qpso.seed = 17;
  c.qpso.ce_start = 0.9;
  c.scenarios[1].coverage = synth::Coverage::MiddleSection;
  c.scenarios[1].seed = 4;
  c.threads = 3;
  c.seed = 99;
  c.wave_speed = 3e6;
  const auto back = config_from_json_text(config_to_json_text(c));
  EXPECT_EQ(config_to_json_text(back), config_to_json_text(c));
  EXPECT_EQ(back.bc, c.bc);
  EXPECT_EQ(back.kernel.family, c.kernel.family);
  EXPECT_EQ(back.kernel.lengthscale, 33.0);
  EXPECT_EQ(back.scenarios.size(), 2u);
  EXPECT_EQ(back.scenarios[1].coverage, synth::Coverage::MiddleSection);
  EXPECT_EQ(back.scenarios[1].pairs, (std::vector<int>{3, 15}));
  EXPECT_EQ(back.qpso.swarm, 6);
  EXPECT_EQ(back.threads, 3);
}

TEST(Config, DefaultsAndRelativePaths) {
  const auto dir = scratch("config");
  std::ofstream(dir / "plate.json") << synth::plate_to_json_text(synth::plate_preset());
  std::ofstream(dir / "run.json") << R"({"geometry": "plate.json", "out": "results", "scenario": {"spacing_mm": 50}})";
  const auto c = load_config(dir / "run.json");
  EXPECT_EQ(c.geometry, dir / "plate.json");
  EXPECT_EQ(c.out, dir / "results");
  ASSERT_EQ(c.scenarios.size(), 1u);
  EXPECT_EQ(c.scenarios[0].spacing, 50.0);
  EXPECT_EQ(c.m, 256);
  EXPECT_EQ(c.h_mm, 5.0);
  EXPECT_NO_THROW(c.validate());
  fs::remove_all(dir);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(config_from_json_text("{not json"), InvalidArgument);
  EXPECT_THROW(config_from_json_text(R"({"bc": "robin"})"), InvalidArgument);
  EXPECT_THROW(config_from_json_text(R"({"qpso": {"iterations": 10}})"), InvalidArgument);
  EXPECT_THROW(config_from_json_text(R"({"scenario": {"spacing": 20}})"), InvalidArgument);
  EXPECT_THROW(config_from_json_text(R"({"kernel": {"lengthscale": 20}})"), InvalidArgument);
  EXPECT_THROW(config_from_json_text(R"({"theads": 2})"), InvalidArgument);
  EXPECT_NO_THROW(config_from_json_text(R"({"qpso": {"iters": 10}, "scenario": {"spacing_mm": 20}})"));
  auto c = small_config("x");
  c.m = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config("x");
  c.geometry = "/nonexistent/plate.json";
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small_config("x");
  c.qpso.swarm = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Run, OneRowPerScenarioPairAndModel) {
  const auto dir = scratch("run");
  auto c = small_config(dir / "a");
  const auto rows = run_scenarios(c, small_workspace());
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.pair_index == 3 || r.pair_index == 15);
    EXPECT_TRUE(std::isfinite(r.nmse));
    EXPECT_EQ(r.n_test, small_workspace().mask.count());
    EXPECT_GT(r.n_train, 0u);
  }
  for (const auto& s : c.scenarios) {
    EXPECT_TRUE(fs::exists(dir / "a" / s.id() / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "a" / s.id() / "pair-15-sqerr-diff.csv"));
  }
  const std::string table = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 9);

  c.out = dir / "b";
  c.threads = 4;
  run_scenarios(c, small_workspace());
  EXPECT_EQ(slurp(dir / "b" / "metrics.csv"), table);
  EXPECT_EQ(slurp(dir / "b" / c.scenarios[0].id() / "pair-3-sqerr-diff.csv"),
            slurp(dir / "a" / c.scenarios[0].id() / "pair-3-sqerr-diff.csv"));
  fs::remove_all(dir);
}

TEST(Run, SeedsDifferPerFit) {
  const auto c = small_config("x");
  const auto& s = c.scenarios[0];
  EXPECT_NE(fit_seed(c, s, 3, ModelKind::Standard), fit_seed(c, s, 3, ModelKind::Constrained));
  EXPECT_NE(fit_seed(c, s, 3, ModelKind::Standard), fit_seed(c, s, 4, ModelKind::Standard));
  EXPECT_EQ(fit_seed(c, s, 3, ModelKind::Standard), fit_seed(c, s, 3, ModelKind::Standard));
}

TEST(Models, SaveAndLoadReproducePredictions) {
  const auto& ws = small_workspace();
  const auto c = small_config("x");
  const synth::ScenarioSpec scenario{40.0};
  const auto data = synth::subsample_training(ws.arrivals->field(7), ws.mask, scenario);
  const auto dir = scratch("models");
  for (auto kind : {ModelKind::Standard, ModelKind::Constrained}) {
    const auto fitted = gp::fit(kind, data, ws.basis, fit_options(c, 5));
    SavedModel saved{fitted, std::nullopt, 7};
    if (kind == ModelKind::Constrained) saved.basis = BasisReference{std::nullopt, c.h_mm, c.m, c.bc, ws.mask.hash(), {}};
    const auto path = dir / (std::string(gp::to_string(kind)) + ".json");
    save_model(path, saved);
    const auto back = load_model(path, ws.basis);
    EXPECT_EQ(back.pair, 7);
    EXPECT_EQ(back.model.kind(), kind);
    EXPECT_EQ(back.model.hyperparams().kernel.lengthscale, fitted.hyperparams().kernel.lengthscale);
    const auto a = fitted.predict(ws.test_points), b = back.model.predict(ws.test_points);
    EXPECT_TRUE((a.mean.array() == b.mean.array()).all());
    EXPECT_TRUE((a.variance.array() == b.variance.array()).all());
    EXPECT_EQ(model_to_json_text(back), model_to_json_text(saved));
  }
  auto bad = slurp(dir / "constrained.json");
  const auto hash_at = bad.find("\"mask_hash\"");
  ASSERT_NE(hash_at, std::string::npos);
  const auto quote = bad.find('"', bad.find(':', hash_at) + 1);
  bad[quote + 1] = bad[quote + 1] == '0' ? '1' : '0';
  EXPECT_THROW(model_from_json_text(bad, ws.basis), InvalidArgument);
  fs::remove_all(dir);
}

TEST(Localise, ExhaustiveArgminOverCells) {
  const auto& mask = testing_support::plate_mask();
  const std::size_t n = mask.count();
  Gen gen(13);
  for (int trial = 0; trial < 5; ++trial) {
    auto predictions = flat_predictions(n, 1.0);
    for (auto& p : predictions) p.mean = Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(n), [&] { return gen.normal(); });
    const Eigen::VectorXd observed = Eigen::VectorXd::NullaryExpr(28, [&] { return gen.normal(); });
    const auto found = localise(std::span<const PredictiveDistribution>(predictions), observed, mask);
    double best = 1e300;
    std::size_t best_index = 0;
    for (std::size_t q = 0; q < n; ++q) {
      double s = 0.0;
      for (int k = 0; k < 28; ++k) s += std::pow(observed[k] - predictions[static_cast<std::size_t>(k)].mean[static_cast<Eigen::Index>(q)], 2);
      if (s < best) best = s, best_index = q;
    }
    EXPECT_EQ(found.index, best_index);
    EXPECT_NEAR(found.misfit, best, 1e-12);
    EXPECT_EQ(found.cell, mask.ones()[best_index]);
    EXPECT_EQ(found.position, mask.center(found.cell));
  }
}

TEST(Localise, TiesPreferLowerVarianceThenLowerIndex) {
  const auto& mask = testing_support::plate_mask();
  const std::size_t n = mask.count();
  const Eigen::VectorXd observed = Eigen::VectorXd::Zero(28);
  auto predictions = flat_predictions(n, 1.0);
  EXPECT_EQ(localise(std::span<const PredictiveDistribution>(predictions), observed, mask).index, 0u);
  predictions[4].variance[100] = 0.5;
  EXPECT_EQ(localise(std::span<const PredictiveDistribution>(predictions), observed, mask).index, 100u);
}

TEST(Localise, NeedsAllPairs) {
  const auto& mask = testing_support::plate_mask();
  auto predictions = flat_predictions(mask.count(), 1.0);
  predictions.pop_back();
  EXPECT_THROW(localise(std::span<const PredictiveDistribution>(predictions), Eigen::VectorXd::Zero(28), mask), MissingModel);
  const std::vector<gp::FittedModel> none;
  EXPECT_THROW(localise(std::span<const gp::FittedModel>(none), Eigen::VectorXd::Zero(28), mask), MissingModel);
  auto full = flat_predictions(mask.count(), 1.0);
  EXPECT_THROW(localise(std::span<const PredictiveDistribution>(full), Eigen::VectorXd::Zero(27), mask), InvalidArgument);
}

TEST(Localise, RecoversSourceFromExactFields) {
  const auto& ws = small_workspace();
  Gen gen(19);
  const auto cells = ws.mask.ones();
  std::vector<PredictiveDistribution> truth(synth::kPairCount);
  for (int p = 1; p <= synth::kPairCount; ++p) {
    truth[static_cast<std::size_t>(p - 1)].mean = ws.arrivals->field(p).values;
    truth[static_cast<std::size_t>(p - 1)].variance = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells.size()));
  }
  for (int t = 0; t < 10; ++t) {
    const auto q = static_cast<std::size_t>(gen.integer(0, static_cast<int>(cells.size()) - 1));
    Eigen::VectorXd observed(28);
    for (int p = 0; p < 28; ++p) observed[p] = truth[static_cast<std::size_t>(p)].mean[static_cast<Eigen::Index>(q)];
    const auto found = localise(std::span<const PredictiveDistribution>(truth), observed, ws.mask);
    EXPECT_EQ(found.misfit, 0.0);
    EXPECT_EQ(found.index, q);
  }
}
