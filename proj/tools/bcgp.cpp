// bcgp: command-line front end for the boundary-constrained GP library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bcgp/errors.hpp"
#include "bcgp/experiment.hpp"

namespace fs = std::filesystem;
using namespace bcgp;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string eigencache;
};

struct DomainOptions {
  std::string geometry;
  std::optional<double> h;
  std::optional<int> m;
  std::string bc;
};

void add_domain_options(CLI::App* cmd, DomainOptions& d, bool with_basis) {
  cmd->add_option("--geometry", d.geometry, "Geometry JSON (default: built-in plate)");
  cmd->add_option("--h-mm", d.h, "Grid step in mm");
  if (with_basis) {
    cmd->add_option("--m", d.m, "Number of eigenpairs");
    cmd->add_option("--bc", d.bc, "Boundary condition: neumann or dirichlet");
  }
}

experiment::ExperimentConfig make_config(const GlobalOptions& g, const DomainOptions& d) {
  experiment::ExperimentConfig c = g.config.empty() ? experiment::ExperimentConfig{} : experiment::load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out = g.out;
  if (!g.eigencache.empty()) c.eigencache = fs::path(g.eigencache);
  if (!d.geometry.empty()) c.geometry = fs::path(d.geometry);
  if (d.h) c.h_mm = *d.h;
  if (d.m) c.m = *d.m;
  if (!d.bc.empty()) c.bc = laplace::boundary_from_string(d.bc);
  c.validate();
  return c;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out.precision(17);
  return out;
}

std::vector<int> all_pairs() {
  std::vector<int> pairs;
  for (int k = 1; k <= synth::kPairCount; ++k) pairs.push_back(k);
  return pairs;
}

fs::path model_path(const fs::path& dir, gp::ModelKind kind, int pair) {
  return dir / ("model-" + std::string(gp::to_string(kind)) + "-pair-" + std::to_string(pair) + ".json");
}

experiment::BasisReference basis_reference(const experiment::ExperimentConfig& c, const geometry::GridMask& mask) {
  experiment::BasisReference ref;
  if (c.geometry) ref.geometry = fs::absolute(*c.geometry);
  ref.h_mm = c.h_mm;
  ref.m = c.m;
  ref.bc = c.bc;
  ref.mask_hash = mask.hash();
  if (c.eigencache) ref.eigencache = fs::absolute(*c.eigencache);
  return ref;
}

Eigen::VectorXd parse_observed(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');) {
    if (tok.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    values.push_back(std::stod(tok));
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-constrained reduced-rank GP regression of acoustic-emission delta-T maps"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Experiment seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--eigencache", g.eigencache, "Eigenbasis cache file");

  // rasterize
  DomainOptions rast_d;
  auto* rast = app.add_subcommand("rasterize", "Rasterise the geometry and write the grid mask");
  add_domain_options(rast, rast_d, false);

  // eig
  DomainOptions eig_d;
  auto* eig = app.add_subcommand("eig", "Solve the Laplacian eigenproblem and write eigenvalues");
  add_domain_options(eig, eig_d, true);

  // synth
  DomainOptions syn_d;
  std::vector<int> syn_pairs;
  auto* syn = app.add_subcommand("synth", "Write synthetic delta-T fields, one CSV per pair");
  add_domain_options(syn, syn_d, false);
  syn->add_option("--pairs", syn_pairs, "Pair indices (default: all 28)")->check(CLI::Range(1, 28));

  // fit
  DomainOptions fit_d;
  std::vector<int> fit_pairs;
  std::string fit_kind = "constrained", fit_mode = "inline", fit_coverage = "full";
  double fit_spacing = 30.0;
  bool fit_fixed = false;
  auto* fit = app.add_subcommand("fit", "Fit pair models to synthetic training data");
  add_domain_options(fit, fit_d, true);
  fit->add_option("--pairs", fit_pairs, "Pair indices (default: all 28)")->check(CLI::Range(1, 28));
  fit->add_option("--model", fit_kind, "standard or constrained");
  auto* spacing_opt = fit->add_option("--spacing", fit_spacing, "Training spacing in mm (default: first config scenario, else 30)");
  auto* mode_opt = fit->add_option("--boundary-mode", fit_mode, "full10, inline or none");
  auto* coverage_opt = fit->add_option("--coverage", fit_coverage, "full or middle");
  fit->add_flag("--no-opt", fit_fixed, "Use the config kernel hyperparameters instead of QPSO");

  // predict
  std::string pred_model;
  bool pred_noise = false;
  auto* pred = app.add_subcommand("predict", "Predict a saved model on every domain cell");
  pred->add_option("--model", pred_model, "Model file")->required()->check(CLI::ExistingFile);
  pred->add_flag("--with-noise", pred_noise, "Report the variance of noisy observations");

  // run
  auto* run = app.add_subcommand("run", "Run the configured scenarios and write metrics");

  // localise
  DomainOptions loc_d;
  std::string loc_models, loc_kind = "constrained", loc_observed, loc_source;
  auto* loc = app.add_subcommand("localise", "Locate a source from 28 observed delta-T values");
  add_domain_options(loc, loc_d, true);
  loc->add_option("--models", loc_models, "Directory with model-<kind>-pair-<k>.json")->required();
  loc->add_option("--model", loc_kind, "standard or constrained");
  auto* obs_opt = loc->add_option("--observed", loc_observed, "28 comma-separated delta-T values (s)");
  loc->add_option("--source", loc_source, "Synthesise observations at x,y (mm) instead")->excludes(obs_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rast) {
      auto c = make_config(g, rast_d);
      const auto w = experiment::Workspace::build(c, false);
      auto out = open_out(c.out / "mask.txt");
      geometry::write_mask(out, w.mask);
      std::cout << w.mask.rows() << " x " << w.mask.cols() << " grid, " << w.mask.count() << " domain cells -> "
                << (c.out / "mask.txt").string() << '\n';
    } else if (*eig) {
      auto c = make_config(g, eig_d);
      const auto w = experiment::Workspace::build(c, true);
      auto out = open_out(c.out / "eigenvalues.csv");
      out << "index,mu_per_mm2\n";
      const auto& mu = w.basis->eigenvalues();
      for (Eigen::Index j = 0; j < mu.size(); ++j) out << j + 1 << ',' << mu[j] << '\n';
      std::cout << mu.size() << " eigenpairs, mu_1 = " << mu[0] << ", mu_m = " << mu[mu.size() - 1] << '\n';
    } else if (*syn) {
      auto c = make_config(g, syn_d);
      const auto w = experiment::Workspace::build(c, false);
      for (int pair : syn_pairs.empty() ? all_pairs() : syn_pairs) {
        const auto path = c.out / "fields" / ("pair-" + std::to_string(pair) + ".csv");
        auto out = open_out(path);
        synth::write_field_csv(out, w.mask, w.arrivals->field(pair).values);
      }
      std::cout << "fields written to " << (c.out / "fields").string() << '\n';
    } else if (*fit) {
      auto c = make_config(g, fit_d);
      const auto kind = gp::model_kind_from_string(fit_kind);
      const auto w = experiment::Workspace::build(c, kind == gp::ModelKind::Constrained);
      // Flags override the first configured scenario.
      synth::ScenarioSpec sc = c.scenarios.empty() ? synth::ScenarioSpec() : c.scenarios.front();
      if (c.scenarios.empty() || spacing_opt->count() > 0) sc.spacing = fit_spacing;
      if (c.scenarios.empty() || mode_opt->count() > 0) sc.boundary_mode = synth::boundary_mode_from_string(fit_mode);
      if (c.scenarios.empty() || coverage_opt->count() > 0) sc.coverage = synth::coverage_from_string(fit_coverage);
      if (c.scenarios.empty()) sc.seed = c.seed;
      sc.pairs.clear();
      for (int pair : fit_pairs.empty() ? all_pairs() : fit_pairs) {
        const auto train = synth::subsample_training(w.arrivals->field(pair), w.mask, sc);
        std::optional<gp::FittedModel> model;
        if (fit_fixed) {
          const auto transform = gp::TargetTransform::fit(train.y, c.center_targets, c.normalize_targets);
          model = gp::make_model(kind, train, {c.kernel, c.noise_variance}, w.basis, transform);
        } else {
          model = gp::fit(kind, train, w.basis, experiment::fit_options(c, experiment::fit_seed(c, sc, pair, kind)));
        }
        experiment::SavedModel saved{*model, std::nullopt, pair};
        if (kind == gp::ModelKind::Constrained) saved.basis = basis_reference(c, w.mask);
        const auto path = model_path(c.out, kind, pair);
        experiment::save_model(path, saved);
        const auto& hp = model->hyperparams();
        std::cout << "pair " << pair << ": n_train=" << train.size() << " sigma_f2=" << hp.kernel.signal_variance
                  << " l=" << hp.kernel.lengthscale << " sigma_n2=" << hp.noise_variance << " nlml=" << model->nlml()
                  << " -> " << path.string() << '\n';
      }
    } else if (*pred) {
      const auto saved = experiment::load_model(pred_model);
      experiment::ExperimentConfig c = g.config.empty() ? experiment::ExperimentConfig{} : experiment::load_config(g.config);
      if (!g.out.empty()) c.out = g.out;
      if (saved.basis) {
        c.geometry = saved.basis->geometry;
        c.h_mm = saved.basis->h_mm;
      }
      const auto w = experiment::Workspace::build(c, false);
      const auto p = saved.model.predict(w.test_points, pred_noise);
      auto out = open_out(c.out / "prediction.csv");
      out << "x_mm,y_mm,mean_s,var_s2\n";
      for (std::size_t q = 0; q < w.test_points.size(); ++q) {
        const auto k = static_cast<Eigen::Index>(q);
        out << w.test_points[q].x << ',' << w.test_points[q].y << ',' << p.mean[k] << ',' << p.variance[k] << '\n';
      }
      std::cout << w.test_points.size() << " predictions -> " << (c.out / "prediction.csv").string() << '\n';
    } else if (*run) {
      auto c = make_config(g, {});
      if (c.scenarios.empty()) throw InvalidArgument("config lists no scenarios");
      const auto rows = experiment::run_scenarios(c);
      std::cout << rows.size() << " metric rows -> " << (c.out / "metrics.csv").string() << '\n';
    } else if (*loc) {
      auto c = make_config(g, loc_d);
      const auto kind = gp::model_kind_from_string(loc_kind);
      const auto w = experiment::Workspace::build(c, kind == gp::ModelKind::Constrained);
      std::vector<gp::FittedModel> models;
      for (int pair = 1; pair <= synth::kPairCount; ++pair) {
        const auto path = model_path(loc_models, kind, pair);
        if (!fs::exists(path)) break;
        models.push_back(experiment::load_model(path, w.basis).model);
      }
      Eigen::VectorXd observed;
      if (!loc_source.empty()) {
        Point s{};
        if (std::sscanf(loc_source.c_str(), "%lf,%lf", &s.x, &s.y) != 2) throw InvalidArgument("--source expects x,y");
        const auto cell = w.mask.locate(s);
        if (!cell) throw PointOutsideDomain(0);
        const auto ones = w.mask.ones();
        const auto idx = std::lower_bound(ones.begin(), ones.end(), *cell) - ones.begin();
        observed.resize(synth::kPairCount);
        for (int pair = 1; pair <= synth::kPairCount; ++pair) observed[pair - 1] = w.arrivals->field(pair).values[idx];
      } else {
        observed = parse_observed(loc_observed);
      }
      const auto r = experiment::localise(models, observed, w.mask);
      std::cout << "x_mm,y_mm,misfit_s2,summed_variance\n"
                << r.position.x << ',' << r.position.y << ',' << r.misfit << ',' << r.summed_variance << '\n';
    }
  } catch (const bcgp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
