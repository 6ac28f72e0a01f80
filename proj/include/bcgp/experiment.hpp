#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcgp/gp.hpp"
#include "bcgp/laplace_eig.hpp"
#include "bcgp/synth.hpp"

namespace bcgp::experiment {

/// Everything `bcgp run` needs, read from a JSON file:
///
///   { "geometry": "plate.json", "h_mm": 5, "m": 256, "bc": "neumann",
///     "kernel": {"family": "matern32", "sigma_f2": 1, "lengthscale_mm": 50},
///     "noise_variance": 0.01, "center_targets": false, "normalize_targets": true,
///     "qpso": {"swarm": 40, "iters": 200, "seed": 0, "ce_start": 1, "ce_end": 0.5},
///     "scenarios": [{"spacing_mm": 30, "boundary_mode": "none", "coverage": "full",
///                    "pairs": [1, 2], "seed": 0}],
///     "wave_speed_mm_s": 5e6, "threads": 1, "seed": 0, "out": "out",
///     "eigencache": "plate.eig" }
///
/// Every key is optional; a missing geometry selects the built-in plate. The kernel
/// block supplies the family and the fixed hyperparameters used by `bcgp fit --no-opt`.
struct ExperimentConfig {
  std::optional<std::filesystem::path> geometry;
  double h_mm = 5.0;
  int m = 256;
  laplace::BoundaryCondition bc = laplace::BoundaryCondition::NeumannZero;
  kernels::KernelSpec kernel{kernels::Family::Matern32, 1.0, 50.0};
  double noise_variance = 1e-2;
  bool center_targets = false;
  bool normalize_targets = true;
  optimize::QpsoConfig qpso;
  std::vector<synth::ScenarioSpec> scenarios;
  double wave_speed = synth::kDefaultWaveSpeed;
  int threads = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> eigencache;

  /// Throws InvalidArgument for bad values or a geometry file that does not exist.
  void validate() const;
};

/// Relative paths inside the file resolve against `base_dir`.
ExperimentConfig config_from_json_text(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& config);

/// Domain, basis and synthetic truth shared by every fit of an experiment.
struct Workspace {
  synth::Plate plate;
  geometry::GridMask mask;
  std::shared_ptr<const laplace::Eigenbasis> basis;
  std::shared_ptr<const synth::ArrivalTimes> arrivals;
  Points test_points;  // every 1-cell centre

  /// Loads or rasterises the plate; the eigenbasis is built only when `with_basis`.
  static Workspace build(const ExperimentConfig& config, bool with_basis = true);
};

gp::FitOptions fit_options(const ExperimentConfig& config, std::uint64_t seed);

/// QPSO seed for one fit, mixed from the experiment, QPSO and scenario seeds.
std::uint64_t fit_seed(const ExperimentConfig& config, const synth::ScenarioSpec& scenario, int pair, gp::ModelKind kind);

struct MetricsRow {
  int pair_index = 0;
  double spacing_mm = 0.0;
  synth::BoundaryMode boundary_mode = synth::BoundaryMode::InlineWithGrid;
  synth::Coverage coverage = synth::Coverage::Full;
  gp::ModelKind model = gp::ModelKind::Standard;
  double nmse = 0.0;
  double msll = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

inline constexpr const char* kMetricsHeader = "pair_index,spacing_mm,boundary_mode,coverage,model,nmse,msll,n_train,n_test";
std::string to_csv_line(const MetricsRow& row);

/// Fits both models for every scenario and pair, predicts on all 1-cells and writes
///   out/<scenario-id>/metrics.csv, out/<scenario-id>/pair-<k>-sqerr-diff.csv
/// (standard minus constrained squared error per cell) and out/metrics.csv.
/// Output is byte-identical for identical configs, whatever the thread count.
std::vector<MetricsRow> run_scenarios(const ExperimentConfig& config);
/// Same with a prepared workspace; writes nothing when `write` is false.
std::vector<MetricsRow> run_scenarios(const ExperimentConfig& config, const Workspace& workspace, bool write = true);

// Models on disk.

inline constexpr int kModelVersion = 1;

/// How to rebuild the eigenbasis of a saved constrained model.
struct BasisReference {
  std::optional<std::filesystem::path> geometry;  // nullopt = built-in plate
  double h_mm = 5.0;
  int m = 256;
  laplace::BoundaryCondition bc = laplace::BoundaryCondition::NeumannZero;
  std::uint64_t mask_hash = 0;
  std::optional<std::filesystem::path> eigencache;
};

struct SavedModel {
  gp::FittedModel model;
  std::optional<BasisReference> basis;  // constrained models only
  int pair = 0;                         // 0 when not tied to a sensor pair
};

std::string model_to_json_text(const SavedModel& saved);
void save_model(const std::filesystem::path& path, const SavedModel& saved);
/// Rebuilds the GP from the stored hyperparameters and inline training data. A
/// constrained model reuses `basis` when given (after checking its mask hash),
/// otherwise it reloads or recomputes the referenced eigenbasis.
SavedModel load_model(const std::filesystem::path& path, std::shared_ptr<const laplace::Eigenbasis> basis = nullptr);
SavedModel model_from_json_text(const std::string& text, std::shared_ptr<const laplace::Eigenbasis> basis = nullptr);

// Localisation.

struct Localisation {
  geometry::Cell cell;
  Point position;
  std::size_t index = 0;  // into mask.ones()
  double misfit = 0.0;    // sum over pairs of (observed - mean)^2, seconds^2
  double summed_variance = 0.0;
};

/// Exhaustive argmin over the 1-cells of sum_k (observed_k - mean_k(x))^2 with
/// models[k] the map of pair k + 1. Ties go to the smaller summed predictive
/// variance, then the lower cell index. Throws MissingModel unless 28 models and
/// 28 observations are given.
Localisation localise(std::span<const gp::FittedModel> models, const Eigen::VectorXd& observed,
                      const geometry::GridMask& mask);

/// Same search over precomputed per-pair predictions on mask.ones().
Localisation localise(std::span<const gp::PredictiveDistribution> predictions, const Eigen::VectorXd& observed,
                      const geometry::GridMask& mask);

}  // namespace bcgp::experiment
