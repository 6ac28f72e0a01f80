#include "bcgp/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <initializer_list>
#include <sstream>
#include <string_view>
#include <thread>

#include "bcgp/errors.hpp"
#include "bcgp/metrics.hpp"
#include "json.hpp"

namespace bcgp::experiment {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string read_text(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(std::string("cannot open ") + what + " " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

// A misspelt key would otherwise fall back to its default without notice.
void require_known_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw InvalidArgument("unknown config key " + where + item.key());
}

synth::ScenarioSpec scenario_from_json(const json& j) {
  require_known_keys(j, {"spacing_mm", "boundary_mode", "coverage", "pairs", "seed"}, "scenario.");
  synth::ScenarioSpec s;
  s.spacing = j.value("spacing_mm", s.spacing);
  if (j.contains("boundary_mode")) s.boundary_mode = synth::boundary_mode_from_string(j.at("boundary_mode").get<std::string>());
  if (j.contains("coverage")) s.coverage = synth::coverage_from_string(j.at("coverage").get<std::string>());
  if (j.contains("pairs")) s.pairs = j.at("pairs").get<std::vector<int>>();
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

std::vector<int> scenario_pairs(const synth::ScenarioSpec& s) {
  if (!s.pairs.empty()) return s.pairs;
  std::vector<int> all(synth::kPairCount);
  for (int k = 0; k < synth::kPairCount; ++k) all[static_cast<std::size_t>(k)] = k + 1;
  return all;
}

// Re-raises the active exception as the same bcgp type with a context prefix.
[[noreturn]] void rethrow_with_context(const std::string& ctx) {
  try {
    throw;
  } catch (const PointOutsideDomain& e) {
    throw PointOutsideDomain(e.index());
  } catch (const EmptyTrainingSet& e) {
    throw EmptyTrainingSet(ctx + e.what());
  } catch (const IllConditioned& e) {
    throw IllConditioned(ctx + e.what());
  } catch (const OptimizerFailure& e) {
    throw OptimizerFailure(ctx + e.what());
  } catch (const DegenerateTruth& e) {
    throw DegenerateTruth(ctx + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(ctx + e.what());
  } catch (const Error& e) {
    throw Error(ctx + e.what());
  }
}

struct TaskResult {
  std::array<MetricsRow, 2> rows;
  Eigen::VectorXd sqerr_diff;
};

}  // namespace

// Config

void ExperimentConfig::validate() const {
  if (geometry && !std::filesystem::exists(*geometry))
    throw InvalidArgument("geometry file " + geometry->string() + " does not exist");
  if (!(h_mm > 0.0) || !std::isfinite(h_mm)) throw InvalidArgument("h_mm must be positive");
  if (m < 1) throw InvalidArgument("m must be at least 1");
  kernel.validate();
  if (!(noise_variance > 0.0)) throw InvalidArgument("noise_variance must be positive");
  optimize::QpsoConfig search = qpso;  // bounds come from the fit options
  search.bounds = {{0.0, 1.0}};
  search.validate();
  for (const auto& s : scenarios) s.validate();
  if (!(wave_speed > 0.0) || !std::isfinite(wave_speed)) throw InvalidArgument("wave speed must be positive");
  if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

ExperimentConfig config_from_json_text(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    const auto doc = json::parse(text);
    require_known_keys(doc,
                       {"geometry", "h_mm", "m", "bc", "kernel", "noise_variance", "center_targets", "normalize_targets",
                        "qpso", "scenario", "scenarios", "wave_speed_mm_s", "threads", "seed", "out", "eigencache"},
                       "");
    if (doc.contains("geometry") && !doc.at("geometry").is_null())
      c.geometry = resolve(base_dir, doc.at("geometry").get<std::string>());
    c.h_mm = doc.value("h_mm", c.h_mm);
    c.m = doc.value("m", c.m);
    if (doc.contains("bc")) c.bc = laplace::boundary_from_string(doc.at("bc").get<std::string>());
    if (doc.contains("kernel")) {
      const auto& k = doc.at("kernel");
      require_known_keys(k, {"family", "sigma_f2", "lengthscale_mm"}, "kernel.");
      if (k.contains("family")) c.kernel.family = kernels::family_from_string(k.at("family").get<std::string>());
      c.kernel.signal_variance = k.value("sigma_f2", c.kernel.signal_variance);
      c.kernel.lengthscale = k.value("lengthscale_mm", c.kernel.lengthscale);
    }
    c.noise_variance = doc.value("noise_variance", c.noise_variance);
    c.center_targets = doc.value("center_targets", c.center_targets);
    c.normalize_targets = doc.value("normalize_targets", c.normalize_targets);
    if (doc.contains("qpso")) {
      const auto& q = doc.at("qpso");
      require_known_keys(q, {"swarm", "iters", "seed", "ce_start", "ce_end"}, "qpso.");
      c.qpso.swarm = q.value("swarm", c.qpso.swarm);
      c.qpso.iterations = q.value("iters", c.qpso.iterations);
      c.qpso.seed = q.value("seed", c.qpso.seed);
      c.qpso.ce_start = q.value("ce_start", c.qpso.ce_start);
      c.qpso.ce_end = q.value("ce_end", c.qpso.ce_end);
    }
    if (doc.contains("scenario")) c.scenarios.push_back(scenario_from_json(doc.at("scenario")));
    for (const auto& s : doc.value("scenarios", json::array())) c.scenarios.push_back(scenario_from_json(s));
    c.wave_speed = doc.value("wave_speed_mm_s", c.wave_speed);
    c.threads = doc.value("threads", c.threads);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("out")) c.out = resolve(base_dir, doc.at("out").get<std::string>());
    if (doc.contains("eigencache") && !doc.at("eigencache").is_null())
      c.eigencache = resolve(base_dir, doc.at("eigencache").get<std::string>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json_text(read_text(path, "config file"), path.parent_path());
}

std::string config_to_json_text(const ExperimentConfig& c) {
  json doc;
  doc["geometry"] = c.geometry ? json(c.geometry->string()) : json(nullptr);
  doc["h_mm"] = c.h_mm;
  doc["m"] = c.m;
  doc["bc"] = laplace::to_string(c.bc);
  doc["kernel"] = {{"family", kernels::to_string(c.kernel.family)},
                   {"sigma_f2", c.kernel.signal_variance},
                   {"lengthscale_mm", c.kernel.lengthscale}};
  doc["noise_variance"] = c.noise_variance;
  doc["center_targets"] = c.center_targets;
  doc["normalize_targets"] = c.normalize_targets;
  doc["qpso"] = {{"swarm", c.qpso.swarm},
                 {"iters", c.qpso.iterations},
                 {"seed", c.qpso.seed},
                 {"ce_start", c.qpso.ce_start},
                 {"ce_end", c.qpso.ce_end}};
  doc["scenarios"] = json::array();
  for (const auto& s : c.scenarios) {
    doc["scenarios"].push_back({{"spacing_mm", s.spacing},
                                {"boundary_mode", synth::to_string(s.boundary_mode)},
                                {"coverage", synth::to_string(s.coverage)},
                                {"pairs", s.pairs},
                                {"seed", s.seed}});
  }
  doc["wave_speed_mm_s"] = c.wave_speed;
  doc["threads"] = c.threads;
  doc["seed"] = c.seed;
  doc["out"] = c.out.string();
  doc["eigencache"] = c.eigencache ? json(c.eigencache->string()) : json(nullptr);
  return doc.dump(2);
}

// Workspace

Workspace Workspace::build(const ExperimentConfig& config, bool with_basis) {
  config.validate();
  Workspace w;
  w.plate = config.geometry ? synth::load_plate(*config.geometry) : synth::plate_preset();
  w.mask = geometry::rasterize(w.plate.geometry, config.h_mm);
  w.plate.sensors.validate(w.mask);
  if (with_basis)
    w.basis = std::make_shared<const laplace::Eigenbasis>(
        laplace::cached_eigenbasis(w.mask, config.bc, config.m, config.eigencache));
  w.arrivals = std::make_shared<const synth::ArrivalTimes>(w.mask, w.plate.sensors, config.wave_speed);
  w.test_points = synth::cell_centers(w.mask);
  return w;
}

gp::FitOptions fit_options(const ExperimentConfig& config, std::uint64_t seed) {
  gp::FitOptions o;
  o.family = config.kernel.family;
  o.qpso = config.qpso;
  o.qpso.seed = seed;
  o.qpso.threads = 1;
  o.center_targets = config.center_targets;
  o.normalize_targets = config.normalize_targets;
  return o;
}

std::uint64_t fit_seed(const ExperimentConfig& config, const synth::ScenarioSpec& scenario, int pair, gp::ModelKind kind) {
  std::uint64_t s = splitmix(config.seed);
  s = splitmix(s ^ config.qpso.seed);
  s = splitmix(s ^ scenario.seed);
  s = splitmix(s ^ static_cast<std::uint64_t>(pair));
  return splitmix(s ^ static_cast<std::uint64_t>(kind));
}

std::string to_csv_line(const MetricsRow& r) {
  std::ostringstream line;
  line << r.pair_index << ',' << format_double(r.spacing_mm) << ',' << synth::to_string(r.boundary_mode) << ','
       << synth::to_string(r.coverage) << ',' << gp::to_string(r.model) << ',' << format_double(r.nmse) << ','
       << format_double(r.msll) << ',' << r.n_train << ',' << r.n_test;
  return line.str();
}

// Runner

std::vector<MetricsRow> run_scenarios(const ExperimentConfig& config) {
  const Workspace w = Workspace::build(config);
  return run_scenarios(config, w, true);
}

std::vector<MetricsRow> run_scenarios(const ExperimentConfig& config, const Workspace& w, bool write) {
  config.validate();
  if (!w.basis) throw InvalidArgument("workspace has no eigenbasis");

  struct Task {
    std::size_t scenario;
    int pair;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < config.scenarios.size(); ++s)
    for (int p : scenario_pairs(config.scenarios[s])) tasks.push_back({s, p});

  std::vector<TaskResult> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());

  const auto work = [&](std::size_t t) {
    const auto& sc = config.scenarios[tasks[t].scenario];
    const int pair = tasks[t].pair;
    try {
      const synth::DeltaTField field = w.arrivals->field(pair);
      const gp::TrainingSet train = synth::subsample_training(field, w.mask, sc);
      Eigen::VectorXd sqerr[2];
      for (int k = 0; k < 2; ++k) {
        const auto kind = k == 0 ? gp::ModelKind::Standard : gp::ModelKind::Constrained;
        const auto model = gp::fit(kind, train, w.basis, fit_options(config, fit_seed(config, sc, pair, kind)));
        const auto pred = model.predict(w.test_points, true);
        MetricsRow row{pair, sc.spacing, sc.boundary_mode, sc.coverage, kind, 0.0, 0.0, train.size(),
                       w.test_points.size()};
        row.nmse = metrics::nmse(pred.mean, field.values);
        try {
          row.msll = metrics::evaluate(pred, field.values, train.y).msll;
        } catch (const ZeroVariance&) {
          row.msll = std::numeric_limits<double>::quiet_NaN();  // constant training targets
        }
        sqerr[k] = (pred.mean - field.values).array().square().matrix();
        results[t].rows[static_cast<std::size_t>(k)] = row;
      }
      results[t].sqerr_diff = sqerr[0] - sqerr[1];
    } catch (...) {
      try {
        rethrow_with_context("scenario " + sc.id() + " pair " + std::to_string(pair) + ": ");
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), tasks.size());
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i)
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) work(t);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<MetricsRow> rows;
  for (const auto& r : results) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  if (!write) return rows;

  std::ostringstream all;
  all << kMetricsHeader << '\n';
  for (std::size_t s = 0; s < config.scenarios.size(); ++s) {
    const auto dir = config.out / config.scenarios[s].id();
    std::ostringstream table;
    table << kMetricsHeader << '\n';
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].scenario != s) continue;
      for (const auto& row : results[t].rows) {
        table << to_csv_line(row) << '\n';
        all << to_csv_line(row) << '\n';
      }
      std::ostringstream map;
      map << "x_mm,y_mm,sqerr_diff\n";
      for (std::size_t q = 0; q < w.test_points.size(); ++q)
        map << format_double(w.test_points[q].x) << ',' << format_double(w.test_points[q].y) << ','
            << format_double(results[t].sqerr_diff[static_cast<Eigen::Index>(q)]) << '\n';
      write_text(dir / ("pair-" + std::to_string(tasks[t].pair) + "-sqerr-diff.csv"), map.str());
    }
    write_text(dir / "metrics.csv", table.str());
  }
  write_text(config.out / "metrics.csv", all.str());
  return rows;
}

// Models on disk

std::string model_to_json_text(const SavedModel& saved) {
  const auto& model = saved.model;
  const auto& hp = model.hyperparams();
  const auto data = model.training_data();
  json doc;
  doc["version"] = kModelVersion;
  doc["kind"] = gp::to_string(model.kind());
  doc["pair"] = saved.pair;
  doc["hyperparams"] = {{"family", kernels::to_string(hp.kernel.family)},
                        {"sigma_f2", hp.kernel.signal_variance},
                        {"lengthscale_mm", hp.kernel.lengthscale},
                        {"noise_variance", hp.noise_variance}};
  doc["transform"] = {{"offset", model.transform().offset}, {"scale", model.transform().scale}};
  doc["nlml"] = model.nlml();
  json xs = json::array(), ys = json::array(), ts = json::array();
  for (std::size_t k = 0; k < data.size(); ++k) {
    xs.push_back(data.x[k].x);
    ys.push_back(data.x[k].y);
    ts.push_back(data.y[static_cast<Eigen::Index>(k)]);
  }
  doc["training"] = {{"x_mm", xs}, {"y_mm", ys}, {"dt_s", ts}};
  if (saved.basis) {
    const auto& b = *saved.basis;
    std::ostringstream hash;
    hash << std::hex << b.mask_hash;
    doc["basis"] = {{"geometry", b.geometry ? json(b.geometry->string()) : json(nullptr)},
                    {"h_mm", b.h_mm},
                    {"m", b.m},
                    {"bc", laplace::to_string(b.bc)},
                    {"mask_hash", hash.str()},
                    {"eigencache", b.eigencache ? json(b.eigencache->string()) : json(nullptr)}};
  } else {
    doc["basis"] = nullptr;
  }
  return doc.dump(2);
}

void save_model(const std::filesystem::path& path, const SavedModel& saved) { write_text(path, model_to_json_text(saved)); }

SavedModel model_from_json_text(const std::string& text, std::shared_ptr<const laplace::Eigenbasis> basis) {
  try {
    const auto doc = json::parse(text);
    const int version = doc.at("version").get<int>();
    if (version != kModelVersion) throw InvalidArgument("unsupported model version " + std::to_string(version));
    const auto kind = gp::model_kind_from_string(doc.at("kind").get<std::string>());

    const auto& h = doc.at("hyperparams");
    gp::Hyperparams hp;
    hp.kernel.family = kernels::family_from_string(h.at("family").get<std::string>());
    hp.kernel.signal_variance = h.at("sigma_f2").get<double>();
    hp.kernel.lengthscale = h.at("lengthscale_mm").get<double>();
    hp.noise_variance = h.at("noise_variance").get<double>();

    gp::TargetTransform transform;
    transform.offset = doc.at("transform").at("offset").get<double>();
    transform.scale = doc.at("transform").at("scale").get<double>();

    const auto& tr = doc.at("training");
    const auto xs = tr.at("x_mm").get<std::vector<double>>();
    const auto ys = tr.at("y_mm").get<std::vector<double>>();
    const auto ts = tr.at("dt_s").get<std::vector<double>>();
    if (xs.size() != ys.size() || xs.size() != ts.size()) throw InvalidArgument("training arrays differ in length");
    gp::TrainingSet data;
    data.y.resize(static_cast<Eigen::Index>(ts.size()));
    for (std::size_t k = 0; k < xs.size(); ++k) {
      data.x.push_back({xs[k], ys[k]});
      data.y[static_cast<Eigen::Index>(k)] = ts[k];
    }

    std::optional<BasisReference> reference;
    if (kind == gp::ModelKind::Constrained) {
      const auto& b = doc.at("basis");
      BasisReference ref;
      if (!b.at("geometry").is_null()) ref.geometry = b.at("geometry").get<std::string>();
      ref.h_mm = b.at("h_mm").get<double>();
      ref.m = b.at("m").get<int>();
      ref.bc = laplace::boundary_from_string(b.at("bc").get<std::string>());
      ref.mask_hash = std::stoull(b.at("mask_hash").get<std::string>(), nullptr, 16);
      if (b.contains("eigencache") && !b.at("eigencache").is_null()) ref.eigencache = b.at("eigencache").get<std::string>();

      const bool reusable = basis && basis->mask().hash() == ref.mask_hash && basis->boundary() == ref.bc &&
                            basis->size() == ref.m;
      if (!reusable) {
        const auto plate = ref.geometry ? synth::load_plate(*ref.geometry) : synth::plate_preset();
        const auto mask = geometry::rasterize(plate.geometry, ref.h_mm);
        if (mask.hash() != ref.mask_hash) throw InvalidArgument("geometry no longer matches the saved model's mask");
        basis = std::make_shared<const laplace::Eigenbasis>(laplace::cached_eigenbasis(mask, ref.bc, ref.m, ref.eigencache));
      }
      reference = ref;
    }
    const auto rebuilt = gp::make_model(kind, data, hp, basis, transform);
    return {gp::FittedModel(transform, rebuilt.model(), doc.value("nlml", rebuilt.nlml()), {}), reference,
            doc.value("pair", 0)};
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed model file: ") + e.what());
  }
}

SavedModel load_model(const std::filesystem::path& path, std::shared_ptr<const laplace::Eigenbasis> basis) {
  return model_from_json_text(read_text(path, "model file"), std::move(basis));
}

// Localisation

Localisation localise(std::span<const gp::PredictiveDistribution> predictions, const Eigen::VectorXd& observed,
                      const geometry::GridMask& mask) {
  if (predictions.size() != static_cast<std::size_t>(synth::kPairCount))
    throw MissingModel("localisation needs all 28 pair models, got " + std::to_string(predictions.size()));
  if (observed.size() != synth::kPairCount) throw InvalidArgument("observed vector must hold 28 values");
  const auto n = static_cast<Eigen::Index>(mask.count());
  Eigen::VectorXd misfit = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd variance = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const auto& p = predictions[k];
    if (p.mean.size() != n || p.variance.size() != n) throw InvalidArgument("prediction does not cover the mask");
    misfit.array() += (observed[static_cast<Eigen::Index>(k)] - p.mean.array()).square();
    variance += p.variance;
  }
  Eigen::Index best = 0;
  for (Eigen::Index q = 1; q < n; ++q) {
    if (misfit[q] < misfit[best] || (misfit[q] == misfit[best] && variance[q] < variance[best])) best = q;
  }
  const auto cell = mask.ones()[static_cast<std::size_t>(best)];
  return {cell, mask.center(cell), static_cast<std::size_t>(best), misfit[best], variance[best]};
}

Localisation localise(std::span<const gp::FittedModel> models, const Eigen::VectorXd& observed,
                      const geometry::GridMask& mask) {
  if (models.size() != static_cast<std::size_t>(synth::kPairCount))
    throw MissingModel("localisation needs all 28 pair models, got " + std::to_string(models.size()));
  const Points points = synth::cell_centers(mask);
  std::vector<gp::PredictiveDistribution> predictions;
  predictions.reserve(models.size());
  for (const auto& model : models) predictions.push_back(model.predict(points));
  return localise(std::span<const gp::PredictiveDistribution>(predictions), observed, mask);
}

}  // namespace bcgp::experiment
