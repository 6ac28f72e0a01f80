#include "bcgp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>

#include "bcgp/errors.hpp"
#include "json.hpp"

namespace bcgp::synth {

using geometry::Cell;
using geometry::GridMask;

std::pair<int, int> SensorArray::pair(int index) {
  if (index < 1 || index > kPairCount) throw InvalidArgument("pair index must be in 1..28");
  int k = 1;
  for (int a = 1; a <= kSensorCount; ++a) {
    for (int b = a + 1; b <= kSensorCount; ++b, ++k) {
      if (k == index) return {a, b};
    }
  }
  throw InvalidArgument("pair index must be in 1..28");
}

int SensorArray::pair_index(int a, int b) {
  if (a > b) std::swap(a, b);
  if (a < 1 || b > kSensorCount || a == b) throw InvalidArgument("sensor pair must be two distinct sensors in 1..8");
  // pairs before sensor a: sum over s < a of (8 - s)
  int before = 0;
  for (int s = 1; s < a; ++s) before += kSensorCount - s;
  return before + (b - a);
}

void SensorArray::validate(const GridMask& mask) const {
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (!mask.locate(positions[k])) {
      throw InvalidArgument("sensor " + std::to_string(k + 1) + " lies outside the domain");
    }
  }
}

Plate plate_preset() {
  using geometry::Circle;
  using geometry::Rect;
  Plate plate;
  plate.geometry.width = 200.0;
  plate.geometry.height = 370.0;
  plate.geometry.holes = {
      Circle{{55, 290}, 30}, Circle{{150, 300}, 25}, Circle{{155, 185}, 25}, Circle{{35, 110}, 15},
      Circle{{170, 40}, 15}, Rect{{30, 170}, {110, 220}}, Rect{{60, 60}, {150, 110}},
  };
  plate.sensors.positions = {Point{175, 20}, Point{115, 20}, Point{15, 240}, Point{185, 140},
                             Point{15, 140}, Point{60, 350}, Point{120, 350}, Point{185, 240}};
  return plate;
}

Plate load_plate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open geometry file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  Plate plate;
  plate.geometry = geometry::geometry_from_json_text(text);
  plate.sensors = plate_preset().sensors;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.contains("sensors")) {
      const auto& s = doc.at("sensors");
      if (!s.is_array() || s.size() != kSensorCount) throw InvalidArgument("sensors must list eight [x, y] pairs");
      for (std::size_t k = 0; k < kSensorCount; ++k) {
        plate.sensors.positions[k] = {s[k].at(0).get<double>(), s[k].at(1).get<double>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed sensors: ") + e.what());
  }
  return plate;
}

std::string plate_to_json_text(const Plate& plate) {
  auto doc = nlohmann::json::parse(geometry::geometry_to_json_text(plate.geometry));
  doc["sensors"] = nlohmann::json::array();
  for (const auto& p : plate.sensors.positions) doc["sensors"].push_back({p.x, p.y});
  return doc.dump(2);
}

std::vector<double> geodesic_distance_field(const GridMask& mask, const Point& source) {
  const auto start = mask.locate(source);
  if (!start) throw PointOutsideDomain(0);

  const int rows = mask.rows();
  const int cols = mask.cols();
  const auto flat = [cols](int i, int j) { return static_cast<std::size_t>(i) * cols + j; };

  // Path lengths in units of h, scaled once at the end so straight runs stay exact.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(rows) * cols, inf);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[flat(start->i, start->j)] = 0.0;
  queue.push({0.0, flat(start->i, start->j)});

  static constexpr int di[] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int dj[] = {0, 0, 1, -1, 1, -1, 1, -1};
  const double diag = std::sqrt(2.0);

  while (!queue.empty()) {
    const auto [d, idx] = queue.top();
    queue.pop();
    if (d > dist[idx]) continue;
    const int i = static_cast<int>(idx / cols);
    const int j = static_cast<int>(idx % cols);
    for (int k = 0; k < 8; ++k) {
      const int ni = i + di[k];
      const int nj = j + dj[k];
      if (!mask.at(ni, nj)) continue;
      const bool diagonal = k >= 4;
      if (diagonal && !(mask.at(ni, j) && mask.at(i, nj))) continue;
      const double nd = d + (diagonal ? diag : 1.0);
      const std::size_t nidx = flat(ni, nj);
      if (nd < dist[nidx]) {
        dist[nidx] = nd;
        queue.push({nd, nidx});
      }
    }
  }

  std::vector<double> out;
  out.reserve(mask.count());
  for (const auto& c : mask.ones()) out.push_back(dist[flat(c.i, c.j)] * mask.step());
  return out;
}

ArrivalTimes::ArrivalTimes(const GridMask& mask, const SensorArray& sensors, double wave_speed)
    : wave_speed_(wave_speed) {
  if (!(wave_speed > 0.0) || !std::isfinite(wave_speed)) throw InvalidArgument("wave speed must be positive");
  double largest = 0.0;
  for (std::size_t k = 0; k < sensors.positions.size(); ++k) {
    std::vector<double> d;
    try {
      d = geodesic_distance_field(mask, sensors.positions[k]);
    } catch (const PointOutsideDomain&) {
      throw PointOutsideDomain(k);
    }
    Eigen::VectorXd t(static_cast<Eigen::Index>(d.size()));
    for (std::size_t n = 0; n < d.size(); ++n) {
      if (!std::isfinite(d[n])) throw SolverFailure("domain cell unreachable from a sensor");
      t[static_cast<Eigen::Index>(n)] = d[n] / wave_speed;
    }
    largest = std::max(largest, t.size() ? t.maxCoeff() : 0.0);
    times_.push_back(std::move(t));
  }
  // Every time becomes a multiple of a power of two leaving 50 significant bits,
  // so differences and sums of two differences are exact.
  if (largest > 0.0) {
    const double quantum = std::ldexp(1.0, std::ilogb(largest) + 1 - 50);
    for (auto& t : times_) t = (t / quantum).array().round() * quantum;
  }
}

DeltaTField ArrivalTimes::field(int pair) const {
  const auto [a, b] = SensorArray::pair(pair);
  return {pair, wave_speed_, difference(a, b)};
}

DeltaTField delta_t_field(const GridMask& mask, const SensorArray& sensors, int pair, double wave_speed) {
  // All sensors are computed so the quantum matches ArrivalTimes over the same array.
  return ArrivalTimes(mask, sensors, wave_speed).field(pair);
}

const char* to_string(BoundaryMode mode) {
  switch (mode) {
    case BoundaryMode::FullBoundary10mm: return "full10";
    case BoundaryMode::InlineWithGrid: return "inline";
    case BoundaryMode::NoBoundary: return "none";
  }
  return "?";
}

const char* to_string(Coverage coverage) {
  return coverage == Coverage::Full ? "full" : "middle";
}

BoundaryMode boundary_mode_from_string(const std::string& name) {
  if (name == "full10" || name == "full_boundary_10mm") return BoundaryMode::FullBoundary10mm;
  if (name == "inline" || name == "inline_with_grid") return BoundaryMode::InlineWithGrid;
  if (name == "none" || name == "no_boundary") return BoundaryMode::NoBoundary;
  throw InvalidArgument("unknown boundary mode '" + name + "'");
}

Coverage coverage_from_string(const std::string& name) {
  if (name == "full") return Coverage::Full;
  if (name == "middle" || name == "middle_section") return Coverage::MiddleSection;
  throw InvalidArgument("unknown coverage '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw InvalidArgument("spacing must be positive");
  for (int p : pairs) {
    if (p < 1 || p > kPairCount) throw InvalidArgument("pair index must be in 1..28");
  }
}

std::string ScenarioSpec::id() const {
  std::ostringstream key;
  key << std::setprecision(17) << spacing << '|' << to_string(boundary_mode) << '|' << to_string(coverage) << '|'
      << seed;
  for (int p : pairs) key << ',' << p;
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : key.str()) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  std::ostringstream name;
  name << 's' << std::setprecision(6) << spacing << '_' << to_string(boundary_mode) << '_' << to_string(coverage) << '_'
       << std::hex << std::setw(8) << std::setfill('0') << (hash & 0xffffffffULL);
  return name.str();
}

namespace {

// Flags grid indices nearest to the multiples of `spacing` from the origin.
std::vector<bool> lattice(int n, double spacing, double h) {
  std::vector<bool> on(static_cast<std::size_t>(n), false);
  for (int k = 0;; ++k) {
    const long idx = std::lround(k * spacing / h);
    if (idx >= n) break;
    on[static_cast<std::size_t>(idx)] = true;
  }
  return on;
}

}  // namespace

std::vector<Cell> training_cells(const GridMask& mask, const ScenarioSpec& scenario) {
  scenario.validate();
  const double h = mask.step();
  const int rows = mask.rows();
  const int cols = mask.cols();
  const auto row_on = lattice(rows, scenario.spacing, h);
  const auto col_on = lattice(cols, scenario.spacing, h);

  const auto on_edge_lattice = [&](const Cell& c, const std::vector<bool>& r, const std::vector<bool>& q) {
    const bool vertical_edge = c.j == 0 || c.j == cols - 1;
    const bool horizontal_edge = c.i == 0 || c.i == rows - 1;
    return (vertical_edge && r[c.i]) || (horizontal_edge && q[c.j]);
  };

  std::set<Cell> chosen;
  for (const auto& c : mask.ones()) {
    if (row_on[c.i] && col_on[c.j]) chosen.insert(c);
  }
  const auto bnd = geometry::boundary_cells(mask);

  switch (scenario.boundary_mode) {
    case BoundaryMode::FullBoundary10mm: {
      const auto r10 = lattice(rows, 10.0, h);
      const auto c10 = lattice(cols, 10.0, h);
      for (const auto& c : bnd.outer) {
        if (on_edge_lattice(c, r10, c10)) chosen.insert(c);
      }
      for (const auto& c : bnd.inner) {
        if (r10[c.i] && c10[c.j]) chosen.insert(c);
      }
      break;
    }
    case BoundaryMode::InlineWithGrid: break;
    case BoundaryMode::NoBoundary:
      for (const auto& c : bnd.outer) chosen.erase(c);
      for (const auto& c : bnd.inner) chosen.erase(c);
      break;
  }

  std::vector<Cell> out;
  const double y0 = mask.origin().y;
  const double span = (rows - 1) * h;
  const double lo = y0 + span / 3.0;
  const double hi = y0 + 2.0 * span / 3.0;
  for (const auto& c : chosen) {
    if (scenario.coverage == Coverage::MiddleSection) {
      const double y = mask.center(c).y;
      if (y < lo || y > hi) continue;
    }
    out.push_back(c);
  }
  if (out.empty()) throw EmptyTrainingSet("scenario selects no training points");
  return out;
}

gp::TrainingSet subsample_training(const DeltaTField& field, const GridMask& mask, const ScenarioSpec& scenario) {
  if (static_cast<std::size_t>(field.values.size()) != mask.count()) {
    throw InvalidArgument("field does not match the mask");
  }
  const auto cells = training_cells(mask, scenario);
  const auto all = mask.ones();
  gp::TrainingSet set;
  set.y.resize(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto it = std::lower_bound(all.begin(), all.end(), cells[k]);
    set.x.push_back(mask.center(cells[k]));
    set.y[static_cast<Eigen::Index>(k)] = field.values[it - all.begin()];
  }
  return set;
}

Points cell_centers(const GridMask& mask) {
  Points out;
  out.reserve(mask.count());
  for (const auto& c : mask.ones()) out.push_back(mask.center(c));
  return out;
}

void write_field_csv(std::ostream& out, const GridMask& mask, const Eigen::VectorXd& values) {
  if (static_cast<std::size_t>(values.size()) != mask.count()) throw InvalidArgument("field does not match the mask");
  out << "x_mm,y_mm,dt_s\n" << std::setprecision(17);
  Eigen::Index k = 0;
  for (const auto& c : mask.ones()) {
    const auto p = mask.center(c);
    out << p.x << ',' << p.y << ',' << values[k++] << '\n';
  }
}

}  // namespace bcgp::synth
