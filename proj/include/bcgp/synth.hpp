#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bcgp/geometry.hpp"
#include "bcgp/gp.hpp"

namespace bcgp::synth {

inline constexpr int kSensorCount = 8;
inline constexpr int kPairCount = 28;
inline constexpr double kDefaultWaveSpeed = 5.0e6;  // mm/s

/// Eight sensors and the pair numbering 1..28 in lexicographic order
/// (1 = sensors 1-2, 2 = 1-3, ..., 28 = 7-8).
struct SensorArray {
  std::array<Point, kSensorCount> positions{};

  /// 1-based sensors (a, b), a < b, of a 1-based pair index.
  static std::pair<int, int> pair(int index);
  static int pair_index(int a, int b);

  /// Throws InvalidArgument if a sensor is outside the masked domain.
  void validate(const geometry::GridMask& mask) const;
};

struct Plate {
  geometry::DomainGeometry geometry;
  SensorArray sensors;
};

/// 200 x 370 mm plate with seven holes and eight edge-mounted sensors. The layout
/// is an approximation drawn from a schematic, not measured coordinates.
Plate plate_preset();

/// Geometry file with an optional `sensors: [[x, y], ...]` array (eight entries);
/// sensors default to the preset ones.
Plate load_plate(const std::filesystem::path& path);
std::string plate_to_json_text(const Plate& plate);

/// Shortest in-domain path length (mm) from the cell containing `source` to every
/// 1-cell, in mask.ones() order. Paths move between 8-connected 1-cells at cost h
/// or sqrt(2) h; diagonal moves need both side cells in the domain.
/// Throws PointOutsideDomain if the source is not in the domain.
std::vector<double> geodesic_distance_field(const geometry::GridMask& mask, const Point& source);

/// Difference in arrival time for one sensor pair over the 1-cells (mask.ones() order).
struct DeltaTField {
  int pair = 1;
  double wave_speed = kDefaultWaveSpeed;
  Eigen::VectorXd values;  // seconds
};

/// Per-sensor arrival times t = d_geo / c, rounded to a shared dyadic quantum so
/// that pair differences compose exactly: dt(a,b) + dt(b,c) == dt(a,c).
class ArrivalTimes {
 public:
  ArrivalTimes(const geometry::GridMask& mask, const SensorArray& sensors, double wave_speed = kDefaultWaveSpeed);

  const Eigen::VectorXd& arrival(int sensor) const { return times_.at(static_cast<std::size_t>(sensor - 1)); }
  /// arrival(a) - arrival(b) for 1-based sensors.
  Eigen::VectorXd difference(int a, int b) const { return arrival(a) - arrival(b); }
  DeltaTField field(int pair) const;
  double wave_speed() const noexcept { return wave_speed_; }

 private:
  std::vector<Eigen::VectorXd> times_;
  double wave_speed_;
};

/// Single-pair convenience over ArrivalTimes.
DeltaTField delta_t_field(const geometry::GridMask& mask, const SensorArray& sensors, int pair,
                          double wave_speed = kDefaultWaveSpeed);

enum class BoundaryMode { FullBoundary10mm, InlineWithGrid, NoBoundary };
enum class Coverage { Full, MiddleSection };

const char* to_string(BoundaryMode mode);
const char* to_string(Coverage coverage);
BoundaryMode boundary_mode_from_string(const std::string& name);
Coverage coverage_from_string(const std::string& name);

inline constexpr std::array<double, 9> kTableSpacings{10, 15, 20, 25, 30, 40, 50, 60, 70};

struct ScenarioSpec {
  double spacing = 30.0;  // mm
  BoundaryMode boundary_mode = BoundaryMode::InlineWithGrid;
  Coverage coverage = Coverage::Full;
  std::vector<int> pairs;
  std::uint64_t seed = 0;

  void validate() const;
  /// Readable, content-derived directory name.
  std::string id() const;
};

/// Cells selected for training (row-major order):
///  - lattice cells every `spacing` mm in both directions from the grid origin;
///  - FullBoundary10mm adds outer-edge cells every 10 mm and hole-adjacent cells
///    on the 10 mm lattice;
///  - NoBoundary drops every cell of boundary_cells(mask);
///  - MiddleSection keeps cells in the central third of the plate height.
/// Throws EmptyTrainingSet when nothing is left.
std::vector<geometry::Cell> training_cells(const geometry::GridMask& mask, const ScenarioSpec& scenario);

gp::TrainingSet subsample_training(const DeltaTField& field, const geometry::GridMask& mask,
                                   const ScenarioSpec& scenario);

/// Centres of all 1-cells, in mask.ones() order.
Points cell_centers(const geometry::GridMask& mask);

/// CSV `x_mm,y_mm,dt_s` over all 1-cells.
void write_field_csv(std::ostream& out, const geometry::GridMask& mask, const Eigen::VectorXd& values);

}  // namespace bcgp::synth
