#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bcgp/point.hpp"

namespace bcgp::geometry {

struct Circle {
  Point center;
  double radius = 0.0;
};

/// Axis-aligned rectangle given by its lower-left and upper-right corners.
struct Rect {
  Point lo;
  Point hi;
};

using Hole = std::variant<Circle, Rect>;

/// True when p lies in the closed hole.
bool contains(const Hole& hole, const Point& p);

/// Smallest feature size of a hole (circle diameter, shorter rectangle side).
double min_extent(const Hole& hole);

/// Rectangular plate [0, width] x [0, height] with internal holes.
struct DomainGeometry {
  double width = 0.0;
  double height = 0.0;
  std::vector<Hole> holes;

  /// Throws InvalidArgument unless the size is positive, every hole sits strictly
  /// inside the plate and holes are pairwise disjoint.
  void validate() const;

  bool inside(const Point& p) const;
};

struct Cell {
  int i = 0;  // row, counted upward from the origin
  int j = 0;  // column

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Where the first cell centre sits relative to the plate corner.
enum class Alignment {
  Vertex,        // centres on multiples of h, outermost centres on the plate edge
  CellCentered,  // centres at (k + 1/2) h, cells tile the plate exactly
};

/// Binary raster of a domain. Cell (i, j) has its centre at origin + (j h, i h).
class GridMask {
 public:
  GridMask() = default;

  /// Builds and validates a mask; cells are row-major with row 0 at the bottom.
  /// Throws InvalidArgument when the GridMask invariants fail.
  GridMask(int rows, int cols, double h, Point origin, std::vector<std::uint8_t> cells);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double step() const noexcept { return h_; }
  Point origin() const noexcept { return origin_; }

  bool in_grid(int i, int j) const noexcept { return i >= 0 && j >= 0 && i < rows_ && j < cols_; }
  /// False for cells off the grid.
  bool at(int i, int j) const noexcept { return in_grid(i, j) && cells_[index(i, j)] != 0; }
  Point center(int i, int j) const noexcept { return {origin_.x + j * h_, origin_.y + i * h_}; }
  Point center(const Cell& c) const noexcept { return center(c.i, c.j); }

  /// Cell whose closed square contains p, if that cell is a 1-cell.
  std::optional<Cell> locate(const Point& p) const noexcept;

  /// Number of 1-cells.
  std::size_t count() const noexcept { return ones_; }
  /// 1-cells in row-major order.
  std::vector<Cell> ones() const;
  /// Count of 4-neighbours that are 1-cells.
  int one_neighbours(int i, int j) const noexcept;

  const std::vector<std::uint8_t>& cells() const noexcept { return cells_; }

  /// Stable 64-bit fingerprint of size, step, origin and cells.
  std::uint64_t hash() const noexcept;

  friend bool operator==(const GridMask&, const GridMask&) = default;

 private:
  std::size_t index(int i, int j) const noexcept { return static_cast<std::size_t>(i) * cols_ + j; }

  int rows_ = 0;
  int cols_ = 0;
  double h_ = 0.0;
  Point origin_{};
  std::vector<std::uint8_t> cells_;
  std::size_t ones_ = 0;
};

/// Whether the 1-cells of a raw raster form one 4-connected component.
bool is_connected(int rows, int cols, const std::vector<std::uint8_t>& cells);

/// Cell-centre rasterisation. Throws StepTooCoarse if h is not below the smallest
/// hole extent, a hole covers no centre or the result is disconnected.
GridMask rasterize(const DomainGeometry& geometry, double h, Alignment alignment = Alignment::Vertex);

struct BoundaryCells {
  std::vector<Cell> outer;  // 1-cells on the first/last row or column
  std::vector<Cell> inner;  // remaining 1-cells touching a 0-cell
};

BoundaryCells boundary_cells(const GridMask& mask);

/// Unit outward normals at an outer cell (one per grid edge it touches).
std::vector<Point> outward_normals(const GridMask& mask, const Cell& cell);

// I/O

DomainGeometry geometry_from_json_text(const std::string& text);
DomainGeometry load_geometry(const std::filesystem::path& path);
std::string geometry_to_json_text(const DomainGeometry& geometry);

/// Text raster: header `h=<mm> origin=<x>,<y>`, then rows top to bottom as 0/1.
void write_mask(std::ostream& out, const GridMask& mask);
GridMask read_mask(std::istream& in);

}  // namespace bcgp::geometry
