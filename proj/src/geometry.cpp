#include "bcgp/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>

#include "bcgp/errors.hpp"
#include "json.hpp"

namespace bcgp::geometry {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

double rect_distance(const Rect& r, const Point& p) {
  const double dx = std::max({r.lo.x - p.x, 0.0, p.x - r.hi.x});
  const double dy = std::max({r.lo.y - p.y, 0.0, p.y - r.hi.y});
  return std::hypot(dx, dy);
}

bool disjoint(const Hole& a, const Hole& b) {
  return std::visit(
      Overloaded{
          [](const Circle& c1, const Circle& c2) { return distance(c1.center, c2.center) > c1.radius + c2.radius; },
          [](const Rect& r1, const Rect& r2) {
            return r1.hi.x < r2.lo.x || r2.hi.x < r1.lo.x || r1.hi.y < r2.lo.y || r2.hi.y < r1.lo.y;
          },
          [](const Circle& c, const Rect& r) { return rect_distance(r, c.center) > c.radius; },
          [](const Rect& r, const Circle& c) { return rect_distance(r, c.center) > c.radius; },
      },
      a, b);
}

// Number of grid points along a side for the given alignment.
int samples_along(double length, double h, Alignment alignment) {
  const double ratio = length / h;
  const double eps = 1e-9 * std::max(1.0, ratio);
  if (alignment == Alignment::Vertex) return static_cast<int>(std::floor(ratio + eps)) + 1;
  return static_cast<int>(std::floor(ratio + eps));
}

std::uint64_t fnv1a(std::uint64_t hash, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < bytes; ++k) {
    hash ^= p[k];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

bool contains(const Hole& hole, const Point& p) {
  return std::visit(Overloaded{
                        [&](const Circle& c) { return distance(c.center, p) <= c.radius; },
                        [&](const Rect& r) { return p.x >= r.lo.x && p.x <= r.hi.x && p.y >= r.lo.y && p.y <= r.hi.y; },
                    },
                    hole);
}

double min_extent(const Hole& hole) {
  return std::visit(Overloaded{
                        [](const Circle& c) { return 2.0 * c.radius; },
                        [](const Rect& r) { return std::min(r.hi.x - r.lo.x, r.hi.y - r.lo.y); },
                    },
                    hole);
}

void DomainGeometry::validate() const {
  if (!(width > 0.0) || !(height > 0.0)) throw InvalidArgument("plate width and height must be positive");
  for (std::size_t k = 0; k < holes.size(); ++k) {
    const bool strictly_inside = std::visit(
        Overloaded{
            [&](const Circle& c) {
              return c.radius > 0.0 && c.center.x - c.radius > 0.0 && c.center.x + c.radius < width &&
                     c.center.y - c.radius > 0.0 && c.center.y + c.radius < height;
            },
            [&](const Rect& r) {
              return r.lo.x < r.hi.x && r.lo.y < r.hi.y && r.lo.x > 0.0 && r.hi.x < width && r.lo.y > 0.0 &&
                     r.hi.y < height;
            },
        },
        holes[k]);
    if (!strictly_inside) throw InvalidArgument("hole " + std::to_string(k) + " is not strictly inside the plate");
    for (std::size_t l = 0; l < k; ++l)
      if (!disjoint(holes[k], holes[l]))
        throw InvalidArgument("holes " + std::to_string(l) + " and " + std::to_string(k) + " overlap");
  }
}

bool DomainGeometry::inside(const Point& p) const {
  if (p.x < 0.0 || p.y < 0.0 || p.x > width || p.y > height) return false;
  return std::none_of(holes.begin(), holes.end(), [&](const Hole& h) { return contains(h, p); });
}

// GridMask

GridMask::GridMask(int rows, int cols, double h, Point origin, std::vector<std::uint8_t> cells)
    : rows_(rows), cols_(cols), h_(h), origin_(origin), cells_(std::move(cells)) {
  if (rows <= 0 || cols <= 0) throw InvalidArgument("grid mask must have positive size");
  if (!(h > 0.0)) throw InvalidArgument("grid step must be positive");
  if (cells_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw InvalidArgument("grid mask cell count does not match its size");
  for (auto& c : cells_) c = c ? 1 : 0;
  ones_ = static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));

  bool interior = false;
  for (int i = 0; i < rows_ && !interior; ++i)
    for (int j = 0; j < cols_ && !interior; ++j) interior = at(i, j) && one_neighbours(i, j) == 4;
  if (!interior) throw InvalidArgument("grid mask has no interior cell");
  if (!is_connected(rows_, cols_, cells_)) throw InvalidArgument("grid mask is not 4-connected");
}

std::optional<Cell> GridMask::locate(const Point& p) const noexcept {
  const double fj = (p.x - origin_.x) / h_;
  const double fi = (p.y - origin_.y) / h_;
  if (!std::isfinite(fi) || !std::isfinite(fj)) return std::nullopt;
  // Squares are closed: a point on a shared face (up to rounding) may belong to
  // either neighbour, and the nearest 1-cell wins.
  constexpr double face_tol = 1e-9;
  const auto candidates = [](double f, int out[2]) {
    const double r = std::round(f);
    out[0] = static_cast<int>(r);
    out[1] = out[0];
    if (std::abs(std::abs(f - r) - 0.5) < face_tol) out[1] = f > r ? out[0] + 1 : out[0] - 1;
  };
  int is[2], js[2];
  candidates(fi, is);
  candidates(fj, js);
  for (int a : is)
    for (int b : js)
      if (at(a, b)) return Cell{a, b};
  return std::nullopt;
}

std::vector<Cell> GridMask::ones() const {
  std::vector<Cell> out;
  out.reserve(ones_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j)
      if (at(i, j)) out.push_back({i, j});
  return out;
}

int GridMask::one_neighbours(int i, int j) const noexcept {
  return int(at(i - 1, j)) + int(at(i + 1, j)) + int(at(i, j - 1)) + int(at(i, j + 1));
}

std::uint64_t GridMask::hash() const noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  const std::int64_t dims[2] = {rows_, cols_};
  const std::uint64_t reals[3] = {std::bit_cast<std::uint64_t>(h_), std::bit_cast<std::uint64_t>(origin_.x),
                                  std::bit_cast<std::uint64_t>(origin_.y)};
  hash = fnv1a(hash, dims, sizeof(dims));
  hash = fnv1a(hash, reals, sizeof(reals));
  return fnv1a(hash, cells_.data(), cells_.size());
}

bool is_connected(int rows, int cols, const std::vector<std::uint8_t>& cells) {
  const auto total = static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](auto c) { return c != 0; }));
  if (total == 0) return false;
  const auto first = static_cast<std::size_t>(
      std::distance(cells.begin(), std::find_if(cells.begin(), cells.end(), [](auto c) { return c != 0; })));
  std::vector<std::uint8_t> seen(cells.size(), 0);
  std::queue<std::size_t> frontier;
  frontier.push(first);
  seen[first] = 1;
  std::size_t reached = 0;
  while (!frontier.empty()) {
    const std::size_t k = frontier.front();
    frontier.pop();
    ++reached;
    const int i = static_cast<int>(k / cols), j = static_cast<int>(k % cols);
    const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
    for (int d = 0; d < 4; ++d) {
      const int ni = i + di[d], nj = j + dj[d];
      if (ni < 0 || nj < 0 || ni >= rows || nj >= cols) continue;
      const std::size_t nk = static_cast<std::size_t>(ni) * cols + nj;
      if (cells[nk] && !seen[nk]) {
        seen[nk] = 1;
        frontier.push(nk);
      }
    }
  }
  return reached == total;
}

GridMask rasterize(const DomainGeometry& geometry, double h, Alignment alignment) {
  geometry.validate();
  if (!(h > 0.0)) throw InvalidArgument("grid step must be positive");
  for (const auto& hole : geometry.holes)
    if (h >= min_extent(hole)) throw StepTooCoarse("grid step is not smaller than the smallest hole");

  const int cols = samples_along(geometry.width, h, alignment);
  const int rows = samples_along(geometry.height, h, alignment);
  if (rows < 3 || cols < 3) throw StepTooCoarse("grid step leaves fewer than three cells across the plate");
  const Point origin = alignment == Alignment::Vertex ? Point{0.0, 0.0} : Point{0.5 * h, 0.5 * h};

  std::vector<std::uint8_t> cells(static_cast<std::size_t>(rows) * cols, 0);
  std::vector<bool> hole_hit(geometry.holes.size(), false);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const Point c{origin.x + j * h, origin.y + i * h};
      bool keep = true;
      for (std::size_t k = 0; k < geometry.holes.size(); ++k) {
        if (contains(geometry.holes[k], c)) {
          hole_hit[k] = true;
          keep = false;
        }
      }
      cells[static_cast<std::size_t>(i) * cols + j] = keep ? 1 : 0;
    }
  }
  for (std::size_t k = 0; k < hole_hit.size(); ++k)
    if (!hole_hit[k]) throw StepTooCoarse("hole " + std::to_string(k) + " covers no cell centre");
  if (!is_connected(rows, cols, cells)) throw StepTooCoarse("rasterised domain is not 4-connected");
  try {
    return GridMask(rows, cols, h, origin, std::move(cells));
  } catch (const InvalidArgument& e) {
    throw StepTooCoarse(e.what());
  }
}

BoundaryCells boundary_cells(const GridMask& mask) {
  BoundaryCells out;
  for (int i = 0; i < mask.rows(); ++i) {
    for (int j = 0; j < mask.cols(); ++j) {
      if (!mask.at(i, j)) continue;
      const bool perimeter = i == 0 || j == 0 || i == mask.rows() - 1 || j == mask.cols() - 1;
      if (perimeter)
        out.outer.push_back({i, j});
      else if (mask.one_neighbours(i, j) < 4)
        out.inner.push_back({i, j});
    }
  }
  return out;
}

std::vector<Point> outward_normals(const GridMask& mask, const Cell& cell) {
  std::vector<Point> normals;
  if (cell.j == 0) normals.push_back({-1.0, 0.0});
  if (cell.j == mask.cols() - 1) normals.push_back({1.0, 0.0});
  if (cell.i == 0) normals.push_back({0.0, -1.0});
  if (cell.i == mask.rows() - 1) normals.push_back({0.0, 1.0});
  return normals;
}

// I/O

DomainGeometry geometry_from_json_text(const std::string& text) {
  DomainGeometry g;
  try {
    const auto doc = nlohmann::json::parse(text);
    g.width = doc.at("width_mm").get<double>();
    g.height = doc.at("height_mm").get<double>();
    for (const auto& h : doc.value("holes", nlohmann::json::array())) {
      const auto kind = h.at("kind").get<std::string>();
      if (kind == "circle") {
        g.holes.emplace_back(Circle{{h.at("cx").get<double>(), h.at("cy").get<double>()}, h.at("r").get<double>()});
      } else if (kind == "rect") {
        g.holes.emplace_back(Rect{{h.at("x0").get<double>(), h.at("y0").get<double>()},
                                  {h.at("x1").get<double>(), h.at("y1").get<double>()}});
      } else {
        throw InvalidArgument("unknown hole kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed geometry: ") + e.what());
  }
  g.validate();
  return g;
}

DomainGeometry load_geometry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open geometry file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return geometry_from_json_text(buffer.str());
}

std::string geometry_to_json_text(const DomainGeometry& geometry) {
  nlohmann::json doc;
  doc["width_mm"] = geometry.width;
  doc["height_mm"] = geometry.height;
  doc["holes"] = nlohmann::json::array();
  for (const auto& hole : geometry.holes) {
    std::visit(Overloaded{
                   [&](const Circle& c) {
                     doc["holes"].push_back({{"kind", "circle"}, {"cx", c.center.x}, {"cy", c.center.y}, {"r", c.radius}});
                   },
                   [&](const Rect& r) {
                     doc["holes"].push_back(
                         {{"kind", "rect"}, {"x0", r.lo.x}, {"y0", r.lo.y}, {"x1", r.hi.x}, {"y1", r.hi.y}});
                   },
               },
               hole);
  }
  return doc.dump(2);
}

void write_mask(std::ostream& out, const GridMask& mask) {
  out << std::setprecision(17) << "h=" << mask.step() << " origin=" << mask.origin().x << ',' << mask.origin().y << '\n';
  for (int i = mask.rows() - 1; i >= 0; --i) {
    for (int j = 0; j < mask.cols(); ++j) out << (j ? " " : "") << (mask.at(i, j) ? '1' : '0');
    out << '\n';
  }
}

GridMask read_mask(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw InvalidArgument("empty mask file");
  double h = 0.0, x0 = 0.0, y0 = 0.0;
  if (std::sscanf(header.c_str(), "h=%lf origin=%lf,%lf", &h, &x0, &y0) != 3)
    throw InvalidArgument("malformed mask header: " + header);
  std::vector<std::vector<std::uint8_t>> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<std::uint8_t> values;
    int v = 0;
    while (row >> v) values.push_back(v != 0);
    if (!values.empty()) lines.push_back(std::move(values));
  }
  if (lines.empty()) throw InvalidArgument("mask file has no rows");
  const int rows = static_cast<int>(lines.size());
  const int cols = static_cast<int>(lines.front().size());
  std::vector<std::uint8_t> cells;
  cells.reserve(static_cast<std::size_t>(rows) * cols);
  for (int i = rows - 1; i >= 0; --i) {
    if (static_cast<int>(lines[i].size()) != cols) throw InvalidArgument("ragged mask rows");
    cells.insert(cells.end(), lines[i].begin(), lines[i].end());
  }
  return GridMask(rows, cols, h, {x0, y0}, std::move(cells));
}

}  // namespace bcgp::geometry
