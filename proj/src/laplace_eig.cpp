#include "bcgp/laplace_eig.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bcgp/errors.hpp"

namespace bcgp::laplace {

using geometry::Cell;
using geometry::GridMask;

const char* to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::NeumannZero ? "neumann" : "dirichlet";
}

BoundaryCondition boundary_from_string(const std::string& name) {
  if (name == "neumann" || name == "NeumannZero") return BoundaryCondition::NeumannZero;
  if (name == "dirichlet" || name == "DirichletZero") return BoundaryCondition::DirichletZero;
  throw InvalidArgument("unknown boundary condition '" + name + "'");
}

namespace {

double ghost_sign(BoundaryCondition bc) { return bc == BoundaryCondition::NeumannZero ? 1.0 : -1.0; }

// Neumann ghosts copy the cell, Dirichlet ghosts negate it.
double diagonal_weight(int present, int possible, BoundaryCondition bc) {
  const int missing = possible - present;
  return bc == BoundaryCondition::NeumannZero ? present : possible + missing;
}

void sign_fix(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    auto col = vectors.col(c);
    const double cutoff = 1e-10 * col.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < col.size(); ++r) {
      if (std::abs(col(r)) > cutoff) {
        if (col(r) < 0.0) col = -col;
        break;
      }
    }
  }
}

}  // namespace

// StencilMatrix

StencilMatrix::StencilMatrix(GridMask mask, BoundaryCondition bc)
    : mask_(std::move(mask)), bc_(bc), scale_(1.0 / (mask_.step() * mask_.step())) {
  cells_ = mask_.ones();
  lookup_.assign(static_cast<std::size_t>(mask_.rows()) * mask_.cols(), -1);
  for (std::size_t r = 0; r < cells_.size(); ++r)
    lookup_[static_cast<std::size_t>(cells_[r].i) * mask_.cols() + cells_[r].j] = static_cast<int>(r);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(cells_.size() * 5);
  constexpr std::array<std::array<int, 2>, 4> offsets{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
  for (std::size_t r = 0; r < cells_.size(); ++r) {
    int present = 0;
    for (const auto& [di, dj] : offsets) {
      const int c = index_of(cells_[r].i + di, cells_[r].j + dj);
      if (c < 0) continue;
      ++present;
      triplets.emplace_back(static_cast<int>(r), c, -1.0);
    }
    triplets.emplace_back(static_cast<int>(r), static_cast<int>(r), diagonal_weight(present, 4, bc_));
  }
  weights_.resize(size(), size());
  weights_.setFromTriplets(triplets.begin(), triplets.end());
  weights_.makeCompressed();
}

int StencilMatrix::index_of(int i, int j) const noexcept {
  if (!mask_.in_grid(i, j)) return -1;
  return lookup_[static_cast<std::size_t>(i) * mask_.cols() + j];
}

StencilMatrix assemble_stencil(const GridMask& mask, BoundaryCondition bc) { return StencilMatrix(mask, bc); }

// Eigenbasis

Eigenbasis::Eigenbasis(StencilMatrix stencil, Eigen::VectorXd eigenvalues, Eigen::MatrixXd grid_values)
    : stencil_(std::move(stencil)), mu_(std::move(eigenvalues)), phi_(std::move(grid_values)) {
  if (phi_.rows() != stencil_.size() || phi_.cols() != mu_.size())
    throw InvalidArgument("eigenbasis shape does not match its stencil");
}

std::vector<std::pair<int, double>> Eigenbasis::interpolation_weights(const Point& p, std::size_t index) const {
  const GridMask& m = mask();
  if (!m.locate(p)) throw PointOutsideDomain(index);
  const double fj = (p.x - m.origin().x) / m.step();
  const double fi = (p.y - m.origin().y) / m.step();
  const int j0 = static_cast<int>(std::floor(fj));
  const int i0 = static_cast<int>(std::floor(fi));
  const double tx = fj - j0;
  const double ty = fi - i0;
  const double sign = ghost_sign(boundary());

  std::vector<std::pair<int, double>> out;
  out.reserve(4);
  auto add = [&](int row, double w) {
    for (auto& [r, acc] : out)
      if (r == row) {
        acc += w;
        return;
      }
    out.emplace_back(row, w);
  };
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      const double w = (di ? ty : 1.0 - ty) * (dj ? tx : 1.0 - tx);
      if (w == 0.0) continue;
      const int row = stencil_.index_of(i0 + di, j0 + dj);
      if (row >= 0) {
        add(row, w);
        continue;
      }
      // Ghost corner: mirror of its in-domain edge neighbours within the 2x2 block.
      std::array<int, 2> donors{stencil_.index_of(i0 + di, j0 + 1 - dj), stencil_.index_of(i0 + 1 - di, j0 + dj)};
      const int count = int(donors[0] >= 0) + int(donors[1] >= 0);
      if (count > 0) {
        for (int d : donors)
          if (d >= 0) add(d, sign * w / count);
        continue;
      }
      const int diagonal = stencil_.index_of(i0 + 1 - di, j0 + 1 - dj);
      if (diagonal < 0) throw PointOutsideDomain(index);
      add(diagonal, sign * w);
    }
  }
  return out;
}

Eigen::MatrixXd Eigenbasis::evaluate(std::span<const Point> points) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), phi_.cols());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto weights = interpolation_weights(points[k], k);
    auto row = out.row(static_cast<Eigen::Index>(k));
    if (weights.size() == 1 && weights.front().second == 1.0) {
      row = phi_.row(weights.front().first);
      continue;
    }
    for (const auto& [r, w] : weights) row += w * phi_.row(r);
  }
  return out;
}

Eigenbasis solve_eigenbasis(const StencilMatrix& stencil, int m, const EigsOptions& options) {
  if (m > stencil.size())
    throw MTooLarge("requested " + std::to_string(m) + " eigenpairs on " + std::to_string(stencil.size()) + " cells");
  Eigenpairs pairs = smallest_eigenpairs(stencil.weights(), m, options);
  sign_fix(pairs.vectors);
  // Unit Euclidean vectors have discrete norm h; rescale to h^2 sum phi^2 = 1.
  const double h = stencil.mask().step();
  Eigen::VectorXd mu = (pairs.values * stencil.scale()).cwiseMax(0.0);
  return Eigenbasis(stencil, std::move(mu), pairs.vectors / h);
}

Eigen::MatrixXd eval_eigenfunctions(const SpectralBasis& basis, std::span<const Point> points) {
  return basis.evaluate(points);
}

// IntervalEigenbasis

IntervalEigenbasis::IntervalEigenbasis(double length, int cells, int m, BoundaryCondition bc, const EigsOptions& options)
    : length_(length), h_(length / cells), bc_(bc) {
  if (!(length > 0.0) || cells < 3) throw InvalidArgument("interval needs positive length and at least 3 cells");
  if (m > cells) throw MTooLarge("requested " + std::to_string(m) + " eigenpairs on " + std::to_string(cells) + " cells");
  std::vector<Eigen::Triplet<double>> triplets;
  for (int r = 0; r < cells; ++r) {
    int present = 0;
    for (int c : {r - 1, r + 1}) {
      if (c < 0 || c >= cells) continue;
      ++present;
      triplets.emplace_back(r, c, -1.0);
    }
    triplets.emplace_back(r, r, diagonal_weight(present, 2, bc));
  }
  SparseMatrix weights(cells, cells);
  weights.setFromTriplets(triplets.begin(), triplets.end());
  Eigenpairs pairs = smallest_eigenpairs(weights, m, options);
  sign_fix(pairs.vectors);
  mu_ = (pairs.values / (h_ * h_)).cwiseMax(0.0);
  phi_ = pairs.vectors / std::sqrt(h_);
}

Eigen::MatrixXd IntervalEigenbasis::evaluate(std::span<const Point> points) const {
  const auto n = static_cast<int>(phi_.rows());
  const double sign = ghost_sign(bc_);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), phi_.cols());
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (!contains(points[k])) throw PointOutsideDomain(k);
    const double f = points[k].x / h_ - 0.5;  // centres at (r + 1/2) h
    const int r0 = static_cast<int>(std::floor(f));
    const double t = f - r0;
    auto value = [&](int r) -> Eigen::RowVectorXd {
      if (r < 0) return sign * phi_.row(0);
      if (r >= n) return sign * phi_.row(n - 1);
      return phi_.row(r);
    };
    if (t == 0.0)
      out.row(static_cast<Eigen::Index>(k)) = value(r0);
    else
      out.row(static_cast<Eigen::Index>(k)) = (1.0 - t) * value(r0) + t * value(r0 + 1);
  }
  return out;
}

// Cache

namespace {

constexpr char kMagic[8] = {'B', 'C', 'G', 'P', 'E', 'I', 'G', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
bool get(std::ifstream& in, T& value) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

}  // namespace

void save_eigenbasis(const std::filesystem::path& path, const Eigenbasis& basis) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write eigenbasis cache " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, basis.mask().step());
  put(out, basis.mask().hash());
  put(out, static_cast<std::uint32_t>(basis.boundary()));
  put(out, static_cast<std::uint64_t>(basis.grid_values().rows()));
  put(out, static_cast<std::uint64_t>(basis.grid_values().cols()));
  out.write(reinterpret_cast<const char*>(basis.eigenvalues().data()),
            static_cast<std::streamsize>(sizeof(double) * basis.eigenvalues().size()));
  out.write(reinterpret_cast<const char*>(basis.grid_values().data()),
            static_cast<std::streamsize>(sizeof(double) * basis.grid_values().size()));
}

std::optional<Eigenbasis> load_eigenbasis(const std::filesystem::path& path, const GridMask& mask,
                                          BoundaryCondition bc, int m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0, kind = 0;
  double h = 0.0;
  std::uint64_t hash = 0, rows = 0, cols = 0;
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) return std::nullopt;
  if (!get(in, version) || version != kVersion) return std::nullopt;
  if (!get(in, h) || !get(in, hash) || !get(in, kind) || !get(in, rows) || !get(in, cols)) return std::nullopt;
  if (h != mask.step() || hash != mask.hash() || kind != static_cast<std::uint32_t>(bc)) return std::nullopt;
  if (rows != mask.count() || cols < static_cast<std::uint64_t>(m)) return std::nullopt;
  Eigen::VectorXd mu(static_cast<Eigen::Index>(cols));
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (!in.read(reinterpret_cast<char*>(mu.data()), static_cast<std::streamsize>(sizeof(double) * mu.size())))
    return std::nullopt;
  if (!in.read(reinterpret_cast<char*>(phi.data()), static_cast<std::streamsize>(sizeof(double) * phi.size())))
    return std::nullopt;
  return Eigenbasis(StencilMatrix(mask, bc), mu.head(m), phi.leftCols(m));
}

Eigenbasis cached_eigenbasis(const GridMask& mask, BoundaryCondition bc, int m,
                             const std::optional<std::filesystem::path>& cache) {
  if (cache) {
    if (auto hit = load_eigenbasis(*cache, mask, bc, m)) return std::move(*hit);
  }
  Eigenbasis basis = solve_eigenbasis(assemble_stencil(mask, bc), m);
  if (cache) save_eigenbasis(*cache, basis);
  return basis;
}

}  // namespace bcgp::laplace
