#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "bcgp/geometry.hpp"
#include "bcgp/point.hpp"
#include "bcgp/sym_eigs.hpp"

namespace bcgp::laplace {

/// Homogeneous condition applied to every boundary, outer and hole alike.
enum class BoundaryCondition { NeumannZero, DirichletZero };

const char* to_string(BoundaryCondition bc);
BoundaryCondition boundary_from_string(const std::string& name);

/// Discrete negative Laplacian over the 1-cells of a mask.
///
/// Stored as integer-valued weights times 1/h^2 so that structural identities
/// (symmetry, zero row sums under Neumann conditions) hold exactly. Boundaries sit
/// on the cell faces half a step beyond the outermost centres: a Neumann ghost
/// mirrors its neighbour (diagonal loses 1 per missing side) and a Dirichlet ghost
/// is the negated neighbour (diagonal gains 1 per missing side).
class StencilMatrix {
 public:
  StencilMatrix(geometry::GridMask mask, BoundaryCondition bc);

  int size() const noexcept { return static_cast<int>(cells_.size()); }
  const geometry::GridMask& mask() const noexcept { return mask_; }
  BoundaryCondition boundary() const noexcept { return bc_; }

  /// Integer-valued stencil weights (the matrix times h^2).
  const SparseMatrix& weights() const noexcept { return weights_; }
  /// 1/h^2 in mm^-2.
  double scale() const noexcept { return scale_; }
  /// scale() * weights().
  SparseMatrix matrix() const { return scale_ * weights_; }
  /// A x computed as scale * (W x). The integer product is formed first so that
  /// exact identities such as W 1 = 0 survive the scaling.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd wx = weights_ * x;
    return scale_ * wx;
  }

  const std::vector<geometry::Cell>& cells() const noexcept { return cells_; }
  /// Row of a cell, -1 for 0-cells and cells off the grid.
  int index_of(int i, int j) const noexcept;

 private:
  geometry::GridMask mask_;
  BoundaryCondition bc_;
  std::vector<geometry::Cell> cells_;
  std::vector<int> lookup_;
  SparseMatrix weights_;
  double scale_;
};

StencilMatrix assemble_stencil(const geometry::GridMask& mask, BoundaryCondition bc);

/// Laplacian eigenpairs that a reduced-rank GP expands its covariance in.
class SpectralBasis {
 public:
  virtual ~SpectralBasis() = default;

  /// Spatial dimension the spectral density is evaluated in.
  virtual int dimension() const noexcept = 0;
  /// Eigenvalues mu_j of -Laplacian (ascending, mm^-2); frequencies are sqrt(mu_j).
  virtual const Eigen::VectorXd& eigenvalues() const noexcept = 0;
  /// |points| x m matrix of eigenfunction values. Throws PointOutsideDomain.
  virtual Eigen::MatrixXd evaluate(std::span<const Point> points) const = 0;
  virtual bool contains(const Point& p) const noexcept = 0;

  int size() const noexcept { return static_cast<int>(eigenvalues().size()); }
};

/// Leading eigenpairs of a mask's stencil with gridded eigenfunctions normalised
/// so that h^2 * sum phi^2 = 1.
class Eigenbasis final : public SpectralBasis {
 public:
  Eigenbasis(StencilMatrix stencil, Eigen::VectorXd eigenvalues, Eigen::MatrixXd grid_values);

  int dimension() const noexcept override { return 2; }
  const Eigen::VectorXd& eigenvalues() const noexcept override { return mu_; }
  Eigen::MatrixXd evaluate(std::span<const Point> points) const override;
  bool contains(const Point& p) const noexcept override { return mask().locate(p).has_value(); }

  const geometry::GridMask& mask() const noexcept { return stencil_.mask(); }
  BoundaryCondition boundary() const noexcept { return stencil_.boundary(); }
  const StencilMatrix& stencil() const noexcept { return stencil_; }
  /// n x m, row r belongs to stencil().cells()[r].
  const Eigen::MatrixXd& grid_values() const noexcept { return phi_; }

  /// Sparse interpolation weights of one point over stencil rows. Missing corners
  /// of the bilinear stencil take ghost values implied by the boundary condition.
  std::vector<std::pair<int, double>> interpolation_weights(const Point& p, std::size_t index = 0) const;

 private:
  StencilMatrix stencil_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd phi_;
};

/// The m smallest eigenpairs, sign-fixed so the first nonzero entry is positive.
/// Throws MTooLarge for m > n and SolverFailure if the solver does not converge.
Eigenbasis solve_eigenbasis(const StencilMatrix& stencil, int m, const EigsOptions& options = {});

/// evaluate() as a free function.
Eigen::MatrixXd eval_eigenfunctions(const SpectralBasis& basis, std::span<const Point> points);

/// Eigenbasis of a cell-centred interval [0, length] discretised with the same
/// ghost-point scheme; points use their x coordinate.
class IntervalEigenbasis final : public SpectralBasis {
 public:
  IntervalEigenbasis(double length, int cells, int m, BoundaryCondition bc, const EigsOptions& options = {});

  int dimension() const noexcept override { return 1; }
  const Eigen::VectorXd& eigenvalues() const noexcept override { return mu_; }
  Eigen::MatrixXd evaluate(std::span<const Point> points) const override;
  bool contains(const Point& p) const noexcept override { return p.x >= 0.0 && p.x <= length_; }

  double step() const noexcept { return h_; }

 private:
  double length_;
  double h_;
  BoundaryCondition bc_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd phi_;
};

// Eigenbasis cache file.

void save_eigenbasis(const std::filesystem::path& path, const Eigenbasis& basis);

/// Loads a cached basis if it matches the mask (hash and step), the boundary
/// condition and holds at least m pairs; otherwise nullopt.
std::optional<Eigenbasis> load_eigenbasis(const std::filesystem::path& path, const geometry::GridMask& mask,
                                          BoundaryCondition bc, int m);

/// Cache lookup, falling back to assembly and solve (and refreshing the cache).
Eigenbasis cached_eigenbasis(const geometry::GridMask& mask, BoundaryCondition bc, int m,
                             const std::optional<std::filesystem::path>& cache);

}  // namespace bcgp::laplace
