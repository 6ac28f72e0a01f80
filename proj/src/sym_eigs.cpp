#include "bcgp/sym_eigs.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/SparseCholesky>

#include "bcgp/errors.hpp"

namespace bcgp::laplace {

namespace {

Eigenpairs dense_smallest(const SparseMatrix& a, int m) {
  const Eigen::MatrixXd dense = Eigen::MatrixXd(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
  if (solver.info() != Eigen::Success) throw SolverFailure("dense symmetric eigensolver did not converge");
  Eigenpairs out;
  out.values = solver.eigenvalues().head(m);
  out.vectors = solver.eigenvectors().leftCols(m);
  out.max_residual = ((dense * out.vectors) - out.vectors * out.values.asDiagonal()).colwise().norm().maxCoeff();
  return out;
}

// Orthogonalises block against basis(:, 0:k) twice and orthonormalises its columns.
// Columns that collapse are replaced by fresh random directions. Returns false only
// if the space is exhausted.
bool orthonormalize_block(const Eigen::MatrixXd& basis, Eigen::Index k, Eigen::MatrixXd& block, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  const Eigen::Index n = block.rows();
  for (Eigen::Index c = 0; c < block.cols(); ++c) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      auto col = block.col(c);
      const double before = col.norm();
      for (int pass = 0; pass < 2; ++pass) {
        if (k > 0) col -= basis.leftCols(k) * (basis.leftCols(k).transpose() * col);
        if (c > 0) col -= block.leftCols(c) * (block.leftCols(c).transpose() * col);
      }
      const double after = col.norm();
      if (after > 1e-10 * before && after > 0.0) {
        col /= after;
        break;
      }
      if (attempt == 7) return false;
      for (Eigen::Index r = 0; r < n; ++r) col(r) = normal(rng);
    }
  }
  return true;
}

}  // namespace

double inf_norm(const SparseMatrix& a) {
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(a.rows());
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) sums(it.row()) += std::abs(it.value());
  return sums.size() ? sums.maxCoeff() : 0.0;
}

Eigenpairs smallest_eigenpairs(const SparseMatrix& a, int m, const EigsOptions& options) {
  const auto n = static_cast<int>(a.rows());
  if (a.rows() != a.cols()) throw InvalidArgument("eigensolver needs a square matrix");
  if (m < 1) throw InvalidArgument("eigenpair count must be at least 1");
  if (m > n) throw MTooLarge("requested " + std::to_string(m) + " eigenpairs of a size-" + std::to_string(n) + " matrix");
  if (n <= options.dense_threshold) return dense_smallest(a, m);

  const double norm = inf_norm(a);
  const double tolerance = options.tol * std::max(norm, 1e-300);
  const double shift = 1e-4 * norm;

  SparseMatrix shifted = a;
  for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<SparseMatrix> factor(shifted);
  if (factor.info() != Eigen::Success) throw SolverFailure("shift-invert factorisation failed");

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  const int b = std::min(options.block, n);

  Eigen::MatrixXd basis(n, std::min(n, std::max(4 * m, 8 * b)));
  Eigen::MatrixXd image(n, basis.cols());  // a * basis
  Eigen::MatrixXd projected(basis.cols(), basis.cols());
  Eigen::Index k = 0;

  auto append = [&](Eigen::MatrixXd block) {
    if (k + block.cols() > n) block.conservativeResize(Eigen::NoChange, n - k);
    if (block.cols() == 0) return false;
    if (!orthonormalize_block(basis, k, block, rng)) return false;
    if (k + block.cols() > basis.cols()) {
      const Eigen::Index grown = std::min<Eigen::Index>(n, std::max(k + block.cols(), basis.cols() * 3 / 2));
      basis.conservativeResize(Eigen::NoChange, grown);
      image.conservativeResize(Eigen::NoChange, grown);
      projected.conservativeResize(grown, grown);
    }
    const Eigen::Index c = block.cols();
    basis.middleCols(k, c) = block;
    image.middleCols(k, c) = a * block;
    // projected = basis^T a basis, kept symmetric by filling both halves
    projected.block(0, k, k + c, c) = basis.leftCols(k + c).transpose() * image.middleCols(k, c);
    projected.block(k, 0, c, k) = projected.block(0, k, k, c).transpose();
    k += c;
    return true;
  };

  Eigen::MatrixXd start(n, b);
  for (Eigen::Index r = 0; r < start.size(); ++r) start.data()[r] = normal(rng);
  append(start);

  Eigen::Index next_check = std::min<Eigen::Index>(n, std::max<Eigen::Index>(2 * m, m + 4 * b));
  Eigen::Index last_block = 0;
  while (true) {
    if (k >= next_check || k == n) {
      Eigen::MatrixXd h = projected.topLeftCorner(k, k);
      h = 0.5 * (h + h.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(h);
      if (ritz.info() != Eigen::Success) throw SolverFailure("Rayleigh-Ritz step failed");
      Eigenpairs out;
      out.values = ritz.eigenvalues().head(m);
      const Eigen::MatrixXd coeffs = ritz.eigenvectors().leftCols(m);
      out.vectors = basis.leftCols(k) * coeffs;
      const Eigen::MatrixXd residual = image.leftCols(k) * coeffs - out.vectors * out.values.asDiagonal();
      out.max_residual = residual.colwise().norm().maxCoeff();
      if (out.max_residual <= tolerance) return out;
      if (k == n) throw SolverFailure("eigensolver residual " + std::to_string(out.max_residual) + " above tolerance");
      next_check = std::min<Eigen::Index>(n, k + std::max<Eigen::Index>(b, k / 4));
    }
    const Eigen::Index c = std::min<Eigen::Index>(b, k - last_block);
    Eigen::MatrixXd next = factor.solve(basis.middleCols(last_block, c));
    last_block = k;
    if (!append(std::move(next))) {
      // Krylov space exhausted before n: continue from random directions.
      Eigen::MatrixXd fresh(n, std::min<Eigen::Index>(b, n - k));
      for (Eigen::Index r = 0; r < fresh.size(); ++r) fresh.data()[r] = normal(rng);
      if (!append(std::move(fresh))) throw SolverFailure("could not extend the Krylov basis");
      next_check = std::min<Eigen::Index>(next_check, k);
    }
  }
}

}  // namespace bcgp::laplace
