#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace bcgp::laplace {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct EigsOptions {
  /// Residual bound ||A v - mu v|| <= tol * ||A||_inf for unit v.
  double tol = 1e-8;
  int block = 16;
  /// Problems at or below this size use a dense solver.
  int dense_threshold = 600;
  std::uint64_t seed = 0x5eed;
};

struct Eigenpairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // unit columns
  double max_residual = 0.0;
};

/// Smallest m eigenpairs of a symmetric positive semi-definite sparse matrix.
///
/// Builds a block Krylov space of the shift-inverted operator (A + s I)^{-1} with a
/// small s > 0, applies Rayleigh-Ritz with A itself and grows the space until every
/// wanted Ritz pair meets the residual bound. Blocks keep repeated eigenvalues
/// reachable. Throws MTooLarge for m > n and SolverFailure if the bound is never met.
Eigenpairs smallest_eigenpairs(const SparseMatrix& a, int m, const EigsOptions& options = {});

/// max_i sum_j |a_ij|
double inf_norm(const SparseMatrix& a);

}  // namespace bcgp::laplace
