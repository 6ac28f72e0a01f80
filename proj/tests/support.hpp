#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "bcgp/geometry.hpp"
#include "bcgp/laplace_eig.hpp"
#include "bcgp/synth.hpp"

namespace testing_support {

/// Seeded generator wrapper for property tests; every test names its own seed.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// All-ones rows x cols mask at step h with the origin at the first centre.
inline bcgp::geometry::GridMask full_mask(int rows, int cols, double h = 1.0, bcgp::Point origin = {0.0, 0.0}) {
  return {rows, cols, h, origin, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 1)};
}

/// Random connected mask: a full rectangle with random rectangular holes punched
/// out, retried until it stays connected and keeps an interior cell.
inline bcgp::geometry::GridMask random_mask(Gen& gen, int rows, int cols, int max_holes = 4) {
  for (;;) {
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(rows) * cols, 1);
    const int holes = gen.integer(0, max_holes);
    for (int k = 0; k < holes; ++k) {
      const int i0 = gen.integer(1, rows - 3), j0 = gen.integer(1, cols - 3);
      const int i1 = std::min(rows - 2, i0 + gen.integer(0, 3)), j1 = std::min(cols - 2, j0 + gen.integer(0, 3));
      for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j) cells[static_cast<std::size_t>(i) * cols + j] = 0;
    }
    if (!bcgp::geometry::is_connected(rows, cols, cells)) continue;
    try {
      return {rows, cols, 1.0, {0.0, 0.0}, cells};
    } catch (...) {
      continue;
    }
  }
}

/// Plate preset rasterised at 5 mm.
inline const bcgp::geometry::GridMask& plate_mask() {
  static const auto mask = bcgp::geometry::rasterize(bcgp::synth::plate_preset().geometry, 5.0);
  return mask;
}

/// Neumann basis of the plate at 5 mm with m = 256, solved once per process.
inline std::shared_ptr<const bcgp::laplace::Eigenbasis> plate_basis() {
  static const auto basis = std::make_shared<const bcgp::laplace::Eigenbasis>(bcgp::laplace::solve_eigenbasis(
      bcgp::laplace::assemble_stencil(plate_mask(), bcgp::laplace::BoundaryCondition::NeumannZero), 256));
  return basis;
}

}  // namespace testing_support
