#pragma once

// Haar analysis/synthesis of discrete Brownian paths on dyadic grids.
//
// The Haar functions h_0, h_1, ... are L2-normalized on [t_start, t_end]:
// h_0 is constant 1/sqrt(T'), and h_{2^j + k} is the mother wavelet at level
// j, shift k. On a grid with 2^K cells every h_l with l < 2^K is constant on
// cells, so the discrete stochastic integrals  c_l = sum_cells h_l * dW  are
// exact and the full-level transform is an orthonormal change of basis of the
// increment vector.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/path_bundle.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

/// Truncated Haar coefficients of a path batch, per path and coordinate.
struct HaarCoefficients {
  TimeGrid grid;
  std::size_t dim = 1;
  std::size_t n_paths = 0;
  std::size_t level = 0;  // number of retained coefficients per coordinate
  std::vector<double> coeffs;  // [path][l][dim]

  std::size_t index(std::size_t path, std::size_t l, std::size_t j) const {
    return (path * level + l) * dim + j;
  }
};

namespace detail {

/// Value of the l-th Haar function on cell `cell` of `grid`.
inline double haar_on_cell(const TimeGrid& grid, std::size_t l,
                           std::size_t cell) {
  const double horizon = grid.horizon();
  if (l == 0) return 1.0 / std::sqrt(horizon);
  // l = 2^j + k with 0 <= k < 2^j.
  std::size_t level_size = 1;
  std::size_t j = 0;
  while (level_size * 2 <= l) {
    level_size *= 2;
    ++j;
  }
  const std::size_t k = l - level_size;
  // Support [k, k+1) / 2^j in horizon units; sign flips at the midpoint.
  const std::size_t n = grid.n_steps();
  const std::size_t cells_per_support = n / (level_size * 2);  // half-support
  const std::size_t start = k * 2 * cells_per_support;
  if (cell < start || cell >= start + 2 * cells_per_support) return 0.0;
  const double magnitude =
      std::pow(2.0, static_cast<double>(j) / 2.0) / std::sqrt(horizon);
  return cell < start + cells_per_support ? magnitude : -magnitude;
}

inline void require_dyadic(const TimeGrid& grid) {
  if (!grid.is_dyadic()) {
    throw GridError("haar: grid with " + std::to_string(grid.n_steps()) +
                    " steps is not dyadic");
  }
}

}  // namespace detail

/// Discrete integrals of the first `level` Haar functions against each path.
inline HaarCoefficients haar_analyze(const PathEnsemble& paths,
                                     std::size_t level) {
  const TimeGrid& grid = *paths.grid;
  detail::require_dyadic(grid);
  if (level == 0 || level > grid.n_steps()) {
    throw GridError("haar_analyze: level must be in [1, n_steps]");
  }

  HaarCoefficients out{grid, paths.dim, paths.n_paths, level, {}};
  out.coeffs.assign(paths.n_paths * level * paths.dim, 0.0);

  // Basis values per (l, cell); small enough to precompute densely.
  const std::size_t n_cells = grid.n_steps();
  std::vector<double> table(level * n_cells);
  for (std::size_t l = 0; l < level; ++l) {
    for (std::size_t c = 0; c < n_cells; ++c) {
      table[l * n_cells + c] = detail::haar_on_cell(grid, l, c);
    }
  }

  for (std::size_t p = 0; p < paths.n_paths; ++p) {
    const auto incs = paths.path(p);
    for (std::size_t l = 0; l < level; ++l) {
      const double* row = table.data() + l * n_cells;
      for (std::size_t j = 0; j < paths.dim; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n_cells; ++c) {
          acc += row[c] * incs[c * paths.dim + j];
        }
        out.coeffs[out.index(p, l, j)] = acc;
      }
    }
  }
  return out;
}

inline HaarCoefficients haar_analyze(const PathBundle& bundle,
                                     std::size_t level) {
  return haar_analyze(PathEnsemble::primary(bundle), level);
}

/// Reconstructs increments from coefficients:  dW_c = sum_l c_l h_l(c) du.
/// Exact round trip (up to rounding) when level == n_steps.
inline std::vector<double> haar_synthesize(const HaarCoefficients& coeffs,
                                           const TimeGrid& grid) {
  detail::require_dyadic(grid);
  if (!(coeffs.grid == grid)) {
    throw GridError("haar_synthesize: coefficient grid differs from target");
  }
  if (coeffs.level > grid.n_steps()) {
    throw GridError("haar_synthesize: level exceeds grid resolution");
  }

  const std::size_t n_cells = grid.n_steps();
  std::vector<double> table(coeffs.level * n_cells);
  for (std::size_t l = 0; l < coeffs.level; ++l) {
    for (std::size_t c = 0; c < n_cells; ++c) {
      table[l * n_cells + c] = detail::haar_on_cell(grid, l, c);
    }
  }

  std::vector<double> incs(coeffs.n_paths * n_cells * coeffs.dim, 0.0);
  const double du = grid.step();
  for (std::size_t p = 0; p < coeffs.n_paths; ++p) {
    double* path = incs.data() + p * n_cells * coeffs.dim;
    for (std::size_t l = 0; l < coeffs.level; ++l) {
      const double* row = table.data() + l * n_cells;
      for (std::size_t j = 0; j < coeffs.dim; ++j) {
        const double c_lj = coeffs.coeffs[coeffs.index(p, l, j)];
        if (c_lj == 0.0) continue;
        for (std::size_t c = 0; c < n_cells; ++c) {
          path[c * coeffs.dim + j] += c_lj * row[c] * du;
        }
      }
    }
  }
  return incs;
}

}  // namespace fbsde
