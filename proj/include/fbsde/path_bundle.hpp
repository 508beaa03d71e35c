#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fbsde/coupling_function.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

/// A Monte Carlo batch of paired d-dimensional Brownian paths (W, W').
///
/// Increments are stored per path, per cell, per coordinate, contiguously in
/// that order. The two motions are drawn from disjoint counter lanes of the
/// same seed, so regenerating with identical (seed, stream_id, n_paths, grid)
/// is bit-identical regardless of how the work is scheduled.
struct PathBundle {
  TimeGrid grid;
  std::size_t dim = 1;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::vector<double> increments_w;
  std::vector<double> increments_wprime;

  std::size_t stride() const { return grid.n_steps() * dim; }

  std::size_t index(std::size_t path, std::size_t cell, std::size_t j) const {
    return path * stride() + cell * dim + j;
  }

  std::span<const double> path_w(std::size_t path) const {
    return {increments_w.data() + path * stride(), stride()};
  }

  std::span<const double> path_wprime(std::size_t path) const {
    return {increments_wprime.data() + path * stride(), stride()};
  }
};

inline PathBundle sample_paths(const TimeGrid& grid, std::size_t dim,
                               std::size_t n_paths, std::uint64_t seed,
                               std::uint64_t stream_id = 0) {
  if (dim == 0) throw ConfigError("sample_paths: dim must be at least 1");
  if (n_paths == 0) throw ConfigError("sample_paths: n_paths must be at least 1");

  PathBundle bundle{grid, dim, n_paths, seed, stream_id, {}, {}};
  const std::size_t total = n_paths * grid.n_steps() * dim;
  bundle.increments_w.resize(total);
  bundle.increments_wprime.resize(total);

  const double sqrt_step = std::sqrt(grid.step());
  const std::size_t n_cells = grid.n_steps();
  for (std::size_t p = 0; p < n_paths; ++p) {
    for (std::size_t k = 0; k < n_cells; ++k) {
      for (std::size_t j = 0; j < dim; ++j) {
        const std::size_t at = bundle.index(p, k, j);
        bundle.increments_w[at] =
            sqrt_step * normal_draw(seed, stream_id, p, k,
                                    noise_lane(NoiseRole::kPrimary, j));
        bundle.increments_wprime[at] =
            sqrt_step * normal_draw(seed, stream_id, p, k,
                                    noise_lane(NoiseRole::kPaired, j));
      }
    }
  }
  return bundle;
}

/// Increments of the blended motion: on each cell,
///   dW^phi = sqrt(1 - phi^2) dW + phi dW'.
/// phi == 0 and phi == 1 cells copy the source bits untouched.
inline std::vector<double> build_coupled_increments(
    const PathBundle& bundle, const CouplingFunction& phi) {
  phi.validate(bundle.grid);
  const std::size_t n_cells = bundle.grid.n_steps();

  std::vector<double> weight_w(n_cells), weight_wp(n_cells);
  for (std::size_t k = 0; k < n_cells; ++k) {
    const double v = phi.value_on_cell(bundle.grid, k);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("build_coupled_increments: phi outside [0,1]");
    }
    weight_wp[k] = v;
    weight_w[k] = std::sqrt(1.0 - v * v);
  }

  std::vector<double> out(bundle.increments_w.size());
  for (std::size_t p = 0; p < bundle.n_paths; ++p) {
    for (std::size_t k = 0; k < n_cells; ++k) {
      for (std::size_t j = 0; j < bundle.dim; ++j) {
        const std::size_t at = bundle.index(p, k, j);
        if (weight_wp[k] == 0.0) {
          out[at] = bundle.increments_w[at];
        } else if (weight_wp[k] == 1.0) {
          out[at] = bundle.increments_wprime[at];
        } else {
          out[at] = weight_w[k] * bundle.increments_w[at] +
                    weight_wp[k] * bundle.increments_wprime[at];
        }
      }
    }
  }
  return out;
}

/// Node values of a single discrete path.
///
/// Either owns a small cumulative-sum buffer (rebuild per path) or aliases
/// externally precomputed storage (view mode, used by the solvers to avoid
/// re-summing inside hot loops). Functionals receive this and must treat it
/// as read-only.
class PathValues {
 public:
  PathValues(const TimeGrid& grid, std::size_t dim)
      : grid_(&grid), dim_(dim), buffer_(grid.n_nodes() * dim, 0.0),
        values_(buffer_.data()), increments_(nullptr) {}

  /// Aliases external node-value and increment storage; no copies are made
  /// and the caller keeps both alive.
  static PathValues view(const TimeGrid& grid, std::size_t dim,
                         const double* node_values, const double* increments) {
    PathValues pv(grid, dim, nullptr);
    pv.values_ = node_values;
    pv.increments_ = increments;
    return pv;
  }

  PathValues(const PathValues& other)
      : grid_(other.grid_), dim_(other.dim_), buffer_(other.buffer_),
        values_(other.owns() ? buffer_.data() : other.values_),
        increments_(other.increments_) {}

  PathValues& operator=(const PathValues& other) {
    grid_ = other.grid_;
    dim_ = other.dim_;
    buffer_ = other.buffer_;
    values_ = other.owns() ? buffer_.data() : other.values_;
    increments_ = other.increments_;
    return *this;
  }

  void rebuild(std::span<const double> increments) {
    if (buffer_.empty()) buffer_.assign(grid_->n_nodes() * dim_, 0.0);
    increments_ = increments.data();
    const std::size_t n_cells = grid_->n_steps();
    for (std::size_t j = 0; j < dim_; ++j) buffer_[j] = 0.0;
    for (std::size_t k = 0; k < n_cells; ++k) {
      for (std::size_t j = 0; j < dim_; ++j) {
        buffer_[(k + 1) * dim_ + j] =
            buffer_[k * dim_ + j] + increments[k * dim_ + j];
      }
    }
    values_ = buffer_.data();
  }

  /// Aliases the given storage in place (view mode).
  void bind(const double* node_values, const double* increments) {
    values_ = node_values;
    increments_ = increments;
  }

  const TimeGrid& grid() const { return *grid_; }
  std::size_t dim() const { return dim_; }

  /// W_{u_k, j} with the convention W_{u_0} = 0.
  double value(std::size_t node, std::size_t j = 0) const {
    return values_[node * dim_ + j];
  }

  double increment(std::size_t cell, std::size_t j = 0) const {
    return increments_[cell * dim_ + j];
  }

  std::span<const double> node_values(std::size_t node) const {
    return {values_ + node * dim_, dim_};
  }

 private:
  PathValues(const TimeGrid& grid, std::size_t dim, std::nullptr_t)
      : grid_(&grid), dim_(dim), values_(nullptr), increments_(nullptr) {}

  bool owns() const { return values_ == buffer_.data() && !buffer_.empty(); }

  const TimeGrid* grid_;
  std::size_t dim_;
  std::vector<double> buffer_;
  const double* values_;
  const double* increments_;
};

/// Non-owning view of an ensemble of increment paths on a shared grid.
struct PathEnsemble {
  const TimeGrid* grid = nullptr;
  std::size_t dim = 1;
  std::size_t n_paths = 0;
  const double* increments = nullptr;

  static PathEnsemble primary(const PathBundle& b) {
    return {&b.grid, b.dim, b.n_paths, b.increments_w.data()};
  }
  static PathEnsemble paired(const PathBundle& b) {
    return {&b.grid, b.dim, b.n_paths, b.increments_wprime.data()};
  }
  static PathEnsemble over(const PathBundle& b,
                           const std::vector<double>& coupled) {
    return {&b.grid, b.dim, b.n_paths, coupled.data()};
  }

  std::size_t stride() const { return grid->n_steps() * dim; }

  std::span<const double> path(std::size_t p) const {
    return {increments + p * stride(), stride()};
  }
};

/// Precomputed node values for every path of an ensemble, [path][node][dim].
inline std::vector<double> accumulate_node_values(const PathEnsemble& paths) {
  const std::size_t n_nodes = paths.grid->n_nodes();
  const std::size_t dim = paths.dim;
  std::vector<double> values(paths.n_paths * n_nodes * dim, 0.0);
  for (std::size_t p = 0; p < paths.n_paths; ++p) {
    const auto incs = paths.path(p);
    double* nodes = values.data() + p * n_nodes * dim;
    for (std::size_t k = 0; k + 1 < n_nodes; ++k) {
      for (std::size_t j = 0; j < dim; ++j) {
        nodes[(k + 1) * dim + j] = nodes[k * dim + j] + incs[k * dim + j];
      }
    }
  }
  return values;
}

}  // namespace fbsde
