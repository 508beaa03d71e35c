#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "fbsde/errors.hpp"

namespace fbsde {

/// Uniform discretization of a time interval [t_start, t_end].
///
/// Nodes are u_k = t_start + k*step for k = 0..n_steps, with the last node
/// pinned to t_end exactly. Cell k (0-based, k = 0..n_steps-1) is the
/// half-open interval (u_k, u_{k+1}]; increment arrays are indexed by cell.
class TimeGrid {
 public:
  TimeGrid(double t_start, double t_end, std::size_t n_steps)
      : t_start_(t_start), t_end_(t_end), n_steps_(n_steps) {
    if (!(t_start < t_end)) {
      throw ConfigError("TimeGrid: t_start must be strictly below t_end");
    }
    if (n_steps == 0) {
      throw ConfigError("TimeGrid: n_steps must be at least 1");
    }
    step_ = (t_end - t_start) / static_cast<double>(n_steps);
  }

  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  double horizon() const { return t_end_ - t_start_; }
  double step() const { return step_; }
  std::size_t n_steps() const { return n_steps_; }
  std::size_t n_nodes() const { return n_steps_ + 1; }

  double node(std::size_t k) const {
    return k == n_steps_ ? t_end_ : t_start_ + static_cast<double>(k) * step_;
  }

  /// Right endpoint of cell k, i.e. node(k+1).
  double cell_right(std::size_t k) const { return node(k + 1); }

  bool is_dyadic() const {
    std::size_t n = n_steps_;
    while (n % 2 == 0) n /= 2;
    return n == 1;
  }

  /// Index of the node matching t, or a GridError if t is not a node.
  std::size_t index_of_node(double t, double tol = 1e-9) const {
    const double k = (t - t_start_) / step_;
    const auto rounded = static_cast<std::size_t>(std::llround(k));
    if (rounded > n_steps_ || std::abs(node(rounded) - t) > tol * scale()) {
      throw GridError("TimeGrid: " + std::to_string(t) + " is not a grid node");
    }
    return rounded;
  }

  bool has_node(double t, double tol = 1e-9) const {
    const double k = (t - t_start_) / step_;
    const auto rounded = static_cast<std::size_t>(std::llround(std::max(k, 0.0)));
    return rounded <= n_steps_ && std::abs(node(rounded) - t) <= tol * scale();
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.t_start_ == b.t_start_ && a.t_end_ == b.t_end_ &&
           a.n_steps_ == b.n_steps_;
  }

 private:
  double scale() const { return std::max(1.0, std::abs(t_end_)); }

  double t_start_;
  double t_end_;
  std::size_t n_steps_;
  double step_;
};

}  // namespace fbsde
