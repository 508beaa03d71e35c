#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/time_grid.hpp"

namespace fbsde {

/// Correlation profile u -> value in [0,1] that blends a path with its
/// independent partner. Evaluated once per grid cell at the cell's right
/// endpoint, which makes indicator profiles exact on grid-aligned (a,c].
class CouplingFunction {
 public:
  enum class Kind { kConstant, kIndicator, kTabulated };

  static CouplingFunction constant(double r) {
    require_unit_interval(r);
    CouplingFunction phi;
    phi.kind_ = Kind::kConstant;
    phi.r_ = r;
    return phi;
  }

  /// Indicator of the half-open window (a, c]. Both endpoints must be grid
  /// nodes of whatever grid the profile is evaluated on.
  static CouplingFunction indicator(double a, double c) {
    if (!(a < c)) {
      throw ConfigError("CouplingFunction: indicator needs a < c");
    }
    CouplingFunction phi;
    phi.kind_ = Kind::kIndicator;
    phi.a_ = a;
    phi.c_ = c;
    return phi;
  }

  /// Piecewise-constant profile with one value per grid cell.
  static CouplingFunction tabulated(std::vector<double> cell_values) {
    for (double v : cell_values) require_unit_interval(v);
    CouplingFunction phi;
    phi.kind_ = Kind::kTabulated;
    phi.values_ = std::move(cell_values);
    return phi;
  }

  Kind kind() const { return kind_; }
  double constant_value() const { return r_; }
  double window_start() const { return a_; }
  double window_end() const { return c_; }

  /// Checks grid compatibility: indicator endpoints on nodes inside the
  /// horizon, tabulated size matching the cell count.
  void validate(const TimeGrid& grid) const {
    switch (kind_) {
      case Kind::kConstant:
        return;
      case Kind::kIndicator:
        if (a_ < grid.t_start() - 1e-12 || c_ > grid.t_end() + 1e-12) {
          throw ConfigError("CouplingFunction: window outside the horizon");
        }
        grid.index_of_node(a_);
        grid.index_of_node(c_);
        return;
      case Kind::kTabulated:
        if (values_.size() != grid.n_steps()) {
          throw ConfigError(
              "CouplingFunction: tabulated profile has " +
              std::to_string(values_.size()) + " cells, grid has " +
              std::to_string(grid.n_steps()));
        }
        return;
    }
  }

  /// Value on cell k = (u_k, u_{k+1}], evaluated at the right endpoint.
  double value_on_cell(const TimeGrid& grid, std::size_t cell) const {
    switch (kind_) {
      case Kind::kConstant:
        return r_;
      case Kind::kIndicator: {
        const double u = grid.cell_right(cell);
        return (u > a_ + kEndpointTol && u <= c_ + kEndpointTol) ? 1.0 : 0.0;
      }
      case Kind::kTabulated:
        return values_.at(cell);
    }
    return 0.0;  // unreachable
  }

  /// All cell values at once; validates against the grid first.
  std::vector<double> cell_values(const TimeGrid& grid) const {
    validate(grid);
    std::vector<double> out(grid.n_steps());
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = value_on_cell(grid, k);
    }
    return out;
  }

  bool is_identically_zero(const TimeGrid& grid) const {
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
      if (value_on_cell(grid, k) != 0.0) return false;
    }
    return true;
  }

 private:
  static constexpr double kEndpointTol = 1e-12;

  static void require_unit_interval(double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("CouplingFunction: value " + std::to_string(v) +
                        " outside [0,1]");
    }
  }

  Kind kind_ = Kind::kConstant;
  double r_ = 0.0;
  double a_ = 0.0;
  double c_ = 0.0;
  std::vector<double> values_;
};

/// Weight of the partner motion: (1 - sqrt(1 - phi^2)) / phi on {phi != 0},
/// zero elsewhere. Satisfies 0 <= c(u) <= phi(u) <= 1.
inline double partner_weight(double phi) {
  if (phi == 0.0) return 0.0;
  return (1.0 - std::sqrt(1.0 - phi * phi)) / phi;
}

}  // namespace fbsde
