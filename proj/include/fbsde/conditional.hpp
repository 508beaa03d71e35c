#pragma once

// Conditional expectations given the information outside a time window, and
// the two-sided comparison they satisfy against the window coupling.

#include <cmath>
#include <cstddef>
#include <vector>

#include "fbsde/coupling_function.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/functional.hpp"
#include "fbsde/path_bundle.hpp"
#include "fbsde/stats.hpp"

namespace fbsde {

/// Identifies the sigma-algebra generated by the path outside (a, c]:
/// increments up to a together with increments after c.
struct SigmaAlgebraWindow {
  double a = 0.0;
  double c = 0.0;

  void validate(const TimeGrid& grid) const {
    if (!(a < c)) throw ConfigError("SigmaAlgebraWindow: need a < c");
    grid.index_of_node(a);
    grid.index_of_node(c);
  }
};

/// Nested Monte Carlo estimate of E[xi | window information] per outer path:
/// increments outside (a,c] stay frozen, the inside is resampled n_inner
/// times and the functional values averaged. Unbiased; exact (bitwise) when
/// xi does not depend on the inside increments.
inline std::vector<double> conditional_expectation_window(
    const ScalarFunctional& f, const PathBundle& bundle,
    const SigmaAlgebraWindow& window, std::size_t n_inner = 256) {
  if (!f.eval) throw ContractError("conditional_expectation_window: empty functional");
  if (n_inner == 0) {
    throw ConfigError("conditional_expectation_window: n_inner must be >= 1");
  }
  window.validate(bundle.grid);
  const std::size_t cell_begin = bundle.grid.index_of_node(window.a);
  const std::size_t cell_end = bundle.grid.index_of_node(window.c);
  const double sqrt_step = std::sqrt(bundle.grid.step());

  std::vector<double> out(bundle.n_paths);
  std::vector<double> incs(bundle.stride());
  PathValues path(bundle.grid, bundle.dim);

  for (std::size_t p = 0; p < bundle.n_paths; ++p) {
    const auto frozen = bundle.path_w(p);
    std::copy(frozen.begin(), frozen.end(), incs.begin());

    // Mean accumulated relative to the first replicate: when every replicate
    // produces the same value the sum of differences is exactly zero, so
    // window-measurable functionals are returned bit-identically.
    double first = 0.0;
    double acc = 0.0;
    for (std::size_t rep = 0; rep < n_inner; ++rep) {
      for (std::size_t cell = cell_begin; cell < cell_end; ++cell) {
        for (std::size_t j = 0; j < bundle.dim; ++j) {
          incs[cell * bundle.dim + j] =
              sqrt_step * normal_draw(bundle.seed, bundle.stream_id, p, cell,
                                      noise_lane(NoiseRole::kInner, j),
                                      rep + 1);
        }
      }
      path.rebuild(incs);
      const double v = f.eval(path);
      if (rep == 0) {
        first = v;
      } else {
        acc += v - first;
      }
    }
    out[p] = first + acc / static_cast<double>(n_inner);
  }
  return out;
}

/// Result of one two-sided comparison run.
struct SandwichReport {
  double p = 2.0;
  Estimate lhs;  // 2^{-p} E|xi - xi^phi|^p
  Estimate mid;  // E|xi - E[xi | window]|^p
  Estimate rhs;  // E|xi - xi^phi|^p
  bool pass = false;
};

/// Computes the chain  2^{-p} E|xi-xi^phi|^p <= E|xi-E[xi|G]|^p
/// <= E|xi-xi^phi|^p  with phi the indicator of the window, and checks it
/// within `n_se` standard errors.
inline SandwichReport sandwich_check(const ScalarFunctional& f,
                                     const PathBundle& bundle,
                                     const SigmaAlgebraWindow& window,
                                     double p, std::size_t n_inner = 256,
                                     double n_se = 3.0) {
  if (!(p >= 1.0)) throw ConfigError("sandwich_check: p must be >= 1");
  window.validate(bundle.grid);

  const auto phi = CouplingFunction::indicator(window.a, window.c);
  const auto paired = transfer_variable(f, bundle, phi);
  const auto cond = conditional_expectation_window(f, bundle, window, n_inner);

  std::vector<double> gap_pow(bundle.n_paths), mid_pow(bundle.n_paths);
  for (std::size_t i = 0; i < bundle.n_paths; ++i) {
    gap_pow[i] = std::pow(std::abs(paired.base[i] - paired.transferred[i]), p);
    mid_pow[i] = std::pow(std::abs(paired.base[i] - cond[i]), p);
  }

  SandwichReport report;
  report.p = p;
  report.rhs = mean_se(gap_pow);
  report.mid = mean_se(mid_pow);
  const double scale = std::pow(2.0, -p);
  report.lhs = {scale * report.rhs.mean, scale * report.rhs.se};

  const double slack_lo = n_se * std::hypot(report.lhs.se, report.mid.se);
  const double slack_hi = n_se * std::hypot(report.mid.se, report.rhs.se);
  report.pass = report.lhs.mean <= report.mid.mean + slack_lo &&
                report.mid.mean <= report.rhs.mean + slack_hi;
  return report;
}

}  // namespace fbsde
