#pragma once

// Discrete-time Picard solver for the coupled system on a (short) node range.
//
// Given a forward ensemble X, the backward equation is solved by per-step
// least-squares regression:
//   Yhat_k = E[Y_{k+1} | X_k]           (projection on the polynomial basis)
//   Z_k    = E[(Y_{k+1} - Yhat_k) dW_k | X_k] / du
//   Y_k    = Yhat_k + du * f(u_k, X_k, Yhat_k, Z_k)
// and X is then rolled forward by Euler with b and sigma + A. The loop
// repeats until the batch sup-norm change of X drops below tolerance.
//
// Centering the martingale-increment regression on Yhat keeps its residual
// variance bounded as the grid is refined.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/fbsde_spec.hpp"
#include "fbsde/path_bundle.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/stats.hpp"

namespace fbsde {

struct PicardConfig {
  int max_iter = 50;
  double tol = 1e-6;
  /// When set, solving a range longer than this raises unless
  /// allow_long_interval is true.
  double max_interval = std::numeric_limits<double>::quiet_NaN();
  bool allow_long_interval = false;
  bool require_gate = true;  // enforce the p = 2 solvability product up front
};

/// Half-open node range [first_node, last_node] on the master grid; the range
/// owns cells first_node .. last_node-1.
struct NodeRange {
  std::size_t first_node = 0;
  std::size_t last_node = 0;

  static NodeRange full(const TimeGrid& grid) { return {0, grid.n_steps()}; }
  std::size_t n_cells() const { return last_node - first_node; }
};

/// Override of terminal data (used when stitching with a fitted field).
using TerminalOverride =
    std::function<void(const PathValues& path, std::span<const double> x,
                       std::span<double> out)>;

struct SolveOptions {
  /// Coefficients are read from this ensemble when set; defaults to the
  /// driving ensemble. Lets the transferred system integrate against one
  /// motion while its coefficients are functionals of another.
  std::optional<PathEnsemble> coefficient_paths;
  std::optional<TerminalOverride> terminal_override;
  /// Per-path initial states, [path][dim_x]; defaults to spec.initial.
  std::optional<std::vector<double>> initial_values;
  /// The process Z is pinned to zero on the first cell of the start time.
  bool zero_first_cell = true;
};

/// Discretized solution triple on a node range, per Monte Carlo path.
/// Z follows the predictable convention: its value on cell c is a function of
/// the state at the cell's left node.
struct SolutionTriple {
  TimeGrid grid{0.0, 1.0, 1};
  NodeRange range;
  std::size_t n_paths = 0;
  std::size_t dim_x = 1, dim_y = 1, dim_w = 1;
  std::vector<double> x;  // [path][local_node][dim_x]
  std::vector<double> y;  // [path][local_node][dim_y]
  std::vector<double> z;  // [path][local_cell][dim_y * dim_w]
  std::vector<double> picard_residuals;

  std::size_t n_local_nodes() const { return range.n_cells() + 1; }

  double x_at(std::size_t p, std::size_t local_node, std::size_t i = 0) const {
    return x[(p * n_local_nodes() + local_node) * dim_x + i];
  }
  double y_at(std::size_t p, std::size_t local_node, std::size_t i = 0) const {
    return y[(p * n_local_nodes() + local_node) * dim_y + i];
  }
  double z_at(std::size_t p, std::size_t local_cell, std::size_t i = 0,
              std::size_t j = 0) const {
    return z[(p * range.n_cells() + local_cell) * dim_y * dim_w + i * dim_w + j];
  }

  std::span<const double> x_node(std::size_t p, std::size_t local_node) const {
    return {x.data() + (p * n_local_nodes() + local_node) * dim_x, dim_x};
  }
  std::span<const double> y_node(std::size_t p, std::size_t local_node) const {
    return {y.data() + (p * n_local_nodes() + local_node) * dim_y, dim_y};
  }
  std::span<const double> z_cell(std::size_t p, std::size_t local_cell) const {
    return {z.data() + (p * range.n_cells() + local_cell) * dim_y * dim_w,
            dim_y * dim_w};
  }
};

namespace detail {

/// Shared per-solve workspace: coefficient path views over precomputed node
/// values of the coefficient ensemble.
class CoefficientPaths {
 public:
  explicit CoefficientPaths(const PathEnsemble& paths)
      : paths_(paths), node_values_(accumulate_node_values(paths)),
        view_(PathValues::view(*paths.grid, paths.dim, nullptr, nullptr)) {}

  const PathValues& at(std::size_t p) {
    const std::size_t n_nodes = paths_.grid->n_nodes();
    view_.bind(node_values_.data() + p * n_nodes * paths_.dim,
               paths_.increments + p * paths_.stride());
    return view_;
  }

 private:
  PathEnsemble paths_;
  std::vector<double> node_values_;
  PathValues view_;
};

}  // namespace detail

inline SolutionTriple solve_small_interval(const FbsdeSpec& spec,
                                           const PathEnsemble& driving,
                                           NodeRange range,
                                           const PicardConfig& picard = {},
                                           const RegressionConfig& regression = {},
                                           const SolveOptions& options = {}) {
  spec.validate();
  const TimeGrid& grid = *driving.grid;
  if (range.last_node <= range.first_node || range.last_node > grid.n_steps()) {
    throw ConfigError("solve_small_interval: empty or out-of-range node range");
  }
  if (driving.dim != spec.dim_w) {
    throw ConfigError("solve_small_interval: driving dimension mismatch");
  }
  if (picard.require_gate) {
    const auto verdict = check_solvability(spec, 2.0);
    if (!verdict.pass) {
      throw StructureError(
          "solve_small_interval: solvability gate fails, L_g * L_mu3 = " +
          std::to_string(verdict.product));
    }
  }
  const double du = grid.step();
  const double length = du * static_cast<double>(range.n_cells());
  if (!std::isnan(picard.max_interval) && length > picard.max_interval &&
      !picard.allow_long_interval) {
    throw ConfigError("solve_small_interval: range length " +
                      std::to_string(length) +
                      " exceeds the recommended interval " +
                      std::to_string(picard.max_interval));
  }

  const std::size_t n_paths = driving.n_paths;
  const std::size_t nx = spec.dim_x, ny = spec.dim_y, nw = spec.dim_w;
  const std::size_t nz = ny * nw;
  const std::size_t n_cells = range.n_cells();
  const std::size_t n_nodes = n_cells + 1;

  detail::CoefficientPaths coeff_paths(
      options.coefficient_paths.value_or(driving));

  SolutionTriple sol;
  sol.grid = grid;
  sol.range = range;
  sol.n_paths = n_paths;
  sol.dim_x = nx;
  sol.dim_y = ny;
  sol.dim_w = nw;
  sol.x.assign(n_paths * n_nodes * nx, 0.0);
  sol.y.assign(n_paths * n_nodes * ny, 0.0);
  sol.z.assign(n_paths * n_cells * nz, 0.0);

  // Initial states.
  if (options.initial_values.has_value()) {
    if (options.initial_values->size() != n_paths * nx) {
      throw ConfigError("solve_small_interval: initial_values size mismatch");
    }
    for (std::size_t p = 0; p < n_paths; ++p) {
      for (std::size_t i = 0; i < nx; ++i) {
        sol.x[(p * n_nodes) * nx + i] = (*options.initial_values)[p * nx + i];
      }
    }
  } else {
    std::vector<double> x0(nx);
    for (std::size_t p = 0; p < n_paths; ++p) {
      spec.initial.eval(coeff_paths.at(p), range.first_node, x0);
      for (std::size_t i = 0; i < nx; ++i) sol.x[(p * n_nodes) * nx + i] = x0[i];
    }
  }

  const auto eval_terminal = [&](std::size_t p, std::span<const double> xT,
                                 std::span<double> out) {
    if (options.terminal_override.has_value()) {
      (*options.terminal_override)(coeff_paths.at(p), xT, out);
    } else {
      spec.terminal.eval(coeff_paths.at(p), xT, out);
    }
  };

  const std::size_t state_dim = nx + (regression.include_y ? ny : 0);
  PolynomialBasis basis(state_dim, regression.degree);
  const std::size_t nb = basis.size();

  std::vector<double> state(state_dim);
  std::vector<double> x_prev;

  // Seed X by an Euler roll with zero backward feedback.
  const auto forward_roll = [&](const std::vector<double>* y_nodes,
                                const std::vector<double>* z_cells) {
    std::vector<double> bv(nx), sv(nx * nw), av(nx * nw);
    const std::vector<double> zeros_y(ny, 0.0), zeros_z(nz, 0.0);
    for (std::size_t p = 0; p < n_paths; ++p) {
      const PathValues& cpath = coeff_paths.at(p);
      const double* dw = driving.increments + p * driving.stride();
      for (std::size_t c = 0; c < n_cells; ++c) {
        const std::size_t cell = range.first_node + c;
        const double* xk = sol.x.data() + (p * n_nodes + c) * nx;
        std::span<const double> yk =
            y_nodes ? std::span<const double>(
                          y_nodes->data() + (p * n_nodes + c) * ny, ny)
                    : std::span<const double>(zeros_y);
        std::span<const double> zk =
            z_cells ? std::span<const double>(
                          z_cells->data() + (p * n_cells + c) * nz, nz)
                    : std::span<const double>(zeros_z);
        spec.drift.eval(cpath, cell, {xk, nx}, yk, zk, bv);
        spec.sigma.eval(cpath, cell, {xk, nx}, yk, zk, sv);
        spec.a_of_z.eval(cpath, cell, {xk, nx}, yk, zk, av);
        double* xnext = sol.x.data() + (p * n_nodes + c + 1) * nx;
        for (std::size_t i = 0; i < nx; ++i) {
          double acc = xk[i] + bv[i] * du;
          for (std::size_t j = 0; j < nw; ++j) {
            acc += (sv[i * nw + j] + av[i * nw + j]) * dw[cell * nw + j];
          }
          xnext[i] = acc;
        }
      }
    }
  };

  const auto backward_pass = [&]() {
    // Terminal values.
    std::vector<double> gout(ny);
    for (std::size_t p = 0; p < n_paths; ++p) {
      eval_terminal(p, sol.x_node(p, n_cells), gout);
      for (std::size_t i = 0; i < ny; ++i) {
        sol.y[(p * n_nodes + n_cells) * ny + i] = gout[i];
      }
    }

    Eigen::MatrixXd design(n_paths, nb);
    Eigen::MatrixXd y_targets(n_paths, ny);
    Eigen::MatrixXd z_targets(n_paths, nz);
    std::vector<double> basis_row(nb), fv(ny);

    for (std::size_t cc = n_cells; cc-- > 0;) {
      const std::size_t cell = range.first_node + cc;
      for (std::size_t p = 0; p < n_paths; ++p) {
        const double* xk = sol.x.data() + (p * n_nodes + cc) * nx;
        if (regression.include_y) {
          std::copy(xk, xk + nx, state.begin());
          const double* yk1 = sol.y.data() + (p * n_nodes + cc + 1) * ny;
          std::copy(yk1, yk1 + ny, state.begin() + nx);
          basis.eval(state, basis_row);
        } else {
          basis.eval({xk, nx}, basis_row);
        }
        for (std::size_t t = 0; t < nb; ++t) design(p, t) = basis_row[t];
        for (std::size_t i = 0; i < ny; ++i) {
          y_targets(p, i) = sol.y[(p * n_nodes + cc + 1) * ny + i];
        }
      }
      CrossSectionFit fit(std::move(design), regression.strict_rank);
      design.resize(n_paths, nb);

      const Eigen::MatrixXd y_hat = fit.fitted(y_targets);

      for (std::size_t p = 0; p < n_paths; ++p) {
        const double* dw = driving.increments + p * driving.stride();
        for (std::size_t i = 0; i < ny; ++i) {
          const double centered = y_targets(p, i) - y_hat(p, i);
          for (std::size_t j = 0; j < nw; ++j) {
            z_targets(p, i * nw + j) = centered * dw[cell * nw + j] / du;
          }
        }
      }
      const Eigen::MatrixXd z_hat = fit.fitted(z_targets);

      std::vector<double> yhat_row(ny);
      for (std::size_t p = 0; p < n_paths; ++p) {
        const PathValues& cpath = coeff_paths.at(p);
        double* zc = sol.z.data() + (p * n_cells + cc) * nz;
        for (std::size_t e = 0; e < nz; ++e) zc[e] = z_hat(p, e);
        const double* xk = sol.x.data() + (p * n_nodes + cc) * nx;
        for (std::size_t i = 0; i < ny; ++i) yhat_row[i] = y_hat(p, i);
        spec.generator.eval(cpath, cell, {xk, nx}, yhat_row, {zc, nz}, fv);
        for (std::size_t i = 0; i < ny; ++i) {
          sol.y[(p * n_nodes + cc) * ny + i] = yhat_row[i] + du * fv[i];
        }
      }
    }
  };

  forward_roll(nullptr, nullptr);

  bool converged = false;
  for (int it = 0; it < picard.max_iter; ++it) {
    backward_pass();
    x_prev = sol.x;
    forward_roll(&sol.y, &sol.z);

    double residual = 0.0;
    for (std::size_t i = 0; i < sol.x.size(); ++i) {
      residual = std::max(residual, std::abs(sol.x[i] - x_prev[i]));
    }
    sol.picard_residuals.push_back(residual);
    if (residual < picard.tol) {
      // Refresh the backward data along the converged forward ensemble,
      // unless the last roll was a bitwise fixed point already.
      if (residual > 0.0) backward_pass();
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError(
        "solve_small_interval: Picard iteration did not reach tol " +
            std::to_string(picard.tol) + " within " +
            std::to_string(picard.max_iter) + " iterations",
        sol.picard_residuals);
  }

  if (options.zero_first_cell) {
    for (std::size_t p = 0; p < n_paths; ++p) {
      double* zc = sol.z.data() + (p * n_cells) * nz;
      for (std::size_t e = 0; e < nz; ++e) zc[e] = 0.0;
    }
  }
  return sol;
}

// --- solution norms and diagnostics ------------------------------------------

namespace detail {

inline double sup_norm_sq(std::span<const double> block, std::size_t n_nodes,
                          std::size_t dim) {
  double peak = 0.0;
  for (std::size_t k = 0; k < n_nodes; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double v = block[k * dim + i];
      acc += v * v;
    }
    peak = std::max(peak, acc);
  }
  return peak;
}

}  // namespace detail

/// E[ sup|X|^p + sup|Y|^p + (int |Z|^2 du)^{p/2} ] with sups over grid nodes.
inline double theta_norm(const SolutionTriple& sol, double p) {
  if (!(p >= 1.0)) throw ConfigError("theta_norm: p must be >= 1");
  const std::size_t n_nodes = sol.n_local_nodes();
  const std::size_t n_cells = sol.range.n_cells();
  const std::size_t nz = sol.dim_y * sol.dim_w;
  const double du = sol.grid.step();

  double acc = 0.0;
  for (std::size_t pth = 0; pth < sol.n_paths; ++pth) {
    const double sup_x = detail::sup_norm_sq(
        {sol.x.data() + pth * n_nodes * sol.dim_x, n_nodes * sol.dim_x},
        n_nodes, sol.dim_x);
    const double sup_y = detail::sup_norm_sq(
        {sol.y.data() + pth * n_nodes * sol.dim_y, n_nodes * sol.dim_y},
        n_nodes, sol.dim_y);
    double z_energy = 0.0;
    for (std::size_t c = 0; c < n_cells; ++c) {
      const double* zc = sol.z.data() + (pth * n_cells + c) * nz;
      double cell = 0.0;
      for (std::size_t e = 0; e < nz; ++e) cell += zc[e] * zc[e];
      z_energy += cell * du;
    }
    acc += std::pow(sup_x, p / 2.0) + std::pow(sup_y, p / 2.0) +
           std::pow(z_energy, p / 2.0);
  }
  return acc / static_cast<double>(sol.n_paths);
}

struct AprioriReport {
  double solution_norm = 0.0;    // ||Theta||^p_{p,*}
  double driver_potential = 0.0; // E[|xi|^p + |g(0)|^p + integral terms]
  double ratio = 0.0;
  bool degenerate = false;  // potential ~ 0 while the norm is not
};

/// Empirical two-sided data of the a priori estimate: the solution norm and
/// the zero-state driver potential, with their ratio.
inline AprioriReport apriori_check(const FbsdeSpec& spec,
                                   const SolutionTriple& sol,
                                   const PathEnsemble& coefficient_paths,
                                   double p) {
  const std::size_t nx = spec.dim_x, ny = spec.dim_y;
  const std::size_t nz = spec.dim_z(), on = spec.dim_diffusion();
  const double du = sol.grid.step();
  const std::size_t n_cells = sol.range.n_cells();

  detail::CoefficientPaths paths(coefficient_paths);
  const std::vector<double> zx(nx, 0.0), zy(ny, 0.0), zz(nz, 0.0);
  std::vector<double> bv(nx), sv(on), av(on), fv(ny), gv(ny);

  double potential = 0.0;
  for (std::size_t pth = 0; pth < sol.n_paths; ++pth) {
    const PathValues& cpath = paths.at(pth);
    double b_int = 0.0, mu_int = 0.0, f_int = 0.0;
    for (std::size_t c = 0; c < n_cells; ++c) {
      const std::size_t cell = sol.range.first_node + c;
      spec.drift.eval(cpath, cell, zx, zy, zz, bv);
      spec.sigma.eval(cpath, cell, zx, zy, zz, sv);
      spec.a_of_z.eval(cpath, cell, zx, zy, zz, av);
      spec.generator.eval(cpath, cell, zx, zy, zz, fv);
      double bn = 0.0, mn = 0.0, fn = 0.0;
      for (std::size_t i = 0; i < nx; ++i) bn += bv[i] * bv[i];
      for (std::size_t i = 0; i < on; ++i) {
        const double m = sv[i] + av[i];
        mn += m * m;
      }
      for (std::size_t i = 0; i < ny; ++i) fn += fv[i] * fv[i];
      b_int += std::sqrt(bn) * du;
      mu_int += mn * du;
      f_int += std::sqrt(fn) * du;
    }
    spec.terminal.eval(cpath, zx, gv);
    double g0 = 0.0;
    for (std::size_t i = 0; i < ny; ++i) g0 += gv[i] * gv[i];
    double xi = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      const double v = sol.x_at(pth, 0, i);
      xi += v * v;
    }
    potential += std::pow(xi, p / 2.0) + std::pow(g0, p / 2.0) +
                 std::pow(b_int, p) + std::pow(mu_int, p / 2.0) +
                 std::pow(f_int, p);
  }
  potential /= static_cast<double>(sol.n_paths);

  AprioriReport report;
  report.solution_norm = theta_norm(sol, p);
  report.driver_potential = potential;
  report.degenerate = potential < 1e-14 && report.solution_norm > 1e-10;
  report.ratio = report.degenerate
                     ? std::numeric_limits<double>::infinity()
                     : (potential == 0.0 ? 0.0 : report.solution_norm / potential);
  return report;
}

/// Empirical contraction probe: halve the horizon until the Picard residual
/// ratio falls below `target_ratio`; returns the first length that does.
/// Specs whose forward part ignores (Y, Z) converge immediately and return
/// the full horizon.
inline double probe_contraction_delta(const FbsdeSpec& spec,
                                      const TimeGrid& grid,
                                      std::uint64_t seed,
                                      std::size_t n_paths = 2000,
                                      double target_ratio = 0.5,
                                      int max_halvings = 6) {
  const auto bundle = sample_paths(grid, spec.dim_w, n_paths, seed);
  const auto driving = PathEnsemble::primary(bundle);

  std::size_t cells = grid.n_steps();
  for (int h = 0; h <= max_halvings; ++h, cells /= 2) {
    if (cells == 0) break;
    PicardConfig cfg;
    cfg.max_iter = 25;
    cfg.tol = 1e-10;
    try {
      const auto sol = solve_small_interval(spec, driving,
                                            {0, cells}, cfg, {}, {});
      const auto& res = sol.picard_residuals;
      if (res.size() <= 1 || res.front() == 0.0) {
        return grid.step() * static_cast<double>(cells);
      }
      double worst_ratio = 0.0;
      for (std::size_t i = 1; i < res.size(); ++i) {
        if (res[i - 1] > 1e-14) {
          worst_ratio = std::max(worst_ratio, res[i] / res[i - 1]);
        }
      }
      if (worst_ratio < target_ratio) {
        return grid.step() * static_cast<double>(cells);
      }
    } catch (const ConvergenceError&) {
      // keep halving
    }
  }
  return grid.step();  // the smallest interval we can resolve
}

}  // namespace fbsde
