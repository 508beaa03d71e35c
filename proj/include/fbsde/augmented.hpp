#pragma once

// The doubled system: rewriting the blended dynamics against the stacked
// 2d-dimensional motion (W, W'). The diffusion of the doubled system is
//
//   Sigma(u, alpha, x, y, (z1, z2)) = (sigma_s(z1), sigma_alpha(z2)),
//   sigma_r(x, y, z) = r * sigma(u, x, y) + A(u, z),  s = sqrt(1 - alpha^2),
//
// and drift/generator read z through z1 + c(u) z2 with the partner weight
// c(u) = (1 - sqrt(1 - phi^2)) / phi. The base solution embeds as
// (X, Y, (Z, 0)); the transferred one as (X^phi, Y^phi,
// (sqrt(1-phi^2) Z^phi, phi Z^phi)).

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fbsde/coupling_function.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/fbsde_spec.hpp"
#include "fbsde/path_bundle.hpp"

namespace fbsde {

/// Pointwise algebraic data of the z-block comparison
/// |(z,0) - (sqrt(1-phi^2) z^phi, phi z^phi)|^2.
struct ZProcessIdentity {
  double lhs = 0.0;       // squared block distance
  double rhs = 0.0;       // (1-s)(|z^phi|^2+|z|^2) + s |z^phi - z|^2, s = sqrt(1-phi^2)
  double residual = 0.0;  // |lhs - rhs|
  double gap_bound = 0.0;     // |z^phi - z|^2 / 2
  double energy_bound = 0.0;  // (1 - s) |z|^2
  bool lower_bounds_hold = false;
};

inline ZProcessIdentity z_process_identity(std::span<const double> z,
                                           std::span<const double> zphi,
                                           double phi) {
  if (z.size() != zphi.size()) {
    throw ConfigError("z_process_identity: size mismatch");
  }
  if (!(phi >= 0.0 && phi <= 1.0)) {
    throw DomainError("z_process_identity: phi outside [0,1]");
  }
  const double s = std::sqrt(1.0 - phi * phi);

  double z_sq = 0.0, zphi_sq = 0.0, diff_sq = 0.0, lhs = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z_sq += z[i] * z[i];
    zphi_sq += zphi[i] * zphi[i];
    const double d = zphi[i] - z[i];
    diff_sq += d * d;
    const double block1 = z[i] - s * zphi[i];
    const double block2 = phi * zphi[i];
    lhs += block1 * block1 + block2 * block2;
  }

  ZProcessIdentity out;
  out.lhs = lhs;
  out.rhs = (1.0 - s) * (zphi_sq + z_sq) + s * diff_sq;
  out.residual = std::abs(out.lhs - out.rhs);
  out.gap_bound = 0.5 * diff_sq;
  out.energy_bound = (1.0 - s) * z_sq;
  const double slack = 1e-12 * (1.0 + z_sq + zphi_sq);
  out.lower_bounds_hold =
      out.lhs + slack >= out.gap_bound && out.lhs + slack >= out.energy_bound;
  return out;
}

/// sigma_r(u, x, y, z) = r * sigma + A(z), written into out (n x d).
inline void sigma_r_eval(const FbsdeSpec& spec, const PathValues& path,
                         std::size_t cell, double r, std::span<const double> x,
                         std::span<const double> y, std::span<const double> z,
                         std::span<double> out) {
  const std::size_t on = spec.dim_diffusion();
  std::vector<double> sv(on), av(on);
  spec.sigma.eval(path, cell, x, y, z, sv);
  spec.a_of_z.eval(path, cell, x, y, z, av);
  for (std::size_t i = 0; i < on; ++i) out[i] = r * sv[i] + av[i];
}

/// Sigma(u, alpha, x, y, (z1, z2)) written into out (n x 2d), block order
/// [z1-block | z2-block] per row.
inline void sigma_big_eval(const FbsdeSpec& spec, const PathValues& path,
                           std::size_t cell, double alpha,
                           std::span<const double> x, std::span<const double> y,
                           std::span<const double> z1,
                           std::span<const double> z2, std::span<double> out) {
  const std::size_t n = spec.dim_x, d = spec.dim_w;
  std::vector<double> left(n * d), right(n * d);
  sigma_r_eval(spec, path, cell, std::sqrt(1.0 - alpha * alpha), x, y, z1, left);
  sigma_r_eval(spec, path, cell, alpha, x, y, z2, right);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out[i * 2 * d + j] = left[i * d + j];
      out[i * 2 * d + d + j] = right[i * d + j];
    }
  }
}

/// Residual of the representation property
///   Sigma(u, alpha, x, y, (s z, alpha z)) = (s mu(z), alpha mu(z)),
/// with s = sqrt(1 - alpha^2) and mu = sigma + A.
inline double representation_residual(const FbsdeSpec& spec,
                                      const PathValues& path, std::size_t cell,
                                      double alpha, std::span<const double> x,
                                      std::span<const double> y,
                                      std::span<const double> z) {
  const std::size_t n = spec.dim_x, d = spec.dim_w;
  const std::size_t nz = spec.dim_z();
  const double s = std::sqrt(1.0 - alpha * alpha);

  std::vector<double> z1(nz), z2(nz);
  for (std::size_t i = 0; i < nz; ++i) {
    z1[i] = s * z[i];
    z2[i] = alpha * z[i];
  }
  std::vector<double> big(n * 2 * d);
  sigma_big_eval(spec, path, cell, alpha, x, y, z1, z2, big);

  std::vector<double> sv(n * d), av(n * d);
  spec.sigma.eval(path, cell, x, y, z, sv);
  spec.a_of_z.eval(path, cell, x, y, z, av);

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double mu = sv[i * d + j] + av[i * d + j];
      worst = std::max(worst, std::abs(big[i * 2 * d + j] - s * mu));
      worst = std::max(worst, std::abs(big[i * 2 * d + d + j] - alpha * mu));
    }
  }
  return worst;
}

/// Doubled coefficient pack over the stacked motion. `alpha_cells` selects
/// the Sigma mixing per cell: all-zero for the base embedding, the coupling
/// profile for the transferred one; the z-blend weight c(u) is the partner
/// weight of the profile in both cases.
inline FbsdeSpec build_augmented_system(const FbsdeSpec& spec,
                                        const std::vector<double>& alpha_cells,
                                        const std::vector<double>& c_cells) {
  spec.validate();
  if (alpha_cells.size() != c_cells.size()) {
    throw ConfigError("build_augmented_system: cell table size mismatch");
  }
  const std::size_t n = spec.dim_x, m = spec.dim_y, d = spec.dim_w;

  FbsdeSpec aug;
  aug.dim_x = n;
  aug.dim_y = m;
  aug.dim_w = 2 * d;
  aug.initial = spec.initial;
  aug.terminal = spec.terminal;

  // Drift and generator read z through the blend z1 + c(u) z2.
  const auto blended = [c_cells](std::span<const double> zbar,
                                 std::vector<double>& z_blend,
                                 std::size_t cell, std::size_t m_,
                                 std::size_t d_) {
    const double c = c_cells.at(cell);
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < d_; ++j) {
        z_blend[i * d_ + j] =
            zbar[i * 2 * d_ + j] + c * zbar[i * 2 * d_ + d_ + j];
      }
    }
  };

  aug.drift = {[inner = spec.drift, blended, m, d](
                   const PathValues& path, std::size_t cell,
                   std::span<const double> x, std::span<const double> y,
                   std::span<const double> zbar, std::span<double> out) {
                 std::vector<double> z_blend(m * d);
                 blended(zbar, z_blend, cell, m, d);
                 inner.eval(path, cell, x, y, z_blend, out);
               },
               spec.drift.deterministic};

  aug.generator = {[inner = spec.generator, blended, m, d](
                       const PathValues& path, std::size_t cell,
                       std::span<const double> x, std::span<const double> y,
                       std::span<const double> zbar, std::span<double> out) {
                     std::vector<double> z_blend(m * d);
                     blended(zbar, z_blend, cell, m, d);
                     inner.eval(path, cell, x, y, z_blend, out);
                   },
                   spec.generator.deterministic};

  // Doubled diffusion split: the z-free part stacks (s sigma, alpha sigma),
  // and the linear part acts blockwise as (A(z1), A(z2)).
  aug.sigma = {[inner = spec.sigma, alpha_cells, n, d](
                   const PathValues& path, std::size_t cell,
                   std::span<const double> x, std::span<const double> y,
                   std::span<const double>, std::span<double> out) {
                 const double alpha = alpha_cells.at(cell);
                 const double s = std::sqrt(1.0 - alpha * alpha);
                 std::vector<double> sv(n * d);
                 std::span<const double> none;
                 inner.eval(path, cell, x, y, none, sv);
                 for (std::size_t i = 0; i < n; ++i) {
                   for (std::size_t j = 0; j < d; ++j) {
                     out[i * 2 * d + j] = s * sv[i * d + j];
                     out[i * 2 * d + d + j] = alpha * sv[i * d + j];
                   }
                 }
               },
               spec.sigma.deterministic};

  aug.a_of_z = {[inner = spec.a_of_z, n, m, d](
                    const PathValues& path, std::size_t cell,
                    std::span<const double> x, std::span<const double> y,
                    std::span<const double> zbar, std::span<double> out) {
                  std::vector<double> z1(m * d), z2(m * d), a1(n * d), a2(n * d);
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                      z1[i * d + j] = zbar[i * 2 * d + j];
                      z2[i * d + j] = zbar[i * 2 * d + d + j];
                    }
                  }
                  inner.eval(path, cell, x, y, z1, a1);
                  inner.eval(path, cell, x, y, z2, a2);
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                      out[i * 2 * d + j] = a1[i * d + j];
                      out[i * 2 * d + d + j] = a2[i * d + j];
                    }
                  }
                },
                spec.a_of_z.deterministic};

  aug.lip = spec.lip;
  aug.lip.b3 = std::sqrt(2.0) * spec.lip.b3;
  aug.lip.f3 = std::sqrt(2.0) * spec.lip.f3;
  // Sigma keeps the mu constants; the terminal map is unchanged.
  return aug;
}

/// Cell tables for the base embedding (alpha == 0) of the doubled system.
inline FbsdeSpec build_augmented_origin(const FbsdeSpec& spec,
                                        const TimeGrid& grid,
                                        const CouplingFunction& phi) {
  const auto phis = phi.cell_values(grid);
  std::vector<double> zeros(phis.size(), 0.0), cs(phis.size());
  for (std::size_t k = 0; k < phis.size(); ++k) cs[k] = partner_weight(phis[k]);
  return build_augmented_system(spec, zeros, cs);
}

/// Cell tables for the transferred side (alpha == phi per cell).
inline FbsdeSpec build_augmented_coupled(const FbsdeSpec& spec,
                                         const TimeGrid& grid,
                                         const CouplingFunction& phi) {
  const auto phis = phi.cell_values(grid);
  std::vector<double> cs(phis.size());
  for (std::size_t k = 0; k < phis.size(); ++k) cs[k] = partner_weight(phis[k]);
  return build_augmented_system(spec, phis, cs);
}

/// Stacked increments of (W, W') as one 2d-dimensional ensemble,
/// [path][cell][2d] with W first.
inline std::vector<double> stack_pair_increments(const PathBundle& bundle) {
  const std::size_t d = bundle.dim;
  const std::size_t n_cells = bundle.grid.n_steps();
  std::vector<double> out(bundle.n_paths * n_cells * 2 * d);
  for (std::size_t p = 0; p < bundle.n_paths; ++p) {
    for (std::size_t k = 0; k < n_cells; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        out[(p * n_cells + k) * 2 * d + j] =
            bundle.increments_w[bundle.index(p, k, j)];
        out[(p * n_cells + k) * 2 * d + d + j] =
            bundle.increments_wprime[bundle.index(p, k, j)];
      }
    }
  }
  return out;
}

}  // namespace fbsde
