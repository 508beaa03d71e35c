#pragma once

// The p-coupling variance of a solved system: how far the triple moves when
// every coefficient and the driving motion are re-read on the blended path,
// split into its four components
//
//   E sup|X - X^phi|^p + E sup|Y - Y^phi|^p
//     + E (int |Z - Z^phi|^2 du)^{p/2}
//     + E (int (1 - sqrt(1 - phi^2)) |Z|^2 du)^{p/2},
//
// together with the bound-side quantities: the coefficient potential U_p
// along the base solution, the profile term S_p, and the zero-state
// integrability terms I_{p,.}.
//
// Base and transferred solves share the same (W, W') draw, so a vanishing
// profile gives bitwise-zero gaps.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fbsde/coupling_function.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/fbsde_spec.hpp"
#include "fbsde/path_bundle.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/stats.hpp"

namespace fbsde {

struct VarianceReport {
  double p = 2.0;
  double t1 = 0.0, t2 = 0.0;
  std::string phi_label;

  Estimate sup_x_gap;    // E sup |X - X^phi|^p
  Estimate sup_y_gap;    // E sup |Y - Y^phi|^p
  Estimate z_gap;        // E (int |Z - Z^phi|^2)^{p/2}
  Estimate phi_z_energy; // E (int (1 - sqrt(1-phi^2)) |Z|^2)^{p/2}
  Estimate cv;           // sum of the four components

  Estimate initial_gap;   // E |xi - xi^phi|^p
  Estimate terminal_gap;  // E |g(X_T) - g^phi(X_T)|^p
  Estimate u_potential;   // E U_p
  double s_profile = 0.0; // S_p
  double i_pb = 0.0, i_pf = 0.0, i_pmu = 0.0, i_pT = 0.0;
  double p_potential = 0.0;  // terminal gap + E U_p

  double bound_denominator = 0.0;
  double bound_ratio = 0.0;
  bool degenerate_denominator = false;
  bool vacuous = false;  // both sides at zero (identity profile)
};

namespace detail {

inline double pow_p(double base, double p) {
  return base == 0.0 ? 0.0 : std::pow(base, p);
}

}  // namespace detail

/// Solves the transferred system on the same bundle (same probability draw):
/// coefficients and driving increments both re-read on W^phi.
inline SolutionTriple solve_transferred(const FbsdeSpec& spec,
                                        const PathBundle& bundle,
                                        const std::vector<double>& coupled_incs,
                                        const PicardConfig& picard,
                                        const RegressionConfig& regression) {
  return solve_small_interval(spec, PathEnsemble::over(bundle, coupled_incs),
                              NodeRange::full(bundle.grid), picard, regression);
}

/// Full variance report for one profile over the node interval
/// [interval.first_node, interval.last_node]. When `base` is supplied it must
/// come from the same bundle with the same configs; the transferred solve is
/// always performed here.
inline VarianceReport estimate_cv(const FbsdeSpec& spec,
                                  const PathBundle& bundle,
                                  const CouplingFunction& phi, double p,
                                  std::optional<NodeRange> interval = {},
                                  const PicardConfig& picard = {},
                                  const RegressionConfig& regression = {},
                                  const SolutionTriple* base = nullptr,
                                  SolutionTriple* coupled_out = nullptr) {
  if (!(p >= 1.0)) throw ConfigError("estimate_cv: p must be >= 1");
  const TimeGrid& grid = bundle.grid;
  const NodeRange window = interval.value_or(NodeRange::full(grid));
  phi.validate(grid);

  SolutionTriple base_local;
  if (base == nullptr) {
    base_local = solve_small_interval(spec, PathEnsemble::primary(bundle),
                                      NodeRange::full(grid), picard, regression);
    base = &base_local;
  }
  if (base->range.first_node != 0 || base->range.last_node != grid.n_steps()) {
    throw ConfigError("estimate_cv: base solution must span the full grid");
  }
  const auto coupled_incs = build_coupled_increments(bundle, phi);
  const auto coupled =
      solve_transferred(spec, bundle, coupled_incs, picard, regression);

  const std::size_t n_paths = bundle.n_paths;
  const std::size_t nx = spec.dim_x, ny = spec.dim_y, nz = spec.dim_z();
  const std::size_t on = spec.dim_diffusion();
  const double du = grid.step();
  const auto phis = phi.cell_values(grid);

  VarianceReport report;
  report.p = p;
  report.t1 = grid.node(window.first_node);
  report.t2 = grid.node(window.last_node);

  std::vector<double> s_sup_x(n_paths), s_sup_y(n_paths), s_zgap(n_paths),
      s_energy(n_paths), s_cv(n_paths), s_u(n_paths), s_ig(n_paths),
      s_tg(n_paths);

  // Coefficient path views for both motions.
  detail::CoefficientPaths base_paths(PathEnsemble::primary(bundle));
  detail::CoefficientPaths coupled_paths(
      PathEnsemble::over(bundle, coupled_incs));

  std::vector<double> h0(std::max({nx, ny, on})), h1(std::max({nx, ny, on}));
  std::vector<double> s0(on), a0(on), s1(on), a1(on);
  std::vector<double> gx(ny), gxphi(ny), xi0(nx), xi1(nx);

  // S_p pieces and I terms accumulate alongside.
  const std::vector<double> zx(nx, 0.0), zy(ny, 0.0), zzero(nz, 0.0);
  double phi_sq_int = 0.0;
  for (std::size_t c = window.first_node; c < window.last_node; ++c) {
    phi_sq_int += phis[c] * phis[c] * du;
  }
  double sup_x_abs_p = 0.0, sup_y_abs_p = 0.0, sigma0_energy = 0.0;
  double i_pb = 0.0, i_pf = 0.0, i_pmu = 0.0;
  double xi_p = 0.0, g0_p = 0.0;
  double i_pb_full = 0.0, i_pf_full = 0.0, i_pmu_full = 0.0;

  for (std::size_t pth = 0; pth < n_paths; ++pth) {
    const PathValues& wpath = base_paths.at(pth);

    double sup_dx = 0.0, sup_dy = 0.0, zgap_int = 0.0, energy_int = 0.0;
    double sup_x_abs = 0.0, sup_y_abs = 0.0;
    for (std::size_t k = window.first_node; k <= window.last_node; ++k) {
      double dx = 0.0, xabs = 0.0;
      for (std::size_t i = 0; i < nx; ++i) {
        const double d = base->x_at(pth, k, i) - coupled.x_at(pth, k, i);
        dx += d * d;
        xabs += base->x_at(pth, k, i) * base->x_at(pth, k, i);
      }
      double dy = 0.0, yabs = 0.0;
      for (std::size_t i = 0; i < ny; ++i) {
        const double d = base->y_at(pth, k, i) - coupled.y_at(pth, k, i);
        dy += d * d;
        yabs += base->y_at(pth, k, i) * base->y_at(pth, k, i);
      }
      sup_dx = std::max(sup_dx, dx);
      sup_dy = std::max(sup_dy, dy);
      sup_x_abs = std::max(sup_x_abs, xabs);
      sup_y_abs = std::max(sup_y_abs, yabs);
    }
    for (std::size_t c = window.first_node; c < window.last_node; ++c) {
      double dz = 0.0, z_sq = 0.0;
      for (std::size_t e = 0; e < nz; ++e) {
        const double zb = base->z[(pth * grid.n_steps() + c) * nz + e];
        const double zc = coupled.z[(pth * grid.n_steps() + c) * nz + e];
        dz += (zb - zc) * (zb - zc);
        z_sq += zb * zb;
      }
      zgap_int += dz * du;
      energy_int += (1.0 - std::sqrt(1.0 - phis[c] * phis[c])) * z_sq * du;
    }

    s_sup_x[pth] = detail::pow_p(sup_dx, p / 2.0);
    s_sup_y[pth] = detail::pow_p(sup_dy, p / 2.0);
    s_zgap[pth] = detail::pow_p(zgap_int, p / 2.0);
    s_energy[pth] = detail::pow_p(energy_int, p / 2.0);
    s_cv[pth] = s_sup_x[pth] + s_sup_y[pth] + s_zgap[pth] + s_energy[pth];

    sup_x_abs_p += detail::pow_p(sup_x_abs, p / 2.0);
    sup_y_abs_p += detail::pow_p(sup_y_abs, p / 2.0);

    // Coefficient gaps along the base trajectory.
    const PathValues& cpath = coupled_paths.at(pth);
    double b_gap_int = 0.0, mu_gap_sq_int = 0.0, f_gap_int = 0.0;
    double sig0_int = 0.0;
    double b0_int = 0.0, f0_int = 0.0, mu0_sq_int = 0.0;
    for (std::size_t c = window.first_node; c < window.last_node; ++c) {
      // Base spans the full grid, so master and local indices coincide.
      const auto xk = base->x_node(pth, c);
      const auto yk = base->y_node(pth, c);
      const auto zk = base->z_cell(pth, c);

      spec.drift.eval(wpath, c, xk, yk, zk, {h0.data(), nx});
      spec.drift.eval(cpath, c, xk, yk, zk, {h1.data(), nx});
      double bn = 0.0;
      for (std::size_t i = 0; i < nx; ++i) {
        const double d = h0[i] - h1[i];
        bn += d * d;
      }
      b_gap_int += std::sqrt(bn) * du;

      spec.generator.eval(wpath, c, xk, yk, zk, {h0.data(), ny});
      spec.generator.eval(cpath, c, xk, yk, zk, {h1.data(), ny});
      double fn = 0.0;
      for (std::size_t i = 0; i < ny; ++i) {
        const double d = h0[i] - h1[i];
        fn += d * d;
      }
      f_gap_int += std::sqrt(fn) * du;

      spec.sigma.eval(wpath, c, xk, yk, zk, s0);
      spec.a_of_z.eval(wpath, c, xk, yk, zk, a0);
      spec.sigma.eval(cpath, c, xk, yk, zk, s1);
      spec.a_of_z.eval(cpath, c, xk, yk, zk, a1);
      double mn = 0.0;
      for (std::size_t i = 0; i < on; ++i) {
        const double d = (s0[i] + a0[i]) - (s1[i] + a1[i]);
        mn += d * d;
      }
      mu_gap_sq_int += mn * du;

      // Zero-state magnitudes (profile-weighted sigma and the I terms).
      spec.sigma.eval(wpath, c, zx, zy, zzero, s0);
      double sig0_sq = 0.0;
      for (std::size_t i = 0; i < on; ++i) sig0_sq += s0[i] * s0[i];
      sig0_int += phis[c] * phis[c] * sig0_sq * du;

      spec.drift.eval(wpath, c, zx, zy, zzero, {h0.data(), nx});
      double b0n = 0.0;
      for (std::size_t i = 0; i < nx; ++i) b0n += h0[i] * h0[i];
      b0_int += std::sqrt(b0n) * du;
      spec.generator.eval(wpath, c, zx, zy, zzero, {h0.data(), ny});
      double f0n = 0.0;
      for (std::size_t i = 0; i < ny; ++i) f0n += h0[i] * h0[i];
      f0_int += std::sqrt(f0n) * du;
      spec.a_of_z.eval(wpath, c, zx, zy, zzero, a0);
      double mu0 = 0.0;
      for (std::size_t i = 0; i < on; ++i) {
        const double m = s0[i] + a0[i];
        mu0 += m * m;
      }
      mu0_sq_int += mu0 * du;
    }
    s_u[pth] = detail::pow_p(b_gap_int, p) +
               detail::pow_p(mu_gap_sq_int, p / 2.0) +
               detail::pow_p(f_gap_int, p);
    sigma0_energy += detail::pow_p(sig0_int, p / 2.0);
    i_pb += detail::pow_p(b0_int, p);
    i_pf += detail::pow_p(f0_int, p);
    i_pmu += detail::pow_p(mu0_sq_int, p / 2.0);

    // Full-horizon zero-state terms for I_{p,T}.
    double b0f = 0.0, f0f = 0.0, mu0f = 0.0;
    for (std::size_t c = 0; c < grid.n_steps(); ++c) {
      spec.drift.eval(wpath, c, zx, zy, zzero, {h0.data(), nx});
      double v = 0.0;
      for (std::size_t i = 0; i < nx; ++i) v += h0[i] * h0[i];
      b0f += std::sqrt(v) * du;
      spec.generator.eval(wpath, c, zx, zy, zzero, {h0.data(), ny});
      v = 0.0;
      for (std::size_t i = 0; i < ny; ++i) v += h0[i] * h0[i];
      f0f += std::sqrt(v) * du;
      spec.sigma.eval(wpath, c, zx, zy, zzero, s0);
      spec.a_of_z.eval(wpath, c, zx, zy, zzero, a0);
      v = 0.0;
      for (std::size_t i = 0; i < on; ++i) {
        const double m = s0[i] + a0[i];
        v += m * m;
      }
      mu0f += v * du;
    }
    i_pb_full += detail::pow_p(b0f, p);
    i_pf_full += detail::pow_p(f0f, p);
    i_pmu_full += detail::pow_p(mu0f, p / 2.0);

    // Initial and terminal gaps.
    spec.initial.eval(wpath, 0, xi0);
    spec.initial.eval(cpath, 0, xi1);
    double xin = 0.0, xiabs = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
      const double d = xi0[i] - xi1[i];
      xin += d * d;
      xiabs += xi0[i] * xi0[i];
    }
    s_ig[pth] = detail::pow_p(xin, p / 2.0);
    xi_p += detail::pow_p(xiabs, p / 2.0);

    const auto xT = base->x_node(pth, base->n_local_nodes() - 1);
    spec.terminal.eval(wpath, xT, gx);
    spec.terminal.eval(cpath, xT, gxphi);
    double gn = 0.0;
    for (std::size_t i = 0; i < ny; ++i) {
      const double d = gx[i] - gxphi[i];
      gn += d * d;
    }
    s_tg[pth] = detail::pow_p(gn, p / 2.0);

    spec.terminal.eval(wpath, zx, gx);
    double g0 = 0.0;
    for (std::size_t i = 0; i < ny; ++i) g0 += gx[i] * gx[i];
    g0_p += detail::pow_p(g0, p / 2.0);
  }

  const double nf = static_cast<double>(n_paths);
  report.sup_x_gap = mean_se(s_sup_x);
  report.sup_y_gap = mean_se(s_sup_y);
  report.z_gap = mean_se(s_zgap);
  report.phi_z_energy = mean_se(s_energy);
  report.cv = mean_se(s_cv);
  report.initial_gap = mean_se(s_ig);
  report.terminal_gap = mean_se(s_tg);
  report.u_potential = mean_se(s_u);

  report.s_profile = detail::pow_p(phi_sq_int, p / 2.0) *
                         (detail::pow_p(spec.lip.mu1, p) * sup_x_abs_p / nf +
                          detail::pow_p(spec.lip.mu2, p) * sup_y_abs_p / nf) +
                     sigma0_energy / nf;
  report.i_pb = i_pb / nf;
  report.i_pf = i_pf / nf;
  report.i_pmu = i_pmu / nf;
  report.i_pT = xi_p / nf + g0_p / nf + i_pb_full / nf + i_pf_full / nf +
                i_pmu_full / nf;
  report.p_potential = report.terminal_gap.mean + report.u_potential.mean;

  report.bound_denominator = report.initial_gap.mean +
                             report.terminal_gap.mean +
                             report.u_potential.mean + report.s_profile;
  const double tiny = 1e-14;
  if (report.bound_denominator <= tiny) {
    report.vacuous = report.cv.mean <= 1e-10;
    report.degenerate_denominator = !report.vacuous;
    report.bound_ratio = 0.0;
  } else {
    report.bound_ratio = report.cv.mean / report.bound_denominator;
  }
  if (coupled_out != nullptr) *coupled_out = coupled;
  return report;
}

/// Cross-report bound study: with the paper-side constant unspecified, the
/// falsifiable statement is that the fitted ratios stay within a bounded
/// spread across profiles.
struct BoundStudy {
  std::vector<double> ratios;
  double spread = 0.0;  // max ratio / min ratio over non-vacuous reports
  bool pass = false;
  bool violation = false;  // some report had gap terms zero but nonzero cv
};

inline BoundStudy verify_bound(const std::vector<VarianceReport>& reports,
                               double max_spread = 4.0) {
  if (reports.size() < 3) {
    throw ConfigError("verify_bound: need at least three reports");
  }
  BoundStudy study;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& r : reports) {
    if (r.degenerate_denominator) {
      study.violation = true;
      continue;
    }
    if (r.vacuous) continue;
    study.ratios.push_back(r.bound_ratio);
    lo = std::min(lo, r.bound_ratio);
    hi = std::max(hi, r.bound_ratio);
  }
  if (!study.ratios.empty() && lo > 0.0) {
    study.spread = hi / lo;
  }
  study.pass = !study.violation && !study.ratios.empty() &&
               study.spread <= max_spread;
  return study;
}

}  // namespace fbsde
