#pragma once

// Random variables, processes and random coefficient functions represented
// as deterministic maps of the discrete path. Transferring such a functional
// to the blended motion W^phi means re-evaluating it on the W^phi path; this
// agrees with the basis-factorization construction for anything measurable at
// grid resolution and is exact and fast.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fbsde/coupling_function.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/path_bundle.hpp"

namespace fbsde {

enum class Adaptedness { kTerminal, kAdapted, kPredictable };

/// Scalar random variable xi = F(path).
struct ScalarFunctional {
  std::function<double(const PathValues&)> eval;
  Adaptedness tag = Adaptedness::kTerminal;
};

/// Process H with H_{u_k} = F(path, k).
struct ProcessFunctional {
  std::function<double(const PathValues&, std::size_t node)> eval;
  Adaptedness tag = Adaptedness::kAdapted;
};

/// Random coefficient h(u, path, x); u enters through the cell index with the
/// predictable convention (path information up to the cell's left node).
struct CoefficientFunctional {
  std::function<double(const PathValues&, std::size_t cell, double x)> eval;
  double lipschitz_x = 0.0;  // declared constant in x
};

/// Paired samples of a scalar functional on (W, W^phi); same probability draw
/// per index, so differences are meaningful path by path.
struct PairedSamples {
  std::vector<double> base;
  std::vector<double> transferred;
};

inline PairedSamples transfer_variable(const ScalarFunctional& f,
                                       const PathBundle& bundle,
                                       const CouplingFunction& phi) {
  if (!f.eval) throw ContractError("transfer_variable: empty functional");
  const auto coupled = build_coupled_increments(bundle, phi);
  PairedSamples out;
  out.base.resize(bundle.n_paths);
  out.transferred.resize(bundle.n_paths);

  PathValues base_path(bundle.grid, bundle.dim);
  PathValues coupled_path(bundle.grid, bundle.dim);
  const std::size_t stride = bundle.stride();
  for (std::size_t p = 0; p < bundle.n_paths; ++p) {
    base_path.rebuild(bundle.path_w(p));
    coupled_path.rebuild({coupled.data() + p * stride, stride});
    out.base[p] = f.eval(base_path);
    out.transferred[p] = f.eval(coupled_path);
  }
  return out;
}

/// Paired process arrays, laid out [path][node].
struct PairedProcess {
  std::size_t n_paths = 0;
  std::size_t n_nodes = 0;
  std::vector<double> base;
  std::vector<double> transferred;

  double base_at(std::size_t p, std::size_t k) const {
    return base[p * n_nodes + k];
  }
  double transferred_at(std::size_t p, std::size_t k) const {
    return transferred[p * n_nodes + k];
  }
};

inline PairedProcess transfer_process(const ProcessFunctional& f,
                                      const PathBundle& bundle,
                                      const CouplingFunction& phi) {
  if (!f.eval) throw ContractError("transfer_process: empty functional");
  if (f.tag == Adaptedness::kTerminal) {
    throw ContractError(
        "transfer_process: process must carry an adapted or predictable tag");
  }
  const auto coupled = build_coupled_increments(bundle, phi);
  const std::size_t n_nodes = bundle.grid.n_nodes();

  PairedProcess out;
  out.n_paths = bundle.n_paths;
  out.n_nodes = n_nodes;
  out.base.resize(bundle.n_paths * n_nodes);
  out.transferred.resize(bundle.n_paths * n_nodes);

  PathValues base_path(bundle.grid, bundle.dim);
  PathValues coupled_path(bundle.grid, bundle.dim);
  const std::size_t stride = bundle.stride();
  for (std::size_t p = 0; p < bundle.n_paths; ++p) {
    base_path.rebuild(bundle.path_w(p));
    coupled_path.rebuild({coupled.data() + p * stride, stride});
    for (std::size_t k = 0; k < n_nodes; ++k) {
      out.base[p * n_nodes + k] = f.eval(base_path, k);
      out.transferred[p * n_nodes + k] = f.eval(coupled_path, k);
    }
  }
  return out;
}

/// Evaluator for the transferred coefficient h^phi(u, x): the same map read
/// off the W^phi path. The declared Lipschitz constant transports verbatim.
class TransferredCoefficient {
 public:
  TransferredCoefficient(CoefficientFunctional h, const PathBundle& bundle,
                         const CouplingFunction& phi)
      : h_(std::move(h)),
        bundle_(&bundle),
        coupled_(build_coupled_increments(bundle, phi)),
        scratch_(bundle.grid, bundle.dim) {}

  double lipschitz_x() const { return h_.lipschitz_x; }

  /// h^phi on path p at (cell, x).
  double eval(std::size_t p, std::size_t cell, double x) {
    const std::size_t stride = bundle_->stride();
    scratch_.rebuild({coupled_.data() + p * stride, stride});
    return h_.eval(scratch_, cell, x);
  }

  /// Base h on path p at (cell, x), for side-by-side comparisons.
  double eval_base(std::size_t p, std::size_t cell, double x) {
    scratch_.rebuild(bundle_->path_w(p));
    return h_.eval(scratch_, cell, x);
  }

 private:
  CoefficientFunctional h_;
  const PathBundle* bundle_;
  std::vector<double> coupled_;
  PathValues scratch_;
};

/// Checks that an adapted process functional does not peek ahead: perturbing
/// increments strictly after `node` must leave values at nodes <= node
/// unchanged. Returns the largest violation found.
inline double adaptedness_violation(const ProcessFunctional& f,
                                    const PathBundle& bundle,
                                    std::size_t node,
                                    std::size_t n_probe_paths = 8) {
  const std::size_t n_cells = bundle.grid.n_steps();
  const std::size_t n_check = std::min(n_probe_paths, bundle.n_paths);
  PathValues original(bundle.grid, bundle.dim);
  PathValues perturbed(bundle.grid, bundle.dim);
  std::vector<double> tweaked(bundle.stride());

  double worst = 0.0;
  for (std::size_t p = 0; p < n_check; ++p) {
    const auto incs = bundle.path_w(p);
    std::copy(incs.begin(), incs.end(), tweaked.begin());
    for (std::size_t c = node; c < n_cells; ++c) {
      for (std::size_t j = 0; j < bundle.dim; ++j) {
        tweaked[c * bundle.dim + j] += 0.7 + static_cast<double>(c + j);
      }
    }
    original.rebuild(incs);
    perturbed.rebuild(tweaked);
    for (std::size_t k = 0; k <= node; ++k) {
      worst = std::max(worst, std::abs(f.eval(original, k) -
                                       f.eval(perturbed, k)));
    }
  }
  return worst;
}

}  // namespace fbsde
