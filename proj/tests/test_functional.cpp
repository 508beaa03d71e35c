#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fbsde/functional.hpp"
#include "fbsde/path_bundle.hpp"
#include "fbsde/stats.hpp"

using namespace fbsde;

namespace {

ScalarFunctional terminal_value() {
  return {[](const PathValues& path) {
            return path.value(path.grid().n_steps(), 0);
          },
          Adaptedness::kTerminal};
}

ScalarFunctional terminal_square() {
  return {[](const PathValues& path) {
            const double w = path.value(path.grid().n_steps(), 0);
            return w * w;
          },
          Adaptedness::kTerminal};
}

}  // namespace

TEST(TransferVariable, IdentityCouplingIsBitwise) {
  TimeGrid grid(0.0, 1.0, 16);
  const auto bundle = sample_paths(grid, 1, 500, 4);
  const auto paired = transfer_variable(terminal_value(), bundle,
                                        CouplingFunction::constant(0.0));
  EXPECT_EQ(paired.base, paired.transferred);
}

TEST(TransferVariable, WindowGapVariance) {
  // xi = W_T, phi = 1_{(0.25, 0.75]}:  xi - xi^phi is Gaussian with
  // variance 2(c - a) = 1.
  TimeGrid grid(0.0, 1.0, 16);
  const std::size_t n = 100000;
  const auto bundle = sample_paths(grid, 1, n, 8);
  const auto paired = transfer_variable(
      terminal_value(), bundle, CouplingFunction::indicator(0.25, 0.75));
  std::vector<double> gap_sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = paired.base[i] - paired.transferred[i];
    gap_sq[i] = d * d;
  }
  const auto est = mean_se(gap_sq);
  EXPECT_NEAR(est.mean, 1.0, 3.0 * est.se);
}

TEST(TransferVariable, LawPreservedForSquare) {
  // E (W^phi_T)^2 = T for any phi.
  TimeGrid grid(0.0, 1.0, 8);
  const std::size_t n = 100000;
  const auto bundle = sample_paths(grid, 1, n, 15);
  const auto paired = transfer_variable(terminal_square(), bundle,
                                        CouplingFunction::constant(0.7));
  const auto est = mean_se(paired.transferred);
  EXPECT_NEAR(est.mean, 1.0, 3.0 * est.se);
}

TEST(TransferVariable, KolmogorovSmirnovLawEquality) {
  TimeGrid grid(0.0, 1.0, 8);
  const std::size_t n = 100000;
  const auto bundle = sample_paths(grid, 1, n, 27);
  const auto paired = transfer_variable(terminal_square(), bundle,
                                        CouplingFunction::indicator(0.25, 1.0));
  const double d = ks_statistic(paired.base, paired.transferred);
  EXPECT_LT(d, ks_critical_value(0.01, n, n));
}

TEST(TransferVariable, BorelCompositionCommutes) {
  // Transfer of h(xi) equals h(transfer of xi) sample by sample.
  TimeGrid grid(0.0, 1.0, 8);
  const auto bundle = sample_paths(grid, 1, 2000, 6);
  const auto phi = CouplingFunction::constant(0.4);

  ScalarFunctional composed{[](const PathValues& path) {
    const double w = path.value(path.grid().n_steps(), 0);
    return std::tanh(3.0 * w) + w * w;
  }};
  const auto direct = transfer_variable(composed, bundle, phi);
  const auto raw = transfer_variable(terminal_value(), bundle, phi);
  for (std::size_t i = 0; i < raw.base.size(); ++i) {
    const double expected = std::tanh(3.0 * raw.transferred[i]) +
                            raw.transferred[i] * raw.transferred[i];
    EXPECT_EQ(direct.transferred[i], expected);
  }
}

TEST(TransferProcess, FullReplacementGivesPartnerRunningMax) {
  TimeGrid grid(0.0, 1.0, 16);
  const auto bundle = sample_paths(grid, 1, 300, 12);
  ProcessFunctional running_max{
      [](const PathValues& path, std::size_t node) {
        double peak = 0.0;
        for (std::size_t k = 0; k <= node; ++k) {
          peak = std::max(peak, path.value(k, 0));
        }
        return peak;
      },
      Adaptedness::kAdapted};

  const auto out = transfer_process(running_max, bundle,
                                    CouplingFunction::constant(1.0));
  PathValues partner(grid, 1);
  for (std::size_t p = 0; p < bundle.n_paths; ++p) {
    partner.rebuild(bundle.path_wprime(p));
    double peak = 0.0;
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
      peak = std::max(peak, partner.value(k, 0));
      EXPECT_EQ(out.transferred_at(p, k), peak);
    }
  }
}

TEST(TransferProcess, PerNodeCorrelationMatchesConstantPhi) {
  TimeGrid grid(0.0, 1.0, 8);
  const std::size_t n = 50000;
  const auto bundle = sample_paths(grid, 1, n, 3);
  ProcessFunctional node_value{
      [](const PathValues& path, std::size_t node) {
        return path.value(node, 0);
      },
      Adaptedness::kAdapted};
  const double r = 0.5;
  const auto out =
      transfer_process(node_value, bundle, CouplingFunction::constant(r));

  const double band = 5.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 2; k < grid.n_nodes(); k += 3) {
    std::vector<double> h(n), hphi(n);
    for (std::size_t p = 0; p < n; ++p) {
      h[p] = out.base_at(p, k);
      hphi[p] = out.transferred_at(p, k);
    }
    EXPECT_NEAR(sample_correlation(h, hphi), std::sqrt(1.0 - r * r), band)
        << "node " << k;
  }
}

TEST(TransferProcess, DeterministicProcessIsInvariant) {
  TimeGrid grid(0.0, 1.0, 8);
  const auto bundle = sample_paths(grid, 1, 100, 3);
  ProcessFunctional constant{
      [](const PathValues&, std::size_t) { return 1.0; },
      Adaptedness::kPredictable};
  const auto out =
      transfer_process(constant, bundle, CouplingFunction::constant(0.9));
  for (double v : out.transferred) EXPECT_EQ(v, 1.0);
}

TEST(TransferProcess, RejectsTerminalTag) {
  TimeGrid grid(0.0, 1.0, 4);
  const auto bundle = sample_paths(grid, 1, 10, 1);
  ProcessFunctional bad{[](const PathValues&, std::size_t) { return 0.0; },
                        Adaptedness::kTerminal};
  EXPECT_THROW(
      transfer_process(bad, bundle, CouplingFunction::constant(0.0)),
      ContractError);
}

TEST(Adaptedness, ViolationDetectorSeparatesPeekers) {
  TimeGrid grid(0.0, 1.0, 8);
  const auto bundle = sample_paths(grid, 1, 32, 14);

  ProcessFunctional honest{
      [](const PathValues& path, std::size_t node) {
        return path.value(node, 0);
      },
      Adaptedness::kAdapted};
  EXPECT_EQ(adaptedness_violation(honest, bundle, 4), 0.0);

  ProcessFunctional peeker{
      [](const PathValues& path, std::size_t) {
        return path.value(path.grid().n_steps(), 0);  // terminal leak
      },
      Adaptedness::kAdapted};
  EXPECT_GT(adaptedness_violation(peeker, bundle, 4), 0.1);
}

TEST(TransferCoefficient, DeterministicCoefficientUnchanged) {
  TimeGrid grid(0.0, 1.0, 8);
  const auto bundle = sample_paths(grid, 1, 50, 20);
  CoefficientFunctional h{
      [](const PathValues&, std::size_t, double x) { return std::sin(x); },
      1.0};
  TransferredCoefficient t(h, bundle, CouplingFunction::constant(0.8));
  for (double x : {-1.0, 0.0, 0.5, 2.0}) {
    EXPECT_EQ(t.eval(0, 3, x), std::sin(x));
    EXPECT_EQ(t.eval(7, 5, x), std::sin(x));
  }
}

TEST(TransferCoefficient, SubstitutionAndLipschitzTransport) {
  TimeGrid grid(0.0, 1.0, 8);
  const auto bundle = sample_paths(grid, 1, 64, 41);

  // h(u, x) = x * W_u evaluated at the cell's left node; full replacement
  // swaps in W'.
  CoefficientFunctional h{
      [](const PathValues& path, std::size_t cell, double x) {
        return x * path.value(cell, 0);
      },
      0.0};
  TransferredCoefficient full(h, bundle, CouplingFunction::constant(1.0));
  PathValues partner(grid, 1);
  for (std::size_t p = 0; p < 8; ++p) {
    partner.rebuild(bundle.path_wprime(p));
    EXPECT_EQ(full.eval(p, 5, 2.0), 2.0 * partner.value(5, 0));
  }

  // h(u, x) = x + W_u has Lipschitz constant 1 in x; the transferred map
  // keeps it on sampled pairs.
  CoefficientFunctional affine{
      [](const PathValues& path, std::size_t cell, double x) {
        return x + path.value(cell, 0);
      },
      1.0};
  TransferredCoefficient t(affine, bundle, CouplingFunction::constant(0.3));
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    const std::size_t p = trial % bundle.n_paths;
    const double x0 = 4.0 * uniform_draw(1, 0, trial, 0, 0) - 2.0;
    const double x1 = 4.0 * uniform_draw(1, 0, trial, 1, 0) - 2.0;
    if (std::abs(x0 - x1) < 1e-9) continue;
    const double ratio =
        std::abs(t.eval(p, 3, x0) - t.eval(p, 3, x1)) / std::abs(x0 - x1);
    EXPECT_LE(ratio, affine.lipschitz_x + 1e-12);
  }
}
