#pragma once

// Least-squares Monte Carlo building blocks: a polynomial feature map over
// the state and a rank-aware multi-target solve used for the per-step
// conditional expectations.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "fbsde/errors.hpp"

namespace fbsde {

struct RegressionConfig {
  int degree = 2;            // total polynomial degree over the state
  bool include_y = false;    // append Y components to the regression state
  bool strict_rank = false;  // rank deficiency raises instead of projecting
};

/// Monomials of total degree <= degree over n_vars variables.
class PolynomialBasis {
 public:
  PolynomialBasis(std::size_t n_vars, int degree)
      : n_vars_(n_vars), degree_(degree) {
    if (n_vars == 0 || degree < 0) {
      throw ConfigError("PolynomialBasis: need n_vars >= 1 and degree >= 0");
    }
    std::vector<int> exponents(n_vars, 0);
    emit(exponents, 0, degree);
  }

  std::size_t size() const { return terms_.size(); }
  std::size_t n_vars() const { return n_vars_; }
  int degree() const { return degree_; }

  void eval(std::span<const double> x, std::span<double> out) const {
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      double v = 1.0;
      for (std::size_t j = 0; j < n_vars_; ++j) {
        for (int e = 0; e < terms_[t][j]; ++e) v *= x[j];
      }
      out[t] = v;
    }
  }

  const std::vector<int>& exponents(std::size_t term) const {
    return terms_[term];
  }

 private:
  void emit(std::vector<int>& exponents, std::size_t var, int remaining) {
    if (var == n_vars_) {
      terms_.push_back(exponents);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      exponents[var] = e;
      emit(exponents, var + 1, remaining - e);
    }
    exponents[var] = 0;
  }

  std::size_t n_vars_;
  int degree_;
  std::vector<std::vector<int>> terms_;
};

/// One fitted cross-section: rank-revealing QR of the design matrix, reused
/// for every regression target at the same time step.
class CrossSectionFit {
 public:
  CrossSectionFit(Eigen::MatrixXd design, bool strict_rank)
      : design_(std::move(design)), qr_(design_) {
    rank_ = qr_.rank();
    if (strict_rank && rank_ < design_.cols()) {
      throw IllConditionedBasisError(
          "regression design matrix is rank deficient (rank " +
          std::to_string(rank_) + " of " + std::to_string(design_.cols()) +
          ")");
    }
  }

  Eigen::Index rank() const { return rank_; }

  /// Coefficients of the least-squares fit for each target column.
  Eigen::MatrixXd coefficients(const Eigen::MatrixXd& targets) const {
    return qr_.solve(targets);
  }

  /// Fitted values (projection of the targets onto the basis span).
  Eigen::MatrixXd fitted(const Eigen::MatrixXd& targets) const {
    return design_ * qr_.solve(targets);
  }

 private:
  Eigen::MatrixXd design_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::Index rank_;
};

}  // namespace fbsde
