#pragma once

// Test-side oracles, kept independent of the library's sampling machinery:
// closed-form Gaussian moments and brute-force Monte Carlo with the standard
// library's Mersenne Twister.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

/// E|N(0, sigma^2)|^p = sigma^p 2^{p/2} Gamma((p+1)/2) / sqrt(pi).
inline double abs_gaussian_moment(double sigma, double p) {
  return std::pow(sigma, p) * std::pow(2.0, p / 2.0) *
         std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
}

/// Brute-force E[ sup_{[0,1]} |B_t|^2 ] at fine resolution.
inline double mc_sup_brownian_sq(std::uint64_t seed, std::size_t n_paths,
                                 std::size_t n_steps) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sqdt = std::sqrt(1.0 / static_cast<double>(n_steps));
  double acc = 0.0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    double w = 0.0;
    double peak = 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      w += sqdt * normal(gen);
      peak = std::max(peak, w * w);
    }
    acc += peak;
  }
  return acc / static_cast<double>(n_paths);
}

}  // namespace oracle
