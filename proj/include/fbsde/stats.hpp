#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbsde/errors.hpp"

namespace fbsde {

/// Monte Carlo estimate with its standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline Estimate mean_se(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n == 0) throw ConfigError("mean_se: empty sample");
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : samples) {
    const double d = v - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

inline double sample_variance(std::span<const double> samples) {
  const auto est = mean_se(samples);
  return est.se * est.se * static_cast<double>(samples.size());
}

inline double sample_covariance(std::span<const double> a,
                                std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ConfigError("sample_covariance: size mismatch");
  }
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += (a[i] - ma) * (b[i] - mb);
  }
  return acc / static_cast<double>(a.size() - 1);
}

inline double sample_correlation(std::span<const double> a,
                                 std::span<const double> b) {
  const double cov = sample_covariance(a, b);
  const double va = sample_variance(a);
  const double vb = sample_variance(b);
  return cov / std::sqrt(va * vb);
}

/// Jackknife standard error of a ratio of means, num/den over paired samples.
inline double jackknife_ratio_se(std::span<const double> num,
                                 std::span<const double> den) {
  const std::size_t n = num.size();
  if (n != den.size() || n < 2) {
    throw ConfigError("jackknife_ratio_se: need paired samples, n >= 2");
  }
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sn += num[i];
    sd += den[i];
  }
  const double full = sn / sd;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double leave = (sn - num[i]) / (sd - den[i]);
    const double d = leave - full;
    ss += d * d;
  }
  const double nf = static_cast<double>(n);
  return std::sqrt((nf - 1.0) / nf * ss);
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

/// Asymptotic two-sample KS critical value at significance alpha.
inline double ks_critical_value(double alpha, std::size_t n, std::size_t m) {
  // c(alpha) = sqrt(-ln(alpha/2)/2)
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nf = static_cast<double>(n);
  const double mf = static_cast<double>(m);
  return c * std::sqrt((nf + mf) / (nf * mf));
}

/// Least-squares slope of log(y) against log(x); x, y must be positive.
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline SlopeFit fit_loglog_slope(std::span<const double> x,
                                 std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError("fit_loglog_slope: need at least two points");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) {
      throw DomainError("fit_loglog_slope: nonpositive data");
    }
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(x.size());
  const double denom = n * sxx - sx * sx;
  SlopeFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

/// FNV-1a 64-bit hash; stable across platforms, used for config manifests.
inline std::uint64_t fnv1a_hash(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fbsde
