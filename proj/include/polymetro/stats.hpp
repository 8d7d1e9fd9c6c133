#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "polymetro/error.hpp"

namespace polymetro::stats {

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means. Batches long compared with the autocorrelation time make
/// the batch averages nearly independent.
inline double batch_means_stderr(const std::vector<double>& xs, std::size_t batches = 50) {
  require(batches >= 2 && xs.size() >= 2 * batches, ErrorCode::InvalidArgument,
          "series too short for batch means");
  const std::size_t len = xs.size() / batches;
  std::vector<double> avgs(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += xs[b * len + i];
    avgs[b] = s / static_cast<double>(len);
  }
  double m = mean(avgs);
  double var = 0.0;
  for (double a : avgs) var += (a - m) * (a - m);
  var /= static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

/// Effective sample size implied by the batch-means error.
inline double effective_sample_size(const std::vector<double>& xs, std::size_t batches = 50) {
  double m = mean(xs);
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  var /= static_cast<double>(xs.size() - 1);
  double se = batch_means_stderr(xs, batches);
  return se > 0.0 ? var / (se * se) : static_cast<double>(xs.size());
}

/// Upper quantile of the chi-square law with k degrees of freedom
/// (Wilson-Hilferty); z is the matching standard normal quantile.
inline double chi2_upper(double k, double z) {
  double a = 2.0 / (9.0 * k);
  double c = 1.0 - a + z * std::sqrt(a);
  return k * c * c * c;
}

constexpr double kZ99 = 2.3263478740408408;  // one-sided 1% normal quantile

}  // namespace polymetro::stats
