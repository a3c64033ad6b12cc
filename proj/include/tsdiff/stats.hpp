#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "tsdiff/batch.hpp"
#include "tsdiff/errors.hpp"

namespace tsdiff {

/// Unbiased variance of one flattened sample over its own coordinates.
inline double intra_sample_variance(std::span<const double> x) {
  require(x.size() >= 2, ErrorCategory::domain, "intra-sample variance needs d >= 2");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  // Corrected two-pass: the second sum cancels the rounding error in mean.
  double ss = 0.0, drift = 0.0;
  for (double v : x) {
    ss += (v - mean) * (v - mean);
    drift += v - mean;
  }
  ss -= drift * drift / static_cast<double>(x.size());
  return std::max(0.0, ss) / static_cast<double>(x.size() - 1);
}

/// Mean of the per-row intra-sample variances.
inline double mean_intra_sample_variance(const SampleBatch& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) acc += intra_sample_variance(x.row(i));
  return acc / static_cast<double>(x.rows());
}

inline double l2_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

inline double mean_row_norm(const SampleBatch& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) acc += l2_norm(x.row(i));
  return acc / static_cast<double>(x.rows());
}

}  // namespace tsdiff
