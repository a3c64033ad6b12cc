#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/rng.hpp"

namespace tsdiff {

inline GaussianMixture single_gaussian(std::size_t d, double mean, double variance) {
  return {{std::vector<double>(d, mean), std::vector<double>(d, variance), 1.0}};
}

/// Equal-weight components whose means are constant images at the given levels.
inline GaussianMixture level_mixture(std::size_t d, const std::vector<double>& levels, double variance) {
  GaussianMixture mix;
  for (double lv : levels)
    mix.push_back({std::vector<double>(d, lv), std::vector<double>(d, variance),
                   1.0 / static_cast<double>(levels.size())});
  return mix;
}

/// Equal-weight components with random +-1 mean patterns.
inline GaussianMixture sign_mixture(std::size_t d, std::size_t k, double variance, std::uint64_t seed) {
  GaussianMixture mix;
  for (std::size_t c = 0; c < k; ++c) {
    Stream rng(seed, Purpose::data, 0xC0DE0000u + c);
    std::vector<double> mean(d);
    for (double& m : mean) m = (rng.next_u32() & 1u) ? 1.0 : -1.0;
    mix.push_back({std::move(mean), std::vector<double>(d, variance), 1.0 / static_cast<double>(k)});
  }
  return mix;
}

/// n draws; row i uses its own stream so prefixes are stable when n grows.
inline SampleBatch sample_mixture(const GaussianMixture& mix, std::size_t n, std::uint64_t seed,
                                  Purpose purpose = Purpose::data) {
  validate_mixture(mix);
  const std::size_t d = mix.front().mean.size();
  SampleBatch out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, purpose, i);
    std::size_t k = 0;
    if (mix.size() > 1) {
      const double u = rng.uniform();
      double acc = 0.0;
      for (k = 0; k + 1 < mix.size(); ++k) {
        acc += mix[k].weight;
        if (u < acc) break;
      }
    }
    const auto& c = mix[k];
    auto row = out.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = c.mean[j] + std::sqrt(c.variance[j]) * rng.normal();
  }
  return out;
}

/// Standard-normal block addressed like sampler noise: row i of chain
/// (offset + i), sub-index b.
inline SampleBatch normal_batch(std::size_t n, std::size_t d, std::uint64_t seed, Purpose purpose,
                                std::size_t chain_offset = 0, std::uint32_t b = 0) {
  SampleBatch out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, purpose, chain_offset + i, b);
    rng.fill_normal(out.row(i));
  }
  return out;
}

/// 2-D swiss roll scaled to roughly unit spread.
inline SampleBatch swiss_roll(std::size_t n, std::uint64_t seed, double noise = 0.05) {
  SampleBatch out(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, Purpose::data, i);
    const double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * rng.uniform());
    out(i, 0) = t * std::cos(t) / 10.0 + noise * rng.normal();
    out(i, 1) = t * std::sin(t) / 10.0 + noise * rng.normal();
  }
  return out;
}

/// Zero-mean samples whose own variance is drawn uniformly from [vmin, vmax].
inline SampleBatch heterogeneous_variance(std::size_t n, std::size_t d, double vmin, double vmax,
                                          std::uint64_t seed) {
  require(vmin > 0.0 && vmin <= vmax, ErrorCategory::invalid_argument, "need 0 < vmin <= vmax");
  SampleBatch out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(seed, Purpose::data, i);
    const double sd = std::sqrt(vmin + (vmax - vmin) * rng.uniform());
    for (double& v : out.row(i)) v = sd * rng.normal();
  }
  return out;
}

}  // namespace tsdiff
