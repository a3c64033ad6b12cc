#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/io.hpp"

namespace tsdiff {

enum class ScheduleKind { linear };

/// Discrete noise ladder. Timesteps are zero-based, t in [0, T-1]; t = -1 is
/// the chain end where alpha_bar is defined as exactly 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule from_betas(std::vector<double> betas) {
    require(!betas.empty(), ErrorCategory::invalid_argument, "schedule needs T >= 1");
    NoiseSchedule s;
    s.betas_ = std::move(betas);
    const std::size_t T = s.betas_.size();
    s.alphas_.resize(T);
    s.alpha_bars_.resize(T);
    s.variances_.resize(T);
    double prod = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double b = s.betas_[t];
      require(b > 0.0 && b < 1.0, ErrorCategory::invalid_argument,
              "beta outside (0,1) at t=" + std::to_string(t));
      s.alphas_[t] = 1.0 - b;
      prod *= s.alphas_[t];
      s.alpha_bars_[t] = prod;
      s.variances_[t] = 1.0 - prod;
      require(prod > 0.0 && prod < 1.0, ErrorCategory::invalid_argument,
              "alpha_bar left (0,1) at t=" + std::to_string(t));
      if (t > 0)
        require(prod < s.alpha_bars_[t - 1], ErrorCategory::invalid_argument,
                "alpha_bar not strictly decreasing at t=" + std::to_string(t));
    }
    return s;
  }

  int T() const noexcept { return static_cast<int>(betas_.size()); }

  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return alphas_.at(index(t)); }
  double variance(int t) const { return t < 0 ? 0.0 : variances_.at(index(t)); }
  double alpha_bar(int t) const { return t < 0 ? 1.0 : alpha_bars_.at(index(t)); }

  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }
  const std::vector<double>& variances() const noexcept { return variances_; }

  bool valid_timestep(int t) const noexcept { return t >= 0 && t < T(); }

  /// FNV-1a over T and the beta bit patterns, hex encoded.
  std::string fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    };
    mix(static_cast<std::uint64_t>(betas_.size()));
    for (double b : betas_) {
      std::uint64_t bits;
      std::memcpy(&bits, &b, sizeof bits);
      mix(bits);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  std::string to_csv() const {
    CsvWriter csv({"t", "beta", "alpha", "alpha_bar", "variance"});
    for (int t = 0; t < T(); ++t)
      csv.row(t, betas_[t], alphas_[t], alpha_bars_[t], variances_[t]);
    return csv.str();
  }

 private:
  std::size_t index(int t) const {
    require(valid_timestep(t), ErrorCategory::invalid_argument,
            "timestep " + std::to_string(t) + " outside [0, " + std::to_string(T() - 1) + "]");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> variances_;
};

inline NoiseSchedule build_schedule(ScheduleKind kind, int T, double beta_start, double beta_end) {
  require(T >= 1, ErrorCategory::invalid_argument, "T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          ErrorCategory::invalid_argument, "need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(T));
  switch (kind) {
    case ScheduleKind::linear:
      if (T == 1) {
        betas[0] = beta_start;
      } else {
        const double step = (beta_end - beta_start) / (T - 1);
        for (int t = 0; t < T; ++t) betas[t] = beta_start + step * t;
        betas[T - 1] = beta_end;
      }
      break;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

/// Construction parameters; what configs and checkpoints store.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::linear;
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return build_schedule(kind, T, beta_start, beta_end); }
};

/// Linear 1e-4 .. 0.02 ladder, the usual DDPM convention.
inline NoiseSchedule default_schedule(int T = 1000) {
  return build_schedule(ScheduleKind::linear, T, 1e-4, 0.02);
}

enum class GridMode { uniform, quadratic };

inline const char* to_string(GridMode m) { return m == GridMode::uniform ? "uniform" : "quadratic"; }

struct TimeGrid {
  std::vector<int> steps;  // ascending, unique, within [0, T-1]
  GridMode mode = GridMode::uniform;
  double c = 1.0;

  std::size_t size() const noexcept { return steps.size(); }
  std::vector<int> descending() const { return {steps.rbegin(), steps.rend()}; }
};

/// Subsampled inference grid. Uniform: t_i = floor(c i) with c = T/n.
/// Quadratic: t_i = floor(c i^2) with c = (T-1)/(n-1)^2. Both evaluated in
/// integer arithmetic so the last quadratic step lands exactly on T-1.
inline TimeGrid select_time_grid(const NoiseSchedule& schedule, int n, GridMode mode) {
  const int T = schedule.T();
  if (n < 1 || n > T)
    fail(ErrorCategory::invalid_argument,
         "invalid grid: n=" + std::to_string(n) + " with T=" + std::to_string(T));
  TimeGrid grid;
  grid.mode = mode;
  grid.steps.resize(static_cast<std::size_t>(n));
  if (mode == GridMode::uniform) {
    grid.c = static_cast<double>(T) / n;
    for (int i = 0; i < n; ++i) {
      const long long v = static_cast<long long>(T) * i / n;
      grid.steps[i] = static_cast<int>(std::min<long long>(v, T - 1));
    }
  } else {
    if (n == 1) {
      grid.c = 0.0;
      grid.steps[0] = 0;
    } else {
      const long long denom = static_cast<long long>(n - 1) * (n - 1);
      grid.c = static_cast<double>(T - 1) / static_cast<double>(denom);
      for (int i = 0; i < n; ++i) {
        int v = static_cast<int>(static_cast<long long>(T - 1) * i * i / denom);
        // Small c collapses the first few points; bump to keep steps unique.
        if (i > 0 && v <= grid.steps[i - 1]) v = grid.steps[i - 1] + 1;
        grid.steps[i] = v;
      }
    }
  }
  return grid;
}

/// Forward corruption kernel: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
inline SampleBatch q_sample(const SampleBatch& x0, int t, const SampleBatch& eps,
                            const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "q_sample");
  require(t >= 0, ErrorCategory::invalid_argument, "q_sample needs t >= 0");
  const double ab = schedule.alpha_bar(t);
  const double sa = std::sqrt(ab);
  const double sn = std::sqrt(1.0 - ab);
  SampleBatch out(x0.rows(), x0.dim());
  auto& o = out.values();
  const auto& a = x0.values();
  const auto& e = eps.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = sa * a[i] + sn * e[i];
  return out;
}

}  // namespace tsdiff
