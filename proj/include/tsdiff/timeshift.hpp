#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tsdiff/samplers.hpp"
#include "tsdiff/stats.hpp"

namespace tsdiff {

enum class VarianceMode { batch, per_chain };

struct ShiftConfig {
  int window = 0;   // full width w; candidates are center +- w/2
  int cutoff = 0;   // no shifting once the nominal t is <= cutoff
  VarianceMode mode = VarianceMode::batch;

  void validate(const NoiseSchedule& s) const {
    require(window >= 0 && window % 2 == 0, ErrorCategory::invalid_argument,
            "window must be an even integer >= 0");
    require(cutoff >= 0 && cutoff <= s.T(), ErrorCategory::invalid_argument, "cutoff must lie in [0, T]");
  }
};

/// Preset (w, t_c) by step count. Unlisted counts get the 10-step preset.
inline ShiftConfig preset_shift(int steps) {
  switch (steps) {
    case 20: return {30, 300};
    case 50: return {8, 300};
    case 100: return {2, 300};
    default: return {40, 300};
  }
}

struct Window {
  int lo, hi;
};

inline Window clamped_window(int center, int window, const NoiseSchedule& s) {
  const int half = window / 2;
  return {std::max(0, center - half), std::min(s.T() - 1, center + half)};
}

/// argmin over the clamped window of |variance - (1 - alpha_bar_tau)|.
/// Ties go to the candidate closest to the center, then to the smaller tau.
inline int select_shifted_timestep(double variance, int center, int window, const NoiseSchedule& s) {
  require(s.valid_timestep(center), ErrorCategory::invalid_argument, "shift center outside schedule");
  require(window >= 0, ErrorCategory::invalid_argument, "window must be >= 0");
  const Window w = clamped_window(center, window, s);
  require(w.lo <= w.hi, ErrorCategory::contract, "empty shift window");
  int best = -1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int tau = w.lo; tau <= w.hi; ++tau) {
    const double gap = std::abs(variance - s.variance(tau));
    const bool better = gap < best_gap ||
                        (gap == best_gap && std::abs(tau - center) < std::abs(best - center));
    if (better) {
      best = tau;
      best_gap = gap;
    }
  }
  return best;
}

inline int select_shifted_timestep(double variance, int center, const ShiftConfig& cfg, const NoiseSchedule& s) {
  return select_shifted_timestep(variance, center, cfg.window, s);
}

/// Variance-matched sampling around any base method. After each transfer
/// from nominal t to t_prev, if t > cutoff the new state's variance picks
/// the timestep the next iteration evaluates at (window centered on t_prev).
inline SampleResult run_time_shift_sampler(const SamplerConfig& base, const ShiftConfig& shift,
                                           const Denoiser& model, const NoiseSchedule& s, std::size_t dim) {
  base.validate(s);
  shift.validate(s);
  require(dim >= 2, ErrorCategory::domain, "time shifting needs d >= 2");
  const ShiftHook hook = [&](const SampleBatch& x, int t, int t_prev) {
    const Window w = clamped_window(t_prev, shift.window, s);
    ShiftEvent e{t, t_prev, mean_intra_sample_variance(x), w.lo, w.hi, std::nullopt};
    if (t > shift.cutoff) {
      e.t_s = select_shifted_timestep(e.variance, t_prev, shift.window, s);
      e.t_next = *e.t_s;
    }
    return e;
  };
  SampleResult r;
  const SampleBatch x_T = initial_noise(base.n, dim, base.seed);
  if (shift.mode == VarianceMode::batch) {
    r.samples = run_chain(base, model, s, x_T, 0, hook, r.trajectory);
    return r;
  }
  r.samples = SampleBatch(base.n, dim);
  for (std::size_t i = 0; i < base.n; ++i) {
    const SampleBatch xi = run_chain(base, model, s, x_T.slice(i, 1), i, hook, r.trajectory, static_cast<long>(i));
    r.samples.set_rows(i, xi);
  }
  return r;
}

}  // namespace tsdiff
