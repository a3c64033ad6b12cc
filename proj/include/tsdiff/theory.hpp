#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/stats.hpp"

namespace tsdiff {

struct TheoremProbe {
  double sigma_prev = 0.0;  // variance of the predicted state
  double err_sq = 0.0;      // ||e||^2
  std::size_t d = 2;
  int t = 0;
};

struct ShiftVariance {
  double value = 0.0;
  bool in_regime = true;  // false when value <= 0
};

/// sigma_prev - ||e||^2 / (d (d - 1)).
inline ShiftVariance optimal_shift_variance(const TheoremProbe& p) {
  require(p.sigma_prev > 0.0, ErrorCategory::invalid_argument, "sigma_prev must be > 0");
  require(p.err_sq >= 0.0, ErrorCategory::invalid_argument, "err_sq must be >= 0");
  require(p.d >= 2, ErrorCategory::invalid_argument, "d must be >= 2");
  const double d = static_cast<double>(p.d);
  const double v = p.sigma_prev - p.err_sq / (d * (d - 1.0));
  return {v, v > 0.0};
}

/// Which trace term to use in the KL objective.
///  standard:      sum_j Sigma_jj / s           (diagonal Gaussian KL)
///  as_written:    (d / s) * (Tr(Sigma) / d)     (trace slot read as per-coordinate variance)
///  literal_trace: (d / s) * Tr(Sigma)
/// standard and as_written coincide for every diagonal Sigma.
enum class KlForm { standard, as_written, literal_trace };

/// t_s-dependent part of KL(prediction || q(x_{t_s} | x0)), constant dropped:
/// 0.5 (d log s + trace_term + ||mu - sqrt(ab) x0||^2 / s), s = 1 - ab.
inline double kl_objective(std::span<const double> mu, std::span<const double> sigma_diag, int t_s,
                           std::span<const double> x0, const NoiseSchedule& schedule,
                           KlForm form = KlForm::standard) {
  require(mu.size() == x0.size() && sigma_diag.size() == x0.size(), ErrorCategory::dimension,
          "kl_objective: dimension mismatch");
  require(t_s >= 0, ErrorCategory::domain, "kl_objective needs alpha_bar in (0,1)");
  const double ab = schedule.alpha_bar(t_s);
  require(ab > 0.0 && ab < 1.0, ErrorCategory::domain, "kl_objective needs alpha_bar in (0,1)");
  const double s = 1.0 - ab, sa = std::sqrt(ab);
  const double d = static_cast<double>(x0.size());
  double tr = 0.0, dist = 0.0;
  for (std::size_t j = 0; j < x0.size(); ++j) {
    tr += sigma_diag[j];
    const double r = mu[j] - sa * x0[j];
    dist += r * r;
  }
  double trace_term = 0.0;
  switch (form) {
    case KlForm::standard: trace_term = tr / s; break;
    case KlForm::as_written: trace_term = (d / s) * (tr / d); break;
    case KlForm::literal_trace: trace_term = (d / s) * tr; break;
  }
  return 0.5 * (d * std::log(s) + trace_term + dist / s);
}

/// argmin helper with the selection tie rule (closest to center, then smaller).
template <typename Score>
int argmin_window(int lo, int hi, int center, Score&& score) {
  int best = -1;
  double best_v = std::numeric_limits<double>::infinity();
  for (int tau = lo; tau <= hi; ++tau) {
    const double v = score(tau);
    if (v < best_v || (v == best_v && std::abs(tau - center) < std::abs(best - center))) {
      best = tau;
      best_v = v;
    }
  }
  return best;
}

/// Mode A: KL-oracle over [center - half, center + half] (clamped).
inline int oracle_kl_timestep(std::span<const double> mu, std::span<const double> sigma_diag,
                              std::span<const double> x0, int center, int half_window,
                              const NoiseSchedule& s, KlForm form = KlForm::standard) {
  const int lo = std::max(0, center - half_window), hi = std::min(s.T() - 1, center + half_window);
  return argmin_window(lo, hi, center, [&](int tau) { return kl_objective(mu, sigma_diag, tau, x0, s, form); });
}

/// Mode B: Monte-Carlo mean Euclidean distance between predicted states and
/// forward states x_tau = q_sample(x0, tau, eps) built from the same draws.
inline int oracle_distance_timestep(const SampleBatch& x_hat, const SampleBatch& x0, const SampleBatch& eps,
                                    int center, int half_window, const NoiseSchedule& s) {
  require_same_shape(x_hat, x0, "oracle_distance_timestep");
  require_same_shape(x0, eps, "oracle_distance_timestep");
  const int lo = std::max(0, center - half_window), hi = std::min(s.T() - 1, center + half_window);
  return argmin_window(lo, hi, center, [&](int tau) {
    const double sa = std::sqrt(s.alpha_bar(tau)), sn = std::sqrt(1.0 - s.alpha_bar(tau));
    double acc = 0.0;
    for (std::size_t i = 0; i < x0.rows(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < x0.dim(); ++j) {
        const double r = x_hat(i, j) - (sa * x0(i, j) + sn * eps(i, j));
        sq += r * r;
      }
      acc += std::sqrt(sq);
    }
    return acc / static_cast<double>(x0.rows());
  });
}

/// Covariance of the predicted state from its own intra-sample variance,
/// with the injected error's share removed.
inline double estimated_state_variance(std::span<const double> x_hat, double err_sq) {
  return intra_sample_variance(x_hat) - err_sq / static_cast<double>(x_hat.size() - 1);
}

/// Nearest t with sqrt(alpha_bar_t) closest to value (binary search on the
/// decreasing ladder).
inline int invert_sqrt_alpha_bar(double value, const NoiseSchedule& s) {
  const auto& ab = s.alpha_bars();
  // First index whose sqrt(alpha_bar) is <= value.
  int lo = 0, hi = s.T();
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (std::sqrt(ab[mid]) <= value) hi = mid;
    else lo = mid + 1;
  }
  if (lo == 0) return 0;
  if (lo == s.T()) return s.T() - 1;
  const double above = std::sqrt(ab[lo - 1]) - value, below = value - std::sqrt(ab[lo]);
  return below < above ? lo : lo - 1;
}

struct WindowBoundQuery {
  int t = 1;
  double gamma = 0.1;
  double err_norm = 1.0;
  double x0_norm = 1.0;
};

struct WindowBounds {
  int t_min = 0;
  int t_max = 0;
  int w_bound = 0;
  double sqrt_lo = 0.0, sqrt_hi = 0.0;  // target interval for sqrt(alpha_bar)
  bool clamped_low = false;             // interval reaches past t = 0
  bool clamped_high = false;            // interval reaches past t = T-1
};

/// Timesteps whose sqrt(alpha_bar) stays within gamma ||e|| / ||x0|| of the
/// value at c = t - 1, and w = 2 min(t_max - c, c - t_min).
inline WindowBounds window_bounds(const WindowBoundQuery& q, const NoiseSchedule& s) {
  require(q.gamma > 0.0 && q.gamma < 1.0, ErrorCategory::invalid_argument, "gamma must lie in (0,1)");
  require(q.err_norm > 0.0 && q.x0_norm > 0.0, ErrorCategory::invalid_argument, "norms must be > 0");
  const int c = q.t - 1;
  require(s.valid_timestep(c), ErrorCategory::invalid_argument, "t - 1 outside the schedule");
  const double r = q.gamma * q.err_norm / q.x0_norm;
  const double center = std::sqrt(s.alpha_bar(c));
  WindowBounds b;
  b.sqrt_lo = center - r;
  b.sqrt_hi = center + r;
  const int T = s.T();
  // Largest t still inside the interval (sqrt(ab) >= sqrt_lo).
  int lo = c, hi = T - 1;
  if (std::sqrt(s.alpha_bar(T - 1)) >= b.sqrt_lo) {
    b.t_max = T - 1;
    b.clamped_high = true;
  } else {
    while (lo < hi) {
      const int mid = lo + (hi - lo + 1) / 2;
      if (std::sqrt(s.alpha_bar(mid)) >= b.sqrt_lo) lo = mid;
      else hi = mid - 1;
    }
    b.t_max = lo;
  }
  // Smallest t still inside the interval (sqrt(ab) <= sqrt_hi).
  if (std::sqrt(s.alpha_bar(0)) <= b.sqrt_hi) {
    b.t_min = 0;
    b.clamped_low = true;
  } else {
    lo = 0;
    hi = c;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (std::sqrt(s.alpha_bar(mid)) <= b.sqrt_hi) hi = mid;
      else lo = mid + 1;
    }
    b.t_min = lo;
  }
  b.w_bound = 2 * std::min(b.t_max - c, c - b.t_min);
  return b;
}

}  // namespace tsdiff
