#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsdiff/batch.hpp"
#include "tsdiff/datasets.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/stats.hpp"

namespace tsdiff {

enum class Method { ddpm, ddim, s_pndm, f_pndm };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ddpm: return "ddpm";
    case Method::ddim: return "ddim";
    case Method::s_pndm: return "s-pndm";
    case Method::f_pndm: return "f-pndm";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::ddpm, Method::ddim, Method::s_pndm, Method::f_pndm})
    if (s == to_string(m)) return m;
  fail(ErrorCategory::invalid_argument, "unknown sampler method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Single transfers

/// Backward-kernel coefficients for the effective step t -> t_prev, where
/// alpha_eff = alpha_bar(t) / alpha_bar(t_prev). On the full grid this is
/// just alpha_t.
struct PosteriorParams {
  double alpha_eff = 1.0;
  double beta_tilde = 0.0;
  double sigma = 0.0;
  bool clamped = false;  // beta_tilde came out negative and was set to 0
};

inline PosteriorParams ddpm_posterior(int t, int t_prev, const NoiseSchedule& s) {
  PosteriorParams p;
  const double ab = s.alpha_bar(t), ap = s.alpha_bar(t_prev);
  p.alpha_eff = ab / ap;
  p.beta_tilde = (1.0 - ap) / (1.0 - ab) * (1.0 - p.alpha_eff);
  if (p.beta_tilde < 0.0) {
    p.beta_tilde = 0.0;
    p.clamped = true;
  }
  p.sigma = std::sqrt(p.beta_tilde);
  return p;
}

inline SampleBatch ddpm_step(const SampleBatch& x, int t, int t_prev, const SampleBatch& eps,
                             const SampleBatch* z, const NoiseSchedule& s) {
  require_same_shape(x, eps, "ddpm_step");
  require(s.valid_timestep(t), ErrorCategory::invalid_argument, "ddpm_step: bad timestep");
  if (z) {
    require_same_shape(x, *z, "ddpm_step noise");
    if (t_prev < 0)
      for (double v : z->values())
        require(v == 0.0, ErrorCategory::contract, "ddpm_step: noise must be zero at the final step");
  }
  const PosteriorParams p = ddpm_posterior(t, t_prev, s);
  const double inv_sa = 1.0 / std::sqrt(p.alpha_eff);
  const double c = (1.0 - p.alpha_eff) / std::sqrt(1.0 - s.alpha_bar(t));
  SampleBatch out(x.rows(), x.dim());
  auto& o = out.values();
  for (std::size_t k = 0; k < o.size(); ++k) {
    o[k] = inv_sa * (x.values()[k] - c * eps.values()[k]);
    if (z) o[k] += p.sigma * z->values()[k];
  }
  return out;
}

inline double ddim_sigma(int t, int t_prev, double eta, const NoiseSchedule& s) {
  if (eta == 0.0) return 0.0;
  const double ab = s.alpha_bar(t), ap = s.alpha_bar(t_prev);
  const double v = (1.0 - ap) / (1.0 - ab) * (1.0 - ab / ap);
  return v > 0.0 ? eta * std::sqrt(v) : 0.0;
}

inline SampleBatch ddim_step(const SampleBatch& x, int t, int t_prev, const SampleBatch& eps,
                             const NoiseSchedule& s, double eta = 0.0, const SampleBatch* z = nullptr) {
  require_same_shape(x, eps, "ddim_step");
  require(eta >= 0.0, ErrorCategory::invalid_argument, "eta must be >= 0");
  const double ab = s.alpha_bar(t), ap = s.alpha_bar(t_prev);
  require(ab > 0.0, ErrorCategory::domain, "ddim_step: alpha_bar is zero");
  const double sigma = ddim_sigma(t, t_prev, eta, s);
  if (sigma > 0.0) require(z != nullptr, ErrorCategory::contract, "ddim_step: eta > 0 needs noise");
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  const double sap = std::sqrt(ap), dir = std::sqrt(std::max(0.0, 1.0 - ap - sigma * sigma));
  SampleBatch out(x.rows(), x.dim());
  auto& o = out.values();
  for (std::size_t k = 0; k < o.size(); ++k) {
    const double e = eps.values()[k];
    const double x0 = (x.values()[k] - sn * e) / sa;
    o[k] = sap * x0 + dir * e;
    if (sigma > 0.0) o[k] += sigma * z->values()[k];
  }
  return out;
}

/// Linear multistep weights, newest first.
inline std::vector<double> multistep_weights(int order) {
  if (order == 2) return {1.5, -0.5};
  if (order == 4) return {55.0 / 24, -59.0 / 24, 37.0 / 24, -9.0 / 24};
  fail(ErrorCategory::invalid_argument, "multistep order must be 2 or 4");
}

inline SampleBatch combine_history(const std::vector<SampleBatch>& history, int order) {
  const auto w = multistep_weights(order);
  require(history.size() >= w.size(), ErrorCategory::contract, "multistep history too short");
  const std::size_t n = history.size();
  SampleBatch out(history.back().rows(), history.back().dim());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * history[n - 1 - j].values()[k];
    out.values()[k] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory

struct ShiftEvent {
  int t = 0;                 // nominal timestep of the iteration that measured
  int t_next = 0;            // timestep the next iteration evaluates at
  double variance = 0.0;     // measured variance of the new state
  int window_lo = 0, window_hi = 0;
  std::optional<int> t_s;    // none below the cutoff
};

struct StepRecord {
  int iteration = 0;
  long chain = -1;           // -1: record covers the whole batch
  int t_nominal = 0;
  int t_used = 0;
  int t_prev = 0;
  double state_norm = 0.0;
  double intra_variance = 0.0;
  std::optional<ShiftEvent> shift;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<std::string> warnings;

  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : steps) {
      nlohmann::json j{{"iteration", r.iteration}, {"chain", r.chain},   {"t", r.t_nominal},
                       {"t_used", r.t_used},       {"t_prev", r.t_prev}, {"state_norm", r.state_norm},
                       {"intra_variance", r.intra_variance}};
      if (r.shift) {
        const auto& e = *r.shift;
        j["shift"] = {{"t", e.t}, {"t_next", e.t_next}, {"var", e.variance},
                      {"window", {e.window_lo, e.window_hi}}, {"t_s", nullptr}};
        if (e.t_s) j["shift"]["t_s"] = *e.t_s;
      }
      out += j.dump() + "\n";
    }
    for (const auto& w : warnings) out += nlohmann::json{{"warning", w}}.dump() + "\n";
    return out;
  }
};

// ---------------------------------------------------------------------------
// Chain loop

struct SamplerConfig {
  Method method = Method::ddim;
  TimeGrid grid;
  double eta = 0.0;          // ddim only
  std::size_t n = 1;
  std::uint64_t seed = 0;
  bool to_data = true;       // last transfer lands on the chain end (alpha_bar = 1)

  void validate(const NoiseSchedule& s) const {
    require(eta >= 0.0 && std::isfinite(eta), ErrorCategory::invalid_argument, "eta must be >= 0");
    require(n >= 1, ErrorCategory::invalid_argument, "need at least one chain");
    require(!grid.steps.empty(), ErrorCategory::invalid_argument, "empty time grid");
    for (std::size_t i = 0; i < grid.steps.size(); ++i) {
      require(s.valid_timestep(grid.steps[i]), ErrorCategory::invalid_argument, "grid step outside schedule");
      if (i) require(grid.steps[i - 1] < grid.steps[i], ErrorCategory::invalid_argument, "grid not increasing");
    }
    require(to_data || grid.steps.size() >= 2, ErrorCategory::invalid_argument,
            "stopping at the grid minimum needs two grid points");
  }
};

/// Called after each transfer (except the last) with the new state and the
/// nominal (t, t_prev) pair; returns the shift record, which fixes where the
/// next iteration evaluates.
using ShiftHook = std::function<ShiftEvent(const SampleBatch& x_prev, int t, int t_prev)>;

/// Sees every state right after its transfer.
using StepObserver = std::function<void(int iteration, int t_used, int t_prev, const SampleBatch& x_prev)>;

/// Runs the backward chain for one group of rows (global chains
/// chain_offset .. chain_offset + rows - 1) starting from x.
inline SampleBatch run_chain(const SamplerConfig& cfg, const Denoiser& model, const NoiseSchedule& s,
                             SampleBatch x, std::size_t chain_offset, const ShiftHook& hook,
                             Trajectory& traj, long chain_label = -1, const StepObserver& observe = nullptr) {
  const auto desc = cfg.grid.descending();
  const int iterations = static_cast<int>(desc.size()) - (cfg.to_data ? 0 : 1);
  std::vector<SampleBatch> history;
  std::uint32_t calls = 0;
  int t_use = desc.front();

  auto eval = [&](const SampleBatch& xin, int t_eval, int t_target, Transfer kind, double eta) {
    EvalContext ctx{t_target, kind, eta, chain_offset, calls++};
    return predict_epsilon(model, xin, std::max(t_eval, 0), s, ctx);
  };
  auto noise = [&](int iteration) {
    return normal_batch(x.rows(), x.dim(), cfg.seed, Purpose::sampling, chain_offset,
                        static_cast<std::uint32_t>(iteration + 1));
  };
  auto transfer = [&](const SampleBatch& xin, int from, int to, const SampleBatch& e) {
    return ddim_step(xin, from, to, e, s, 0.0);
  };

  for (int i = 0; i < iterations; ++i) {
    const int t_nom = desc[i];
    const int t_prev = i + 1 < static_cast<int>(desc.size()) ? desc[i + 1] : -1;
    if (t_prev >= 0 && t_use <= t_prev)
      traj.warnings.push_back("non-monotone chain: evaluating at t=" + std::to_string(t_use) +
                              " before transferring to t=" + std::to_string(t_prev));
    SampleBatch next;
    switch (cfg.method) {
      case Method::ddpm: {
        const auto e = eval(x, t_use, t_prev, Transfer::ddpm, 0.0);
        const auto p = ddpm_posterior(t_use, t_prev, s);
        if (p.clamped)
          traj.warnings.push_back("ddpm posterior variance negative at t=" + std::to_string(t_use) +
                                  " -> " + std::to_string(t_prev) + "; sigma set to 0");
        if (t_prev >= 0) {
          const auto z = noise(i);
          next = ddpm_step(x, t_use, t_prev, e, &z, s);
        } else {
          next = ddpm_step(x, t_use, t_prev, e, nullptr, s);
        }
        break;
      }
      case Method::ddim: {
        const auto e = eval(x, t_use, t_prev, Transfer::ddim, cfg.eta);
        if (cfg.eta > 0.0 && t_prev >= 0) {
          const auto z = noise(i);
          next = ddim_step(x, t_use, t_prev, e, s, cfg.eta, &z);
        } else {
          next = ddim_step(x, t_use, t_prev, e, s, 0.0);
        }
        break;
      }
      case Method::s_pndm: {
        const auto e1 = eval(x, t_use, t_prev, Transfer::ddim, 0.0);
        history.push_back(e1);
        SampleBatch e;
        if (history.size() < 2) {
          // Pseudo improved Euler.
          const auto x2 = transfer(x, t_use, t_prev, e1);
          const auto e2 = eval(x2, t_prev, t_prev, Transfer::ddim, 0.0);
          e = SampleBatch(x.rows(), x.dim());
          for (std::size_t k = 0; k < e.size(); ++k) e.values()[k] = 0.5 * (e1.values()[k] + e2.values()[k]);
        } else {
          e = combine_history(history, 2);
        }
        next = transfer(x, t_use, t_prev, e);
        break;
      }
      case Method::f_pndm: {
        const auto e1 = eval(x, t_use, t_prev, Transfer::ddim, 0.0);
        history.push_back(e1);
        SampleBatch e;
        if (history.size() < 4) {
          // Pseudo Runge-Kutta through the midpoint.
          const int tm = std::max(0, (t_use + t_prev) / 2);
          const auto x2 = transfer(x, t_use, tm, e1);
          const auto e2 = eval(x2, tm, t_prev, Transfer::ddim, 0.0);
          const auto x3 = transfer(x, t_use, tm, e2);
          const auto e3 = eval(x3, tm, t_prev, Transfer::ddim, 0.0);
          const auto x4 = transfer(x, t_use, t_prev, e3);
          const auto e4 = eval(x4, t_prev, t_prev, Transfer::ddim, 0.0);
          e = SampleBatch(x.rows(), x.dim());
          for (std::size_t k = 0; k < e.size(); ++k)
            e.values()[k] = (e1.values()[k] + 2.0 * e2.values()[k] + 2.0 * e3.values()[k] + e4.values()[k]) / 6.0;
        } else {
          e = combine_history(history, 4);
        }
        next = transfer(x, t_use, t_prev, e);
        break;
      }
    }
    if (!next.all_finite())
      fail(ErrorCategory::divergence, "sample diverged at t=" + std::to_string(t_use) + " (iteration " +
                                          std::to_string(i) + ", method " + to_string(cfg.method) + ")");
    x = std::move(next);
    if (observe) observe(i, t_use, t_prev, x);

    StepRecord rec{i, chain_label, t_nom, t_use, t_prev, mean_row_norm(x),
                   x.dim() >= 2 ? mean_intra_sample_variance(x) : 0.0, std::nullopt};
    int t_following = t_prev;
    if (hook && t_prev >= 0 && i + 1 < iterations) {
      rec.shift = hook(x, t_nom, t_prev);
      t_following = rec.shift->t_next;
    }
    traj.steps.push_back(std::move(rec));
    t_use = t_following;
  }
  return x;
}

struct SampleResult {
  SampleBatch samples;
  Trajectory trajectory;
};

inline SampleBatch initial_noise(std::size_t n, std::size_t d, std::uint64_t seed, std::size_t offset = 0) {
  return normal_batch(n, d, seed, Purpose::sampling, offset, 0);
}

/// Baseline sampler: x_T ~ N(0, I), descending grid, no shifting.
inline SampleResult run_sampler(const SamplerConfig& cfg, const Denoiser& model, const NoiseSchedule& s,
                                std::size_t dim) {
  cfg.validate(s);
  SampleResult r;
  r.samples = run_chain(cfg, model, s, initial_noise(cfg.n, dim, cfg.seed), 0, nullptr, r.trajectory);
  return r;
}

inline std::string samples_csv(const SampleBatch& x) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < x.dim(); ++j) header.push_back("x" + std::to_string(j));
  CsvWriter csv(header);
  std::vector<std::string> cells(x.dim());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.dim(); ++j) cells[j] = format_real(x(i, j));
    csv.row_strings(cells);
  }
  return csv.str();
}

}  // namespace tsdiff
