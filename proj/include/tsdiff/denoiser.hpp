#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

/// How the sampler will turn the prediction into the next state.
enum class Transfer { none, ddim, ddpm };

/// Sampler-side information passed along with each model call. Plain models
/// ignore it; the error-injecting wrapper needs the target step to convert a
/// state-level error into an epsilon-level one.
struct EvalContext {
  int t_prev = -1;
  Transfer transfer = Transfer::none;
  double eta = 0.0;
  std::size_t chain_offset = 0;  // global index of row 0
  std::uint32_t call = 0;        // model-call counter within the chain
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::string variant() const = 0;
  virtual SampleBatch predict(const SampleBatch& x, int t, const EvalContext& ctx) const = 0;
};

/// Validates shape and timestep, then dispatches. Non-finite output is a
/// model error.
inline SampleBatch predict_epsilon(const Denoiser& model, const SampleBatch& x, int t,
                                   const NoiseSchedule& schedule, const EvalContext& ctx = {}) {
  require(schedule.valid_timestep(t), ErrorCategory::invalid_argument,
          "predict_epsilon: timestep " + std::to_string(t) + " out of range");
  require(x.all_finite(), ErrorCategory::divergence, "predict_epsilon: non-finite input");
  SampleBatch out = model.predict(x, t, ctx);
  require(out.same_shape(x), ErrorCategory::dimension, "denoiser changed the batch shape");
  require(out.all_finite(), ErrorCategory::model,
          model.variant() + " produced non-finite output at t=" + std::to_string(t));
  return out;
}

// ---------------------------------------------------------------------------
// Analytic Gaussian / diagonal-GMM oracle

struct GaussianMoments {
  std::vector<double> mean;
  std::vector<double> variance;  // diagonal
  double weight = 1.0;
};

using GaussianMixture = std::vector<GaussianMoments>;

inline void validate_mixture(const GaussianMixture& mix) {
  require(!mix.empty(), ErrorCategory::model, "mixture has no components");
  const std::size_t d = mix.front().mean.size();
  require(d >= 1, ErrorCategory::model, "mixture dimension is zero");
  double total = 0.0;
  for (const auto& c : mix) {
    require(c.mean.size() == d && c.variance.size() == d, ErrorCategory::model,
            "mixture components disagree on dimension");
    require(std::isfinite(c.weight) && c.weight >= 0.0, ErrorCategory::model,
            "mixture weight must be finite and non-negative");
    for (double m : c.mean) require(std::isfinite(m), ErrorCategory::model, "non-finite mean");
    for (double v : c.variance)
      require(std::isfinite(v) && v > 0.0, ErrorCategory::model, "component variance must be > 0");
    total += c.weight;
  }
  require(std::abs(total - 1.0) < 1e-9, ErrorCategory::model, "mixture weights must sum to 1");
}

/// Per-row posterior responsibilities of each component given x_t.
inline std::vector<double> mixture_responsibilities(const GaussianMixture& mix,
                                                    std::span<const double> x, double ab) {
  const double sa = std::sqrt(ab);
  std::vector<double> logw(mix.size());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (mix[k].weight == 0.0) {
      logw[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double acc = std::log(mix[k].weight);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double s = ab * mix[k].variance[j] + 1.0 - ab;
      const double r = x[j] - sa * mix[k].mean[j];
      acc -= 0.5 * (std::log(2.0 * std::numbers::pi * s) + r * r / s);
    }
    logw[k] = acc;
  }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (double& l : logw) z += (l = std::exp(l - mx));
  for (double& l : logw) l /= z;
  return logw;
}

/// Bayes-optimal epsilon under the forward kernel for diagonal-GMM data.
inline SampleBatch analytic_epsilon(const GaussianMixture& mix, const SampleBatch& x, int t,
                                    const NoiseSchedule& schedule) {
  require(t >= 0, ErrorCategory::domain, "analytic_epsilon needs alpha_bar in (0,1)");
  const double ab = schedule.alpha_bar(t);
  require(ab > 0.0 && ab < 1.0, ErrorCategory::domain, "analytic_epsilon needs alpha_bar in (0,1)");
  require(x.dim() == mix.front().mean.size(), ErrorCategory::dimension,
          "state dimension does not match the mixture");
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  SampleBatch out(x.rows(), x.dim());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    auto oi = out.row(i);
    if (mix.size() == 1) {
      const auto& c = mix.front();
      for (std::size_t j = 0; j < xi.size(); ++j)
        oi[j] = sn * (xi[j] - sa * c.mean[j]) / (ab * c.variance[j] + 1.0 - ab);
      continue;
    }
    const auto r = mixture_responsibilities(mix, xi, ab);
    for (std::size_t k = 0; k < mix.size(); ++k) {
      if (r[k] == 0.0) continue;
      const auto& c = mix[k];
      for (std::size_t j = 0; j < xi.size(); ++j)
        oi[j] += r[k] * sn * (xi[j] - sa * c.mean[j]) / (ab * c.variance[j] + 1.0 - ab);
    }
  }
  return out;
}

/// E[x0 | x_t] computed directly (not through epsilon).
inline SampleBatch posterior_mean(const GaussianMixture& mix, const SampleBatch& x, int t,
                                  const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bar(t);
  require(t >= 0 && ab > 0.0 && ab < 1.0, ErrorCategory::domain, "posterior_mean needs t >= 0");
  const double sa = std::sqrt(ab);
  SampleBatch out(x.rows(), x.dim());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    const auto r = mixture_responsibilities(mix, xi, ab);
    for (std::size_t k = 0; k < mix.size(); ++k) {
      const auto& c = mix[k];
      for (std::size_t j = 0; j < xi.size(); ++j) {
        const double v = c.variance[j], m = c.mean[j];
        out(i, j) += r[k] * (sa * v * xi[j] + (1.0 - ab) * m) / (ab * v + 1.0 - ab);
      }
    }
  }
  return out;
}

/// Overall mean and diagonal variance of the mixture.
inline GaussianMoments mixture_moments(const GaussianMixture& mix) {
  const std::size_t d = mix.front().mean.size();
  GaussianMoments out{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), 1.0};
  for (const auto& c : mix)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += c.weight * c.mean[j];
  for (const auto& c : mix)
    for (std::size_t j = 0; j < d; ++j) {
      const double dm = c.mean[j] - out.mean[j];
      out.variance[j] += c.weight * (c.variance[j] + dm * dm);
    }
  return out;
}

class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(GaussianMixture mix, NoiseSchedule schedule)
      : mix_(std::move(mix)), schedule_(std::move(schedule)) {
    validate_mixture(mix_);
  }

  std::string variant() const override {
    return mix_.size() == 1 ? "analytic-gaussian" : "analytic-gmm";
  }

  SampleBatch predict(const SampleBatch& x, int t, const EvalContext&) const override {
    return analytic_epsilon(mix_, x, t, schedule_);
  }

  const GaussianMixture& mixture() const noexcept { return mix_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  GaussianMixture mix_;
  NoiseSchedule schedule_;
};

/// Wraps an arbitrary callable; handy for stubs in tests.
class FunctionDenoiser final : public Denoiser {
 public:
  using Fn = std::function<SampleBatch(const SampleBatch&, int, const EvalContext&)>;
  explicit FunctionDenoiser(Fn fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string variant() const override { return name_; }
  SampleBatch predict(const SampleBatch& x, int t, const EvalContext& ctx) const override {
    return fn_(x, t, ctx);
  }

 private:
  Fn fn_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Error injection

struct PerturbationSpec {
  std::vector<double> phi;  // state-level error std, indexed by target timestep
  std::uint64_t seed = 0;
};

inline PerturbationSpec constant_perturbation(int T, double phi, std::uint64_t seed) {
  return {std::vector<double>(static_cast<std::size_t>(T), phi), seed};
}

/// d x_prev / d eps_hat for one transfer from t (eval) to t_prev.
inline double transfer_sensitivity(Transfer kind, int t, int t_prev, double eta,
                                   const NoiseSchedule& s) {
  const double ab = s.alpha_bar(t);
  const double ap = s.alpha_bar(t_prev);
  switch (kind) {
    case Transfer::none:
      return 1.0;
    case Transfer::ddim: {
      const double sigma2 =
          std::max(0.0, eta * eta * (1.0 - ap) / (1.0 - ab) * (1.0 - ab / ap));
      return std::sqrt(std::max(0.0, 1.0 - ap - sigma2)) - std::sqrt(ap / ab) * std::sqrt(1.0 - ab);
    }
    case Transfer::ddpm: {
      const double a_eff = ab / ap;
      return -(1.0 - a_eff) / (std::sqrt(a_eff) * std::sqrt(1.0 - ab));
    }
  }
  return 1.0;
}

/// Adds phi/|kappa| * z to the inner prediction, where kappa is the
/// transfer's epsilon sensitivity, so the next state moves by phi * z.
/// Draws are addressed by (seed, chain, call) and so do not depend on batching.
class PerturbedDenoiser final : public Denoiser {
 public:
  PerturbedDenoiser(std::shared_ptr<const Denoiser> inner, PerturbationSpec spec,
                    NoiseSchedule schedule)
      : inner_(std::move(inner)), spec_(std::move(spec)), schedule_(std::move(schedule)) {
    require(inner_ != nullptr, ErrorCategory::invalid_argument, "perturbed denoiser needs a model");
    require(static_cast<int>(spec_.phi.size()) == schedule_.T(), ErrorCategory::invalid_argument,
            "phi must have one entry per timestep");
    for (double p : spec_.phi)
      require(std::isfinite(p) && p >= 0.0, ErrorCategory::invalid_argument, "phi must be >= 0");
  }

  std::string variant() const override { return "perturbed"; }

  SampleBatch predict(const SampleBatch& x, int t, const EvalContext& ctx) const override {
    SampleBatch out = inner_->predict(x, t, ctx);
    const double phi = spec_.phi[static_cast<std::size_t>(std::max(ctx.t_prev, 0))];
    if (phi == 0.0) return out;
    const double kappa = std::abs(transfer_sensitivity(ctx.transfer, t, ctx.t_prev, ctx.eta, schedule_));
    if (kappa == 0.0) return out;
    const double scale = phi / kappa;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      Stream rng(spec_.seed, Purpose::perturbation, ctx.chain_offset + i, ctx.call);
      for (double& v : out.row(i)) v += scale * rng.normal();
    }
    return out;
  }

  const Denoiser& inner() const noexcept { return *inner_; }
  const PerturbationSpec& spec() const noexcept { return spec_; }

 private:
  std::shared_ptr<const Denoiser> inner_;
  PerturbationSpec spec_;
  NoiseSchedule schedule_;
};

inline std::shared_ptr<const Denoiser> perturb_epsilon(std::shared_ptr<const Denoiser> inner,
                                                       PerturbationSpec spec,
                                                       const NoiseSchedule& schedule) {
  return std::make_shared<PerturbedDenoiser>(std::move(inner), std::move(spec), schedule);
}

}  // namespace tsdiff
