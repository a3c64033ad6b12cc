#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/io.hpp"
#include "tsdiff/mlp.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0 = run all epochs

  void validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCategory::invalid_argument,
            "learning rate must be finite and non-negative");
    require(batch_size >= 1, ErrorCategory::invalid_argument, "batch size must be >= 1");
  }
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
      return;
    }
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Noisy inputs for one batch: per-example t uniform in [0, T-1] and eps.
struct NoisedBatch {
  SampleBatch xt;
  SampleBatch eps;
  std::vector<int> ts;
};

inline NoisedBatch draw_noised_batch(const SampleBatch& x0, const NoiseSchedule& schedule, Stream& rng) {
  NoisedBatch nb{SampleBatch(x0.rows(), x0.dim()), SampleBatch(x0.rows(), x0.dim()),
                 std::vector<int>(x0.rows())};
  for (std::size_t i = 0; i < x0.rows(); ++i) {
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.T())));
    nb.ts[i] = t;
    const double ab = schedule.alpha_bar(t);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    auto e = nb.eps.row(i);
    rng.fill_normal(e);
    auto xr = nb.xt.row(i);
    const auto x = x0.row(i);
    for (std::size_t j = 0; j < x0.dim(); ++j) xr[j] = sa * x[j] + sn * e[j];
  }
  return nb;
}

/// Simple loss of any (frozen) model on one noised batch.
inline double simple_loss(const Denoiser& model, const SampleBatch& x0, const NoiseSchedule& schedule,
                          Stream& rng) {
  const NoisedBatch nb = draw_noised_batch(x0, schedule, rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < x0.rows(); ++i) {
    const SampleBatch xi = nb.xt.slice(i, 1);
    const SampleBatch pred = model.predict(xi, nb.ts[i], EvalContext{});
    const auto e = nb.eps.row(i);
    for (std::size_t j = 0; j < x0.dim(); ++j) {
      const double r = e[j] - pred(0, j);
      acc += r * r;
    }
  }
  return acc / static_cast<double>(x0.rows());
}

/// One optimizer update; returns the loss before the update.
inline double training_step(Mlp& net, Optimizer& opt, const SampleBatch& x0, const NoiseSchedule& schedule,
                            Stream& rng) {
  require(x0.rows() >= 1, ErrorCategory::invalid_argument, "empty training batch");
  const NoisedBatch nb = draw_noised_batch(x0, schedule, rng);
  std::vector<double> grad;
  const double loss = net.loss_and_gradient(nb.xt, nb.ts, nb.eps, grad);
  if (!std::isfinite(loss))
    fail(ErrorCategory::divergence, "training loss became non-finite (" + format_real(loss) + ")");
  opt.step(net.parameters(), grad);
  return loss;
}

struct TrainResult {
  Mlp net;
  std::vector<double> losses;

  std::string loss_csv() const {
    CsvWriter csv({"step", "loss"});
    for (std::size_t i = 0; i < losses.size(); ++i) csv.row(i, losses[i]);
    return csv.str();
  }
};

/// Mini-batch training with a per-epoch deterministic shuffle.
inline TrainResult train(Mlp net, const SampleBatch& dataset, const NoiseSchedule& schedule,
                         const TrainConfig& config) {
  config.validate();
  require(dataset.rows() >= 1, ErrorCategory::invalid_argument, "dataset is empty");
  TrainResult result{std::move(net), {}};
  Optimizer opt(config.optimizer, config.learning_rate);
  std::vector<std::size_t> order(dataset.rows());
  const std::size_t bs = std::min(config.batch_size, dataset.rows());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Stream shuffle(config.seed, Purpose::training, 0xFFFF0000ull + epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t first = 0; first + bs <= order.size(); first += bs) {
      if (config.max_steps && step >= config.max_steps) return result;
      SampleBatch batch(bs, dataset.dim());
      for (std::size_t k = 0; k < bs; ++k) {
        const auto src = dataset.row(order[first + k]);
        std::copy(src.begin(), src.end(), batch.row(k).begin());
      }
      Stream rng(config.seed, Purpose::training, step);
      result.losses.push_back(training_step(result.net, opt, batch, schedule, rng));
      ++step;
    }
  }
  return result;
}

}  // namespace tsdiff
