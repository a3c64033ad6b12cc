#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/rng.hpp"

namespace tsdiff {

struct MlpShape {
  std::size_t dim = 2;
  std::size_t hidden = 128;
  std::size_t depth = 3;       // hidden layers
  std::size_t embed = 32;      // sinusoidal time features (sin half + cos half)

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Sinusoidal features of the integer timestep: sin(t f_k), cos(t f_k) with
/// f_k = 10000^(-k/half).
inline void time_embedding(int t, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double f = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    out[k] = std::sin(t * f);
    out[half + k] = std::cos(t * f);
  }
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Fully connected epsilon network, SiLU activations, flat parameter vector.
/// Layer l stores an out x in row-major weight block followed by out biases.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(MlpShape shape) : shape_(shape) {
    require(shape.dim >= 1 && shape.hidden >= 1 && shape.depth >= 1, ErrorCategory::invalid_argument,
            "mlp needs dim, hidden, depth >= 1");
    require(shape.embed % 2 == 0, ErrorCategory::invalid_argument, "time embedding width must be even");
    std::size_t in = shape.dim + shape.embed;
    std::size_t offset = 0;
    for (std::size_t l = 0; l <= shape.depth; ++l) {
      const std::size_t out = l == shape.depth ? shape.dim : shape.hidden;
      layers_.push_back({in, out, offset});
      offset += out * in + out;
      in = out;
    }
    params_.assign(offset, 0.0);
  }

  /// LeCun-normal weights, zero biases.
  static Mlp initialized(MlpShape shape, std::uint64_t seed) {
    Mlp m(shape);
    Stream rng(seed, Purpose::init);
    for (const auto& L : m.layers_) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(L.in));
      for (std::size_t i = 0; i < L.out * L.in; ++i) m.params_[L.offset + i] = scale * rng.normal();
    }
    return m;
  }

  const MlpShape& shape() const noexcept { return shape_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::vector<double>& parameters() noexcept { return params_; }
  const std::vector<double>& parameters() const noexcept { return params_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t layer_in(std::size_t l) const { return layers_.at(l).in; }
  std::size_t layer_out(std::size_t l) const { return layers_.at(l).out; }
  std::size_t layer_offset(std::size_t l) const { return layers_.at(l).offset; }

  /// Output for every row, with per-row timesteps.
  SampleBatch forward(const SampleBatch& x, std::span<const int> ts) const {
    check_input(x, ts);
    SampleBatch out(x.rows(), shape_.dim);
    Workspace ws = workspace();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      forward_row(x.row(i), ts[i], ws);
      std::copy(ws.act.back().begin(), ws.act.back().end(), out.row(i).begin());
    }
    return out;
  }

  /// Mean over rows of ||target - f(x, t)||^2; accumulates its gradient into grad.
  double loss_and_gradient(const SampleBatch& x, std::span<const int> ts, const SampleBatch& target,
                           std::vector<double>& grad) const {
    check_input(x, ts);
    require_same_shape(x, target, "mlp loss");
    grad.assign(params_.size(), 0.0);
    Workspace ws = workspace();
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      forward_row(x.row(i), ts[i], ws);
      auto& delta = ws.delta.back();
      const auto& y = ws.act.back();
      const auto tgt = target.row(i);
      for (std::size_t j = 0; j < shape_.dim; ++j) {
        const double r = y[j] - tgt[j];
        loss += r * r * inv_n;
        delta[j] = 2.0 * r * inv_n;
      }
      backward_row(ws, grad);
    }
    return loss;
  }

  double loss(const SampleBatch& x, std::span<const int> ts, const SampleBatch& target) const {
    const SampleBatch y = forward(x, ts);
    double acc = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double r = y.values()[k] - target.values()[k];
      acc += r * r;
    }
    return acc / static_cast<double>(x.rows());
  }

 private:
  struct Layer {
    std::size_t in, out, offset;
  };

  // act[0] is the input (state ++ embedding); act[l+1] = layer l output.
  struct Workspace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> delta;  // dL/d pre-activation, per layer
  };

  Workspace workspace() const {
    Workspace ws;
    ws.act.emplace_back(layers_.front().in);
    for (const auto& L : layers_) {
      ws.pre.emplace_back(L.out);
      ws.act.emplace_back(L.out);
      ws.delta.emplace_back(L.out);
    }
    return ws;
  }

  void check_input(const SampleBatch& x, std::span<const int> ts) const {
    require(x.dim() == shape_.dim, ErrorCategory::dimension, "mlp input dimension mismatch");
    require(ts.size() == x.rows(), ErrorCategory::dimension, "one timestep per row required");
  }

  void forward_row(std::span<const double> x, int t, Workspace& ws) const {
    auto& a0 = ws.act[0];
    std::copy(x.begin(), x.end(), a0.begin());
    time_embedding(t, std::span<double>(a0).subspan(shape_.dim));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      const double* W = params_.data() + L.offset;
      const double* b = W + L.out * L.in;
      const auto& in = ws.act[l];
      auto& z = ws.pre[l];
      auto& a = ws.act[l + 1];
      const bool last = l + 1 == layers_.size();
      for (std::size_t o = 0; o < L.out; ++o) {
        double acc = b[o];
        const double* w = W + o * L.in;
        for (std::size_t k = 0; k < L.in; ++k) acc += w[k] * in[k];
        z[o] = acc;
        a[o] = last ? acc : acc * sigmoid(acc);
      }
    }
  }

  // Expects ws.delta.back() to hold dL/d output.
  void backward_row(Workspace& ws, std::vector<double>& grad) const {
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& L = layers_[l];
      const double* W = params_.data() + L.offset;
      double* gW = grad.data() + L.offset;
      double* gb = gW + L.out * L.in;
      const auto& in = ws.act[l];
      const auto& delta = ws.delta[l];
      for (std::size_t o = 0; o < L.out; ++o) {
        const double g = delta[o];
        gb[o] += g;
        double* gw = gW + o * L.in;
        for (std::size_t k = 0; k < L.in; ++k) gw[k] += g * in[k];
      }
      if (l == 0) break;
      auto& below = ws.delta[l - 1];
      const auto& zb = ws.pre[l - 1];
      for (std::size_t k = 0; k < L.in; ++k) {
        double acc = 0.0;
        for (std::size_t o = 0; o < L.out; ++o) acc += W[o * L.in + k] * delta[o];
        const double s = sigmoid(zb[k]);
        below[k] = acc * s * (1.0 + zb[k] * (1.0 - s));
      }
    }
  }

  MlpShape shape_{};
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

class MlpDenoiser final : public Denoiser {
 public:
  explicit MlpDenoiser(Mlp net) : net_(std::move(net)) {}
  std::string variant() const override { return "mlp"; }

  SampleBatch predict(const SampleBatch& x, int t, const EvalContext&) const override {
    const std::vector<int> ts(x.rows(), t);
    return net_.forward(x, ts);
  }

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }

 private:
  Mlp net_;
};

}  // namespace tsdiff
