#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tsdiff/batch.hpp"
#include "tsdiff/datasets.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/io.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/samplers.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/stats.hpp"

namespace tsdiff {

/// Long-form, append-only record set.
class DiagnosticsTable {
 public:
  struct Record {
    std::string experiment;
    int t;
    std::string statistic;
    double value;
  };

  void add(std::string experiment, int t, std::string statistic, double value) {
    records_.push_back({std::move(experiment), t, std::move(statistic), value});
  }

  const std::vector<Record>& records() const noexcept { return records_; }

  /// First value matching (statistic, t); NaN if absent.
  double get(const std::string& statistic, int t) const {
    for (const auto& r : records_)
      if (r.statistic == statistic && r.t == t) return r.value;
    return std::nan("");
  }

  std::string to_csv() const {
    CsvWriter csv({"experiment", "t", "statistic", "value"});
    for (const auto& r : records_) csv.row(r.experiment, r.t, r.statistic, r.value);
    return csv.str();
  }

 private:
  std::vector<Record> records_;
};

/// Linear-interpolated quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
  require(!v.empty(), ErrorCategory::invalid_argument, "quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

// ---------------------------------------------------------------------------
// Per-sample variance spread along the forward process

struct VarianceDensity {
  struct Entry {
    int t;
    std::vector<double> variances;
  };
  std::vector<Entry> entries;
  static constexpr double kQuantiles[] = {0.1, 0.25, 0.5, 0.75, 0.9};

  double interdecile_width(int t) const {
    for (const auto& e : entries)
      if (e.t == t) return quantile(e.variances, 0.9) - quantile(e.variances, 0.1);
    fail(ErrorCategory::invalid_argument, "no variance density at t=" + std::to_string(t));
  }

  /// Schema: t,quantile,value. Histogram rows are not part of the CSV.
  std::string to_csv() const {
    CsvWriter csv({"t", "quantile", "value"});
    for (const auto& e : entries)
      for (double q : kQuantiles) csv.row(e.t, q, quantile(e.variances, q));
    return csv.str();
  }

  DiagnosticsTable table() const {
    DiagnosticsTable tab;
    for (const auto& e : entries) {
      for (double q : kQuantiles) tab.add("variance_density", e.t, "q" + format_real(q), quantile(e.variances, q));
      tab.add("variance_density", e.t, "interdecile_width", interdecile_width(e.t));
    }
    return tab;
  }
};

/// Intra-sample variances of x_t = q_sample(x0, t, eps) for each t; t < 0
/// means the clean data itself.
inline VarianceDensity variance_density(const SampleBatch& x0, const std::vector<int>& timesteps,
                                        const NoiseSchedule& s, std::uint64_t seed) {
  require(x0.rows() >= 100, ErrorCategory::invalid_argument, "variance density needs N >= 100");
  VarianceDensity out;
  const SampleBatch eps = normal_batch(x0.rows(), x0.dim(), seed, Purpose::diagnostics);
  for (int t : timesteps) {
    const SampleBatch xt = t < 0 ? x0 : q_sample(x0, t, eps, s);
    VarianceDensity::Entry e{t, {}};
    for (std::size_t i = 0; i < xt.rows(); ++i) e.variances.push_back(intra_sample_variance(xt.row(i)));
    out.entries.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage MSE along a deterministic chain

struct MseCurve {
  struct Row {
    int stage;
    int t;  // -1: the terminal (data-level) state
    double mse;
  };
  std::vector<Row> rows;
  int split_step = 0;  // largest grid point <= t_split; stage 2 starts here

  std::vector<Row> stage(int k) const {
    std::vector<Row> out;
    for (const auto& r : rows)
      if (r.stage == k) out.push_back(r);
    return out;
  }

  std::string to_csv() const {
    CsvWriter csv({"stage", "t", "mse"});
    for (const auto& r : rows) csv.row(r.stage, r.t, r.mse);
    return csv.str();
  }
};

inline double mean_squared_difference(const SampleBatch& a, const SampleBatch& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double r = a.values()[k] - b.values()[k];
    acc += r * r;
  }
  return acc / static_cast<double>(a.size());
}

/// Stage 1 (grid points >= t_split): chains from x_T ~ N(0, I), MSE against
/// the forward distribution center sqrt(ab_t) E[x0]. Stage 2: chains restart
/// from q_sample(x0, s0, eps) at the split step s0 and are compared to
/// q_sample(x0, t, eps) at every later grid point, then to x0 at the end.
inline MseCurve mse_by_step(const SamplerConfig& cfg, const Denoiser& model, const SampleBatch& x0,
                            const std::vector<double>& data_mean, int t_split, const NoiseSchedule& s) {
  require(cfg.method == Method::ddim && cfg.eta == 0.0, ErrorCategory::contract,
          "mse_by_step needs the deterministic sampler (ddim, eta = 0)");
  require(data_mean.size() == x0.dim(), ErrorCategory::dimension, "data mean dimension mismatch");
  SamplerConfig c = cfg;
  c.n = x0.rows();
  c.to_data = true;
  c.validate(s);
  const auto& steps = c.grid.steps;
  MseCurve out;
  auto it = std::upper_bound(steps.begin(), steps.end(), t_split);
  out.split_step = it == steps.begin() ? steps.front() : *std::prev(it);

  auto center = [&](int t) {
    SampleBatch m(x0.rows(), x0.dim());
    const double sa = std::sqrt(s.alpha_bar(t));
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.dim(); ++j) m(i, j) = sa * data_mean[j];
    return m;
  };

  // Stage 1
  if (steps.back() > out.split_step) {
    SamplerConfig c1 = c;
    c1.grid.steps.assign(std::lower_bound(steps.begin(), steps.end(), out.split_step), steps.end());
    c1.to_data = false;
    const SampleBatch xT = initial_noise(c.n, x0.dim(), c.seed);
    out.rows.push_back({1, c1.grid.steps.back(), mean_squared_difference(xT, center(c1.grid.steps.back()))});
    Trajectory traj;
    run_chain(c1, model, s, xT, 0, nullptr, traj, -1, [&](int, int, int t_prev, const SampleBatch& x) {
      out.rows.push_back({1, t_prev, mean_squared_difference(x, center(t_prev))});
    });
  }

  // Stage 2
  SamplerConfig c2 = c;
  c2.grid.steps.assign(steps.begin(), std::upper_bound(steps.begin(), steps.end(), out.split_step));
  const SampleBatch eps = normal_batch(x0.rows(), x0.dim(), c.seed, Purpose::diagnostics);
  const SampleBatch start = q_sample(x0, out.split_step, eps, s);
  out.rows.push_back({2, out.split_step, 0.0});
  Trajectory traj;
  run_chain(c2, model, s, start, 0, nullptr, traj, -1, [&](int, int, int t_prev, const SampleBatch& x) {
    const SampleBatch truth = t_prev < 0 ? x0 : q_sample(x0, t_prev, eps, s);
    out.rows.push_back({2, t_prev, mean_squared_difference(x, truth)});
  });
  return out;
}

// ---------------------------------------------------------------------------
// Coupling between predicted and forward states

struct CouplingReport {
  struct Cell {
    int t;       // landing timestep of the transfer
    int offset;  // probe tau = t + offset
    int tau;
    double mean_c;
    double mean_dist;
  };
  std::vector<Cell> cells;
  std::size_t samples = 0;

  /// Offsets whose coupling beats offset 0 at landing step t.
  std::vector<int> better_than_diagonal(int t) const {
    double diag = -1.0;
    for (const auto& c : cells)
      if (c.t == t && c.offset == 0) diag = c.mean_c;
    std::vector<int> out;
    for (const auto& c : cells)
      if (c.t == t && c.offset != 0 && c.mean_c > diag) out.push_back(c.offset);
    return out;
  }

  std::vector<int> landing_steps() const {
    std::vector<int> out;
    for (const auto& c : cells)
      if (out.empty() || out.back() != c.t) out.push_back(c.t);
    return out;
  }

  std::string to_csv() const {
    CsvWriter csv({"t", "offset", "mean_C", "mean_dist"});
    for (const auto& c : cells) csv.row(c.t, c.offset, c.mean_c, c.mean_dist);
    return csv.str();
  }
};

enum class CouplingAverage { per_sample, batch_mean };

/// Starts at q_sample(x0, top, eps), runs the sampler, and after each
/// transfer landing at t compares the state with q_sample(x0, t + offset, eps)
/// for each probe offset. C = exp(-||x_hat - x_tau||).
inline CouplingReport coupling_matrix(const SamplerConfig& cfg, const Denoiser& model, const SampleBatch& x0,
                                      int offset_lo, int offset_hi, const NoiseSchedule& s,
                                      CouplingAverage avg = CouplingAverage::per_sample) {
  require(offset_lo <= 0 && offset_hi >= 0, ErrorCategory::invalid_argument, "probe window must contain 0");
  SamplerConfig c = cfg;
  c.n = x0.rows();
  c.validate(s);
  const SampleBatch eps = normal_batch(x0.rows(), x0.dim(), c.seed, Purpose::diagnostics);
  CouplingReport rep;
  rep.samples = x0.rows();
  Trajectory traj;
  run_chain(c, model, s, q_sample(x0, c.grid.steps.back(), eps, s), 0, nullptr, traj, -1,
            [&](int, int, int t, const SampleBatch& x) {
              if (t < 0) return;
              for (int off = offset_lo; off <= offset_hi; ++off) {
                const int tau = t + off;
                if (!s.valid_timestep(tau)) continue;
                const SampleBatch ref = q_sample(x0, tau, eps, s);
                double sum_c = 0.0, sum_d = 0.0;
                for (std::size_t i = 0; i < x.rows(); ++i) {
                  double sq = 0.0;
                  for (std::size_t j = 0; j < x.dim(); ++j) {
                    const double r = x(i, j) - ref(i, j);
                    sq += r * r;
                  }
                  const double dist = std::sqrt(sq);
                  sum_d += dist;
                  sum_c += std::exp(-dist);
                }
                const double n = static_cast<double>(x.rows());
                const double mean_d = sum_d / n;
                const double mean_c = avg == CouplingAverage::per_sample ? sum_c / n : std::exp(-mean_d);
                rep.cells.push_back({t, off, tau, mean_c, mean_d});
              }
            });
  return rep;
}

// ---------------------------------------------------------------------------
// Distribution distances

/// 1-D Wasserstein-2 between two empirical distributions (sorted inputs),
/// exact for unequal sizes via the merged quantile grid.
inline double wasserstein2_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / na);
  }
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na, next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    acc += (next - u) * (a[i] - b[j]) * (a[i] - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return std::sqrt(acc);
}

inline double sliced_wasserstein(const SampleBatch& a, const SampleBatch& b, std::size_t n_proj,
                                 std::uint64_t seed) {
  require(a.dim() == b.dim(), ErrorCategory::dimension, "sliced_wasserstein: dimension mismatch");
  require(a.rows() >= 1 && b.rows() >= 1, ErrorCategory::invalid_argument, "sliced_wasserstein: empty batch");
  require(n_proj >= 32, ErrorCategory::invalid_argument, "sliced_wasserstein needs >= 32 projections");
  const std::size_t d = a.dim();
  std::vector<double> dir(d), pa(a.rows()), pb(b.rows());
  double total = 0.0;
  for (std::size_t k = 0; k < n_proj; ++k) {
    Stream rng(seed, Purpose::projection, k);
    double norm = 0.0;
    do {
      rng.fill_normal(dir);
      norm = l2_norm(dir);
    } while (norm == 0.0);
    for (double& v : dir) v /= norm;
    auto project = [&](const SampleBatch& x, std::vector<double>& out) {
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        const auto r = x.row(i);
        for (std::size_t j = 0; j < d; ++j) acc += r[j] * dir[j];
        out[i] = acc;
      }
      std::sort(out.begin(), out.end());
    };
    project(a, pa);
    project(b, pb);
    total += wasserstein2_sorted(pa, pb);
  }
  return total / static_cast<double>(n_proj);
}

struct MomentErrors {
  double mean_error;  // ||mean_hat - mean||
  double cov_error;   // ||Cov_hat - Cov||_F

  DiagnosticsTable table(const std::string& experiment = "moments") const {
    DiagnosticsTable t;
    t.add(experiment, -1, "mean_error", mean_error);
    t.add(experiment, -1, "cov_error", cov_error);
    return t;
  }
};

/// Compares sample mean and (unbiased) covariance with the mixture's exact
/// first two moments.
inline MomentErrors moment_error(const SampleBatch& x, const GaussianMixture& ref) {
  validate_mixture(ref);
  require(x.rows() >= 1, ErrorCategory::invalid_argument, "moment_error needs samples");
  const std::size_t d = x.dim();
  require(ref.front().mean.size() == d, ErrorCategory::dimension, "moment_error: dimension mismatch");
  const double n = static_cast<double>(x.rows());
  std::vector<double> m(d, 0.0), mref(d, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) m[j] += x(i, j) / n;
  for (const auto& c : ref)
    for (std::size_t j = 0; j < d; ++j) mref[j] += c.weight * c.mean[j];
  double mean_err = 0.0;
  for (std::size_t j = 0; j < d; ++j) mean_err += (m[j] - mref[j]) * (m[j] - mref[j]);

  double cov_err = 0.0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double c_hat = 0.0;
      if (x.rows() > 1) {
        for (std::size_t i = 0; i < x.rows(); ++i) c_hat += (x(i, a) - m[a]) * (x(i, b) - m[b]);
        c_hat /= n - 1.0;
      }
      double c_ref = -mref[a] * mref[b];
      for (const auto& c : ref) c_ref += c.weight * ((a == b ? c.variance[a] : 0.0) + c.mean[a] * c.mean[b]);
      cov_err += (c_hat - c_ref) * (c_hat - c_ref);
    }
  return {std::sqrt(mean_err), std::sqrt(cov_err)};
}

}  // namespace tsdiff
