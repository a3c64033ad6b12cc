#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "tsdiff/datasets.hpp"
#include "tsdiff/samplers.hpp"

using namespace tsdiff;

namespace {

// Two-step ladder with alpha_bar = {ab_prev, ab}.
NoiseSchedule two_step(double ab_prev, double ab) {
  return NoiseSchedule::from_betas({1.0 - ab_prev, 1.0 - ab / ab_prev});
}

SamplerConfig config(Method m, const NoiseSchedule& s, int steps, std::size_t n, std::uint64_t seed) {
  SamplerConfig c;
  c.method = m;
  c.grid = select_time_grid(s, steps, GridMode::uniform);
  c.n = n;
  c.seed = seed;
  return c;
}

double column_mean(const SampleBatch& x, std::size_t j) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) acc += x(i, j);
  return acc / x.rows();
}

double column_var(const SampleBatch& x, std::size_t j) {
  const double m = column_mean(x, j);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) acc += (x(i, j) - m) * (x(i, j) - m);
  return acc / (x.rows() - 1);
}

}  // namespace

TEST(DdpmStep, HandEvaluation) {
  // alpha_t = 0.99, alpha_bar_t = 0.5.
  const auto s = two_step(0.5 / 0.99, 0.5);
  ASSERT_NEAR(s.alpha(1), 0.99, 1e-15);
  SampleBatch x(1, 1, 1.0), e(1, 1, 0.2);
  const auto out = ddpm_step(x, 1, 0, e, nullptr, s);
  EXPECT_NEAR(out(0, 0), 1.0021951390411373, 1e-13);
}

TEST(DdpmStep, ExactEpsilonGivesPosteriorMean) {
  const auto s = default_schedule();
  const auto x0 = sample_mixture(single_gaussian(4, 0.3, 0.5), 8, 1);
  const auto eps = normal_batch(8, 4, 2, Purpose::diagnostics);
  for (int t : {1, 10, 500, 999}) {
    const auto xt = q_sample(x0, t, eps, s);
    const auto out = ddpm_step(xt, t, t - 1, eps, nullptr, s);
    const double ab = s.alpha_bar(t), ap = s.alpha_bar(t - 1);
    const double c0 = std::sqrt(ap) * s.beta(t) / (1 - ab);
    const double ct = std::sqrt(s.alpha(t)) * (1 - ap) / (1 - ab);
    for (std::size_t k = 0; k < out.size(); ++k)
      EXPECT_NEAR(out.values()[k], c0 * x0.values()[k] + ct * xt.values()[k], 1e-12);
  }
}

TEST(DdpmStep, PosteriorVarianceMatchesBetaTilde) {
  const auto s = default_schedule();
  const int t = 300, tp = 299;
  const std::size_t n = 10000;
  SampleBatch x(n, 1, 0.4), e(n, 1, -0.1);
  const auto z = normal_batch(n, 1, 5, Purpose::sampling);
  const auto out = ddpm_step(x, t, tp, e, &z, s);
  const double bt = (1 - s.alpha_bar(tp)) / (1 - s.alpha_bar(t)) * s.beta(t);
  EXPECT_NEAR(column_var(out, 0), bt, 0.05 * bt);
  EXPECT_LE(bt, s.beta(t));
  EXPECT_DOUBLE_EQ(ddpm_posterior(t, tp, s).beta_tilde, bt);
}

TEST(DdpmStep, NoiseAtFinalStepIsContractError) {
  const auto s = default_schedule(10);
  SampleBatch x(1, 2, 1.0), e(1, 2, 0.0), z(1, 2, 0.5);
  try {
    ddpm_step(x, 0, -1, e, &z, s);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.category(), ErrorCategory::contract);
  }
}

TEST(DdpmStep, OvershotShiftClampsVariance) {
  const auto s = default_schedule();
  const auto p = ddpm_posterior(100, 120, s);
  EXPECT_TRUE(p.clamped);
  EXPECT_EQ(p.sigma, 0.0);
}

TEST(DdimStep, HandEvaluation) {
  const auto s = two_step(0.6, 0.5);
  SampleBatch x(1, 1, 1.0), e(1, 1, 0.2);
  const double x0 = (1.0 - std::sqrt(0.5) * 0.2) / std::sqrt(0.5);
  EXPECT_NEAR(x0, 1.2142135623730950, 1e-15);
  EXPECT_NEAR(ddim_step(x, 1, 0, e, s)(0, 0), 1.0670168875687707, 1e-13);
}

TEST(DdimStep, IdentityStep) {
  const auto s = default_schedule();
  const auto x = normal_batch(2, 3, 1, Purpose::diagnostics);
  const auto e = normal_batch(2, 3, 2, Purpose::diagnostics);
  const auto out = ddim_step(x, 400, 400, e, s);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(out.values()[k], x.values()[k], 1e-14);
}

TEST(DdimStep, EtaNeedsNoise) {
  const auto s = default_schedule();
  SampleBatch x(1, 2), e(1, 2);
  EXPECT_THROW(ddim_step(x, 400, 300, e, s, 1.0), Error);
  EXPECT_NO_THROW(ddim_step(x, 400, 300, e, s, 0.0));
}

TEST(Multistep, ConstantHistoryIsFixed) {
  for (int order : {2, 4}) {
    std::vector<SampleBatch> h(4, SampleBatch(2, 2, 0.37));
    const auto combined = combine_history(h, order);
    for (double v : combined.values()) EXPECT_NEAR(v, 0.37, 1e-15);
  }
  EXPECT_THROW(combine_history({SampleBatch(1, 1)}, 2), Error);
}

TEST(RunSampler, DdimFullGridMatchesDataMoments) {
  const auto s = default_schedule();
  const auto mix = single_gaussian(2, 0.5, 0.25);
  AnalyticDenoiser model(mix, s);
  const auto r = run_sampler(config(Method::ddim, s, 1000, 4000, 3), model, s, 2);
  const double n = 4000;
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(column_mean(r.samples, j), 0.5, 3 * std::sqrt(0.25 / n));
    EXPECT_NEAR(column_var(r.samples, j), 0.25, 3 * 0.25 * std::sqrt(2 / n));
  }
}

TEST(RunSampler, DdpmFullGridMatchesDataMoments) {
  const auto s = default_schedule();
  const double m = -0.4, v = 0.3;
  AnalyticDenoiser model(single_gaussian(2, m, v), s);
  const auto r = run_sampler(config(Method::ddpm, s, 1000, 10000, 4), model, s, 2);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(column_mean(r.samples, j), m, 3 * std::sqrt(v / 10000));
    EXPECT_NEAR(column_var(r.samples, j), v, 0.05 * v);
  }
}

TEST(RunSampler, DeterministicPerSeed) {
  const auto s = default_schedule();
  AnalyticDenoiser model(level_mixture(3, {-1, 1}, 0.05), s);
  for (Method m : {Method::ddpm, Method::ddim, Method::s_pndm, Method::f_pndm}) {
    const auto a = run_sampler(config(m, s, 10, 5, 9), model, s, 3);
    const auto b = run_sampler(config(m, s, 10, 5, 9), model, s, 3);
    EXPECT_EQ(a.samples, b.samples) << to_string(m);
    EXPECT_EQ(a.trajectory.to_jsonl(), b.trajectory.to_jsonl());
  }
}

TEST(RunSampler, SinglePointGrid) {
  const auto s = default_schedule();
  AnalyticDenoiser model(single_gaussian(2, 0.0, 1.0), s);
  for (Method m : {Method::ddpm, Method::ddim, Method::s_pndm, Method::f_pndm}) {
    const auto r = run_sampler(config(m, s, 1, 3, 1), model, s, 2);
    EXPECT_TRUE(r.samples.all_finite());
    ASSERT_EQ(r.trajectory.steps.size(), 1u);
    EXPECT_EQ(r.trajectory.steps[0].t_used, 0);
    EXPECT_EQ(r.trajectory.steps[0].t_prev, -1);
  }
}

TEST(RunSampler, TrajectoryTimestepsDecrease) {
  const auto s = default_schedule();
  AnalyticDenoiser model(single_gaussian(2, 0.0, 1.0), s);
  const auto r = run_sampler(config(Method::f_pndm, s, 20, 2, 1), model, s, 2);
  ASSERT_EQ(r.trajectory.steps.size(), 20u);
  for (std::size_t i = 1; i < r.trajectory.steps.size(); ++i)
    EXPECT_LT(r.trajectory.steps[i].t_used, r.trajectory.steps[i - 1].t_used);
  EXPECT_EQ(r.trajectory.steps.back().t_used, 0);
}

TEST(RunSampler, DivergenceNamesTimestep) {
  const auto s = default_schedule();
  FunctionDenoiser blowup([](const SampleBatch& x, int, const EvalContext&) { return SampleBatch(x.rows(), x.dim(), 1e308); });
  try {
    run_sampler(config(Method::ddim, s, 10, 2, 1), blowup, s, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::divergence);
    EXPECT_NE(std::string(e.what()).find("t=900"), std::string::npos);
  }
}

TEST(RunSampler, PndmStaysInsideGridRange) {
  const auto s = default_schedule();
  AnalyticDenoiser inner(single_gaussian(2, 0.0, 1.0), s);
  for (Method m : {Method::s_pndm, Method::f_pndm}) {
    std::set<int> seen;
    FunctionDenoiser spy([&](const SampleBatch& x, int t, const EvalContext& c) {
      seen.insert(t);
      return inner.predict(x, t, c);
    });
    auto cfg = config(m, s, 10, 2, 1);
    cfg.grid = select_time_grid(s, 10, GridMode::quadratic);
    run_sampler(cfg, spy, s, 2);
    EXPECT_GE(*seen.begin(), 0);
    EXPECT_LE(*seen.rbegin(), cfg.grid.steps.back());
  }
}

TEST(RunSampler, AllMethodsReachPointMassData) {
  const auto s = default_schedule();
  const std::vector<double> mean{0.3, -0.7};
  AnalyticDenoiser model({{mean, {1e-8, 1e-8}, 1.0}}, s);
  for (Method m : {Method::ddpm, Method::ddim, Method::s_pndm, Method::f_pndm}) {
    const auto r = run_sampler(config(m, s, 1000, 20, 2), model, s, 2);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(r.samples(i, j), mean[j], 1e-3) << to_string(m);
  }
}

TEST(RunSampler, ParseMethod) {
  EXPECT_EQ(parse_method("f-pndm"), Method::f_pndm);
  EXPECT_THROW(parse_method("euler"), Error);
}

TEST(Trajectory, JsonlHasOneRecordPerStep) {
  const auto s = default_schedule();
  AnalyticDenoiser model(single_gaussian(4, 0.0, 1.0), s);
  const auto r = run_sampler(config(Method::ddim, s, 5, 2, 1), model, s, 4);
  const auto text = r.trajectory.to_jsonl();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_NE(text.find("\"intra_variance\""), std::string::npos);
}
