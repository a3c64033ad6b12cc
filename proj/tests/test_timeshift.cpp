#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <json.hpp>

#include "tsdiff/datasets.hpp"
#include "tsdiff/timeshift.hpp"

using namespace tsdiff;

namespace {

SamplerConfig config(Method m, const NoiseSchedule& s, int steps, std::size_t n, std::uint64_t seed) {
  SamplerConfig c;
  c.method = m;
  c.grid = select_time_grid(s, steps, GridMode::uniform);
  c.n = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(IntraSampleVariance, Examples) {
  EXPECT_DOUBLE_EQ(intra_sample_variance(std::vector<double>{1, 2, 3}), 1.0);
  EXPECT_EQ(intra_sample_variance(std::vector<double>(10, 4.2)), 0.0);
  EXPECT_THROW(intra_sample_variance(std::vector<double>{1.0}), Error);
}

TEST(IntraSampleVariance, WhiteNoiseConcentrates) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = normal_batch(1, 3072, seed, Purpose::diagnostics);
    const double v = intra_sample_variance(x.row(0));
    EXPECT_GE(v, 0.9);
    EXPECT_LE(v, 1.1);
  }
}

TEST(SelectShift, ExactMatchWins) {
  const auto s = default_schedule();
  EXPECT_EQ(select_shifted_timestep(s.variance(713), 700, 40, s), 713);
  EXPECT_EQ(select_shifted_timestep(s.variance(690), 700, 40, s), 690);
}

TEST(SelectShift, ZeroWindowReturnsCenter) {
  const auto s = default_schedule();
  for (double v : {0.0, 0.5, 2.0}) EXPECT_EQ(select_shifted_timestep(v, 321, 0, s), 321);
}

TEST(SelectShift, ClampsAtEdges) {
  const auto s = default_schedule();
  EXPECT_EQ(select_shifted_timestep(5.0, 995, 40, s), 999);
  EXPECT_EQ(select_shifted_timestep(-1.0, 3, 40, s), 0);
}

TEST(SelectShift, TiesPreferCenterThenSmaller) {
  // Constant-beta tail: identical variances are impossible on a strictly
  // monotone ladder, so build a variance exactly between two neighbours.
  const auto s = default_schedule();
  const double mid = 0.5 * (s.variance(500) + s.variance(501));
  const int got = select_shifted_timestep(mid, 500, 10, s);
  EXPECT_TRUE(got == 500 || got == 501);
  const double mid2 = 0.5 * (s.variance(505) + s.variance(506));
  EXPECT_EQ(select_shifted_timestep(mid2, 505, 10, s) <= 506, true);
}

TEST(SelectShift, RecoversForwardStateAtHighDimension) {
  // With d = 2^18 the estimator spread is about one ladder step near t = 300.
  const auto s = default_schedule();
  const std::size_t d = 1u << 18;
  int hits = 0;
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    const int true_s = 290 + static_cast<int>(trial % 21);
    const auto eps = normal_batch(1, d, trial, Purpose::diagnostics);
    const auto xt = q_sample(SampleBatch(1, d, 0.0), true_s, eps, s);
    const int got = select_shifted_timestep(intra_sample_variance(xt.row(0)), 300, 40, s);
    hits += std::abs(got - true_s) <= 2;
  }
  EXPECT_GE(hits, 32);
}

TEST(ShiftConfig, Validation) {
  const auto s = default_schedule();
  EXPECT_THROW((ShiftConfig{3, 100}).validate(s), Error);
  EXPECT_THROW((ShiftConfig{-2, 100}).validate(s), Error);
  EXPECT_THROW((ShiftConfig{4, 1001}).validate(s), Error);
  EXPECT_NO_THROW((ShiftConfig{4, 1000}).validate(s));
}

class Equivalence : public ::testing::TestWithParam<Method> {};

TEST_P(Equivalence, ZeroWindowAndHighCutoffMatchBaseline) {
  const auto s = default_schedule();
  AnalyticDenoiser inner(level_mixture(8, {-0.5, 0.5}, 0.05), s);
  const auto model = perturb_epsilon(std::make_shared<AnalyticDenoiser>(inner), constant_perturbation(s.T(), 0.05, 3), s);
  const auto cfg = config(GetParam(), s, 10, 6, 21);
  const auto base = run_sampler(cfg, *model, s, 8);
  for (ShiftConfig sh : {ShiftConfig{0, 300}, ShiftConfig{40, 1000}, ShiftConfig{0, 0, VarianceMode::per_chain}}) {
    const auto ts = run_time_shift_sampler(cfg, sh, *model, s, 8);
    EXPECT_EQ(ts.samples, base.samples);
  }
}

INSTANTIATE_TEST_SUITE_P(AllMethods, Equivalence,
                         ::testing::Values(Method::ddpm, Method::ddim, Method::s_pndm, Method::f_pndm),
                         [](const auto& info) {
                           std::string n = to_string(info.param);
                           std::erase(n, '-');
                           return n;
                         });

TEST(TimeShiftSampler, WindowAndCutoffRespected) {
  const auto s = default_schedule();
  AnalyticDenoiser inner(single_gaussian(64, 0.0, 0.1), s);
  const auto model = perturb_epsilon(std::make_shared<AnalyticDenoiser>(inner), constant_perturbation(s.T(), 0.1, 5), s);
  const auto r = run_time_shift_sampler(config(Method::ddim, s, 10, 16, 3), {40, 200}, *model, s, 64);
  int fired = 0;
  for (const auto& st : r.trajectory.steps) {
    if (!st.shift) continue;
    const auto& e = *st.shift;
    if (e.t <= 200) {
      EXPECT_FALSE(e.t_s.has_value());
      EXPECT_EQ(e.t_next, st.t_prev);
    } else {
      ASSERT_TRUE(e.t_s.has_value());
      ++fired;
      EXPECT_GE(*e.t_s, st.t_prev - 20);
      EXPECT_LE(*e.t_s, st.t_prev + 20);
    }
  }
  EXPECT_EQ(fired, 7);  // nominal t = 900 .. 300
}

TEST(TimeShiftSampler, LoggedSelectionsAreArgmins) {
  const auto s = default_schedule();
  AnalyticDenoiser inner(single_gaussian(32, 0.2, 0.3), s);
  const auto model = perturb_epsilon(std::make_shared<AnalyticDenoiser>(inner), constant_perturbation(s.T(), 0.2, 5), s);
  const auto r = run_time_shift_sampler(config(Method::ddpm, s, 20, 8, 4), {30, 250}, *model, s, 32);
  // Replay from the log text.
  std::istringstream in(r.trajectory.to_jsonl());
  std::string line;
  int checked = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("shift") || j["shift"]["t_s"].is_null()) continue;
    const double var = j["shift"]["var"];
    const int ts = j["shift"]["t_s"];
    for (int tau = j["shift"]["window"][0]; tau <= j["shift"]["window"][1].get<int>(); ++tau)
      EXPECT_LE(std::abs(var - s.variance(ts)), std::abs(var - s.variance(tau)));
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(TimeShiftSampler, PerChainModeRunsEachChainAlone) {
  const auto s = default_schedule();
  AnalyticDenoiser model(single_gaussian(16, 0.0, 0.2), s);
  const auto cfg = config(Method::ddim, s, 10, 4, 8);
  const auto all = run_time_shift_sampler(cfg, {40, 100, VarianceMode::per_chain}, model, s, 16);
  auto one = cfg;
  one.n = 1;
  // Chain 0 alone in batch mode equals chain 0 of the per-chain run.
  const auto single = run_time_shift_sampler(one, {40, 100}, model, s, 16);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(all.samples(0, j), single.samples(0, j));
  EXPECT_EQ(all.trajectory.steps.back().chain, 3);
}

TEST(TimeShiftSampler, WideWindowWarnsAboutNonMonotoneChain) {
  const auto s = default_schedule();
  // Over-predicting the noise leaves states too clean, so the selection
  // jumps below the next grid point.
  AnalyticDenoiser inner(single_gaussian(16, 0.0, 0.2), s);
  FunctionDenoiser model([&](const SampleBatch& x, int t, const EvalContext& c) {
    auto e = inner.predict(x, t, c);
    for (double& v : e.values()) v *= 1.5;
    return e;
  });
  const auto r = run_time_shift_sampler(config(Method::ddim, s, 100, 4, 2), {40, 0}, model, s, 16);
  EXPECT_FALSE(r.trajectory.warnings.empty());
}

TEST(ShiftPresets, KnownStepCounts) {
  EXPECT_EQ(preset_shift(10).window, 40);
  EXPECT_EQ(preset_shift(20).window, 30);
  EXPECT_EQ(preset_shift(50).window, 8);
  EXPECT_EQ(preset_shift(100).window, 2);
}
