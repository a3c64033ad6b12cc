#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tsdiff/datasets.hpp"
#include "tsdiff/theory.hpp"

using namespace tsdiff;

TEST(OptimalShiftVariance, ZeroErrorIsIdentity) {
  const auto r = optimal_shift_variance({0.73, 0.0, 100, 800});
  EXPECT_EQ(r.value, 0.73);
  EXPECT_TRUE(r.in_regime);
}

TEST(OptimalShiftVariance, DirectEvaluation) {
  const auto r = optimal_shift_variance({0.9, 3.072, 3072, 800});
  EXPECT_NEAR(r.value, 0.9 - 0.001 / 3071.0, 1e-16);
  EXPECT_NEAR(r.value, 0.89999967, 1e-8);
}

TEST(OptimalShiftVariance, OutOfRegime) {
  const auto r = optimal_shift_variance({1.0, 4.0, 2, 10});
  EXPECT_EQ(r.value, -1.0);
  EXPECT_FALSE(r.in_regime);
  EXPECT_THROW(optimal_shift_variance({0.0, 1.0, 4, 1}), Error);
  EXPECT_THROW(optimal_shift_variance({1.0, 1.0, 1, 1}), Error);
}

TEST(KlObjective, MatchedMomentsValue) {
  const auto s = default_schedule();
  const std::size_t d = 7;
  const int ts = 600;
  const double ab = s.alpha_bar(ts);
  std::vector<double> x0(d), mu(d), sig(d, 1.0 - ab);
  for (std::size_t j = 0; j < d; ++j) {
    x0[j] = 0.1 * static_cast<double>(j) - 0.3;
    mu[j] = std::sqrt(ab) * x0[j];
  }
  const double expect = 0.5 * d * (std::log(1.0 - ab) + 1.0);
  EXPECT_NEAR(kl_objective(mu, sig, ts, x0, s, KlForm::standard), expect, 1e-12);
  EXPECT_NEAR(kl_objective(mu, sig, ts, x0, s, KlForm::as_written), expect, 1e-12);
}

TEST(KlObjective, ArgminRecoversTrueStepWithoutError) {
  const auto s = default_schedule();
  const std::size_t d = 64;
  const auto x0 = sample_mixture(single_gaussian(d, 0.4, 0.2), 1, 3);
  for (int true_s : {120, 555, 901}) {
    const double ab = s.alpha_bar(true_s);
    std::vector<double> mu(d), sig(d, 1.0 - ab);
    for (std::size_t j = 0; j < d; ++j) mu[j] = std::sqrt(ab) * x0(0, j);
    EXPECT_EQ(oracle_kl_timestep(mu, sig, x0.row(0), true_s, 60, s), true_s);
    // Dense scan over the whole ladder.
    EXPECT_EQ(argmin_window(0, s.T() - 1, true_s,
                            [&](int tau) { return kl_objective(mu, sig, tau, x0.row(0), s); }),
              true_s);
  }
}

TEST(KlObjective, ZeroDataRemovesMeanSign) {
  const auto s = default_schedule();
  std::vector<double> x0(5, 0.0), mu{0.3, -1.0, 2.0, 0.1, 0.0}, neg(5), sig(5, 0.4);
  for (std::size_t j = 0; j < 5; ++j) neg[j] = -mu[j];
  EXPECT_EQ(kl_objective(mu, sig, 300, x0, s), kl_objective(neg, sig, 300, x0, s));
}

TEST(KlObjective, AsWrittenAlwaysAgreesWithStandard) {
  const auto s = default_schedule();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Stream rng(seed, Purpose::diagnostics);
    const std::size_t d = 16;
    std::vector<double> x0(d), mu(d), sig(d);
    for (std::size_t j = 0; j < d; ++j) {
      x0[j] = rng.normal();
      mu[j] = rng.normal();
      sig[j] = 0.1 + rng.uniform();
    }
    const int c = 200 + static_cast<int>(rng.below(700));
    EXPECT_EQ(oracle_kl_timestep(mu, sig, x0, c, 20, s, KlForm::standard),
              oracle_kl_timestep(mu, sig, x0, c, 20, s, KlForm::as_written));
  }
}

TEST(KlObjective, DegenerateAlphaBarRejected) {
  const auto s = default_schedule();
  std::vector<double> v(3, 0.0);
  EXPECT_THROW(kl_objective(v, v, -1, v, s), Error);
}

TEST(Oracle, NoErrorNoShift) {
  const auto s = default_schedule();
  const std::size_t d = 256;
  const int t = 800, c = t - 1;
  const auto x0 = sample_mixture(single_gaussian(d, 0.0, 0.3), 4, 1);
  const auto eps = normal_batch(4, d, 2, Purpose::diagnostics);
  const auto x_hat = q_sample(x0, c, eps, s);
  EXPECT_EQ(oracle_distance_timestep(x_hat, x0, eps, c, 20, s), c);
  EXPECT_EQ(oracle_distance_timestep(x_hat, x0, eps, c, 0, s), c);
  std::vector<double> mu(d), sig(d, s.variance(c));
  for (std::size_t j = 0; j < d; ++j) mu[j] = std::sqrt(s.alpha_bar(c)) * x0(0, j);
  EXPECT_EQ(oracle_kl_timestep(mu, sig, x0.row(0), c, 20, s), c);
  EXPECT_EQ(oracle_kl_timestep(mu, sig, x0.row(0), c, 0, s), c);
}

TEST(Oracle, EstimatedVarianceRemovesErrorShare) {
  std::vector<double> x{1.0, -1.0, 1.0, -1.0};
  EXPECT_NEAR(estimated_state_variance(x, 0.6), 4.0 / 3.0 - 0.2, 1e-15);
}

TEST(InvertSqrtAlphaBar, NearestLadderStep) {
  const auto s = default_schedule();
  for (int t : {0, 1, 250, 777, 999}) EXPECT_EQ(invert_sqrt_alpha_bar(std::sqrt(s.alpha_bar(t)), s), t);
  EXPECT_EQ(invert_sqrt_alpha_bar(2.0, s), 0);
  EXPECT_EQ(invert_sqrt_alpha_bar(-1.0, s), 999);
}

TEST(WindowBounds, VanishingGamma) {
  const auto s = default_schedule();
  const auto b = window_bounds({701, 1e-12, 1.0, 10.0}, s);
  EXPECT_EQ(b.t_min, 700);
  EXPECT_EQ(b.t_max, 700);
  EXPECT_EQ(b.w_bound, 0);
}

TEST(WindowBounds, MonotoneInGammaAntiMonotoneInNorm) {
  const auto s = default_schedule();
  int prev = -1;
  for (double g = 0.01; g <= 0.5 + 1e-12; g += 0.01) {
    const auto b = window_bounds({800, g, 2.0, 30.0}, s);
    EXPECT_GE(b.w_bound, prev);
    EXPECT_EQ(b.w_bound % 2, 0);
    prev = b.w_bound;
  }
  prev = 1 << 30;
  for (double n0 = 5.0; n0 <= 200.0; n0 *= 1.5) {
    const auto b = window_bounds({800, 0.2, 2.0, n0}, s);
    EXPECT_LE(b.w_bound, prev);
    prev = b.w_bound;
  }
}

TEST(WindowBounds, EndpointsMatchLadder) {
  const auto s = default_schedule();
  for (double g : {0.02, 0.1, 0.3}) {
    const auto b = window_bounds({600, g, 3.0, 40.0}, s);
    EXPECT_LE(b.t_min, 599);
    EXPECT_GE(b.t_max, 599);
    // Inside the interval, and one more step would leave it.
    EXPECT_GE(std::sqrt(s.alpha_bar(b.t_max)), b.sqrt_lo);
    if (!b.clamped_high) EXPECT_LT(std::sqrt(s.alpha_bar(b.t_max + 1)), b.sqrt_lo);
    EXPECT_LE(std::sqrt(s.alpha_bar(b.t_min)), b.sqrt_hi);
    if (!b.clamped_low) EXPECT_GT(std::sqrt(s.alpha_bar(b.t_min - 1)), b.sqrt_hi);
    EXPECT_LE(std::abs(invert_sqrt_alpha_bar(b.sqrt_lo, s) - b.t_max), 1);
    EXPECT_LE(std::abs(invert_sqrt_alpha_bar(b.sqrt_hi, s) - b.t_min), 1);
  }
}

TEST(WindowBounds, ClampsWithFlags) {
  const auto s = default_schedule();
  const auto b = window_bounds({990, 0.9, 10.0, 1.0}, s);
  EXPECT_TRUE(b.clamped_high);
  EXPECT_TRUE(b.clamped_low);
  EXPECT_EQ(b.t_max, 999);
  EXPECT_EQ(b.t_min, 0);
  EXPECT_EQ(b.w_bound, 20);
  EXPECT_THROW(window_bounds({500, 1.0, 1.0, 1.0}, s), Error);
  EXPECT_THROW(window_bounds({0, 0.1, 1.0, 1.0}, s), Error);
}
