#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "tsdiff/datasets.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/mlp.hpp"
#include "tsdiff/schedule.hpp"

using namespace tsdiff;

namespace {

SampleBatch random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  return normal_batch(n, d, seed, Purpose::diagnostics);
}

}  // namespace

TEST(AnalyticEpsilon, UnitGaussianIsScaledInput) {
  const auto s = default_schedule();
  const auto mix = single_gaussian(5, 0.0, 1.0);
  const auto x = random_batch(3, 5, 1);
  for (int t : {0, 250, 999}) {
    const auto e = analytic_epsilon(mix, x, t, s);
    for (std::size_t k = 0; k < x.size(); ++k)
      EXPECT_NEAR(e.values()[k], std::sqrt(s.variance(t)) * x.values()[k], 1e-14);
  }
}

TEST(AnalyticEpsilon, ZeroInputZeroMean) {
  const auto s = default_schedule();
  const auto e = analytic_epsilon(single_gaussian(4, 0.0, 0.3), SampleBatch(2, 4), 500, s);
  for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

TEST(AnalyticEpsilon, NoiseFreeMeanGivesZeroEpsilon) {
  const auto s = default_schedule();
  const auto mix = single_gaussian(3, 0.7, 1e-12);
  SampleBatch x(1, 3, std::sqrt(s.alpha_bar(400)) * 0.7);
  const auto e = analytic_epsilon(mix, x, 400, s);
  for (double v : e.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(AnalyticEpsilon, FarModeDominatesPosterior) {
  const auto s = default_schedule();
  const std::size_t d = 4;
  const auto mix = level_mixture(d, {-5.0, 5.0}, 0.1);
  const int t = 200;
  SampleBatch x(1, d, std::sqrt(s.alpha_bar(t)) * 5.0);
  const auto r = mixture_responsibilities(mix, x.row(0), s.alpha_bar(t));
  EXPECT_GT(r[1], 0.99);
  const auto e_mix = analytic_epsilon(mix, x, t, s);
  const auto e_one = analytic_epsilon({{mix[1].mean, mix[1].variance, 1.0}}, x, t, s);
  for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(e_mix(0, j), e_one(0, j), 1e-6);
}

TEST(AnalyticEpsilon, PosteriorMeanConsistency) {
  const auto s = default_schedule();
  const auto mix = sign_mixture(6, 3, 0.2, 11);
  const auto x = random_batch(8, 6, 2);
  for (int t : {10, 300, 900}) {
    const auto e = analytic_epsilon(mix, x, t, s);
    const auto direct = posterior_mean(mix, x, t, s);
    const double ab = s.alpha_bar(t);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double x0 = (x.values()[k] - std::sqrt(1 - ab) * e.values()[k]) / std::sqrt(ab);
      EXPECT_NEAR(x0, direct.values()[k], 1e-10);
    }
  }
}

TEST(AnalyticEpsilon, RejectsCorruptMixture) {
  auto bad = single_gaussian(2, 0.0, 1.0);
  bad[0].variance[1] = 0.0;
  EXPECT_THROW(AnalyticDenoiser(bad, default_schedule()), Error);
  auto nan_w = level_mixture(2, {0.0, 1.0}, 1.0);
  nan_w[0].weight = std::nan("");
  try {
    validate_mixture(nan_w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::model);
  }
}

TEST(AnalyticEpsilon, ChainEndIsOutOfDomain) {
  try {
    analytic_epsilon(single_gaussian(2, 0, 1), SampleBatch(1, 2), -1, default_schedule());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::domain);
  }
}

TEST(PredictEpsilon, ValidatesTimestepAndShape) {
  const auto s = default_schedule(10);
  AnalyticDenoiser m(single_gaussian(2, 0, 1), s);
  EXPECT_THROW(predict_epsilon(m, SampleBatch(1, 2), 10, s), Error);
  FunctionDenoiser wrong([](const SampleBatch&, int, const EvalContext&) { return SampleBatch(1, 3); });
  EXPECT_THROW(predict_epsilon(wrong, SampleBatch(1, 2), 3, s), Error);
}

TEST(MlpDenoiser, Deterministic) {
  MlpDenoiser m(Mlp::initialized({3, 16, 2, 8}, 5));
  const auto x = random_batch(4, 3, 3);
  const auto a = m.predict(x, 17, {});
  const auto b = m.predict(x, 17, {});
  EXPECT_EQ(a, b);
  EXPECT_NE(a, m.predict(x, 18, {}));
}

TEST(TimeEmbedding, KnownValues) {
  std::vector<double> e(4);
  time_embedding(3, e);
  EXPECT_DOUBLE_EQ(e[0], std::sin(3.0));
  EXPECT_DOUBLE_EQ(e[1], std::sin(3.0 * 0.01));
  EXPECT_DOUBLE_EQ(e[2], std::cos(3.0));
  EXPECT_DOUBLE_EQ(e[3], std::cos(3.0 * 0.01));
}

class PerturbedTest : public ::testing::Test {
 protected:
  NoiseSchedule s = default_schedule();
  std::shared_ptr<const Denoiser> inner =
      std::make_shared<AnalyticDenoiser>(single_gaussian(1000, 0.2, 0.5), s);
};

TEST_F(PerturbedTest, ZeroPhiIsIdentity) {
  auto wrapped = perturb_epsilon(inner, constant_perturbation(s.T(), 0.0, 3), s);
  const auto x = random_batch(2, 1000, 4);
  EXPECT_EQ(wrapped->predict(x, 600, {500, Transfer::ddim}), inner->predict(x, 600, {}));
}

TEST_F(PerturbedTest, NegativePhiRejected) {
  EXPECT_THROW(perturb_epsilon(inner, constant_perturbation(s.T(), -0.1, 3), s), Error);
}

TEST_F(PerturbedTest, StateErrorHasRequestedStd) {
  // Through a DDIM transfer the epsilon offset maps to a state offset kappa * delta.
  const double phi = 0.1;
  auto wrapped = perturb_epsilon(inner, constant_perturbation(s.T(), phi, 9), s);
  const auto x = random_batch(1, 1000, 5);
  const int t = 600, tp = 500;
  const double kappa = transfer_sensitivity(Transfer::ddim, t, tp, 0.0, s);
  const auto base = inner->predict(x, t, {});
  double sq = 0.0, sum = 0.0;
  std::size_t n = 0;
  for (std::uint32_t call = 0; call < 100; ++call) {
    const auto e = wrapped->predict(x, t, {tp, Transfer::ddim, 0.0, 0, call});
    for (std::size_t j = 0; j < 1000; ++j) {
      const double delta = kappa * (e(0, j) - base(0, j));
      sum += delta;
      sq += delta * delta;
      ++n;
    }
  }
  const double mean = sum / n;
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), phi, 0.05 * phi);
  EXPECT_LT(std::abs(mean), 3 * phi / std::sqrt(static_cast<double>(n)));
}

TEST_F(PerturbedTest, SameSeedSameOutput) {
  auto a = perturb_epsilon(inner, constant_perturbation(s.T(), 0.05, 1), s);
  auto b = perturb_epsilon(inner, constant_perturbation(s.T(), 0.05, 1), s);
  const auto x = random_batch(3, 1000, 6);
  const EvalContext ctx{100, Transfer::ddpm, 0.0, 7, 2};
  EXPECT_EQ(a->predict(x, 200, ctx), b->predict(x, 200, ctx));
  // Row i of a batch sees the same draw as chain (offset + i) alone.
  const auto single = a->predict(x.slice(1, 1), 200, {100, Transfer::ddpm, 0.0, 8, 2});
  const auto full = a->predict(x, 200, ctx);
  for (std::size_t j = 0; j < 1000; ++j) EXPECT_EQ(single(0, j), full(1, j));
}

TEST(TransferSensitivity, MatchesFiniteDifferenceOfSteps) {
  const auto s = default_schedule();
  const int t = 700, tp = 600;
  const double ab = s.alpha_bar(t), ap = s.alpha_bar(tp);
  auto ddim = [&](double e) { return std::sqrt(ap) * (1.0 - std::sqrt(1 - ab) * e) / std::sqrt(ab) + std::sqrt(1 - ap) * e; };
  EXPECT_NEAR(transfer_sensitivity(Transfer::ddim, t, tp, 0.0, s), (ddim(1e-3) - ddim(-1e-3)) / 2e-3, 1e-9);
  const double a = ab / ap;
  auto ddpm = [&](double e) { return (1.0 - (1 - a) / std::sqrt(1 - ab) * e) / std::sqrt(a); };
  EXPECT_NEAR(transfer_sensitivity(Transfer::ddpm, t, tp, 0.0, s), (ddpm(1e-3) - ddpm(-1e-3)) / 2e-3, 1e-9);
}
