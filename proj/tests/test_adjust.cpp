#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <lowfpr/adjust.hpp>
#include <lowfpr/synth.hpp>

using namespace lowfpr;

namespace {

ScoredSamples columns(std::vector<double> yhat, std::vector<std::uint8_t> labels,
                      std::vector<double> epis = {}, std::vector<double> alea = {}) {
  ScoredSamples s;
  s.member_count = 5;
  s.epistemic = epis.empty() ? std::vector<double>(yhat.size(), 0.0) : std::move(epis);
  s.aleatoric = alea.empty() ? std::vector<double>(yhat.size(), 0.0) : std::move(alea);
  s.yhat = std::move(yhat);
  s.labels = std::move(labels);
  return s;
}

// Label-independent uncertainties on overlapping score distributions.
ScoredSamples noisy_columns(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 0.7);
  ScoredSamples s;
  s.member_count = 5;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 4 == 0;
    s.labels.push_back(pos);
    s.yhat.push_back(1.0 / (1.0 + std::exp(-(z(rng) + (pos ? 2.0 : -1.0)))));
    s.epistemic.push_back(u(rng));
    s.aleatoric.push_back(u(rng));
  }
  return s;
}

SynthConfig heteroscedastic(std::uint64_t seed) {
  SynthConfig c;
  c.n_benign = 40000;
  c.n_malicious = 8000;
  c.benign_logit_mean = -3.0;
  c.malicious_logit_mean = 2.0;
  c.logit_sd = 1.0;
  c.member_noise_sd_base = 0.3;
  c.member_noise_sd_novel = 1.5;
  c.ambiguous_fraction = 0.05;
  c.ambiguous_logit_mean = 0.0;
  c.train_fraction = 0.0;
  c.validation_fraction = 0.5;
  c.test_fraction = 0.5;
  c.seed = seed;
  return c;
}

std::vector<std::size_t> ranking(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] > v[b]; });
  return idx;
}

}  // namespace

TEST(ApplyAdjustment, Lv1) {
  EXPECT_EQ(apply_adjustment(0.42, 0.3, 0.2, {Variant::lv1, {0.0, 0.0}}), 0.42);
  EXPECT_NEAR(apply_adjustment(0.6, 0.2, 0.1, {Variant::lv1, {-1.0, 0.5}}), 0.45, 1e-15);
  EXPECT_EQ(apply_adjustment(0.42, 0.3, 0.2, {Variant::global_only, {}}), 0.42);
}

TEST(ApplyAdjustment, Lv2) {
  EXPECT_NEAR(apply_adjustment(0.5, 0.3, 0.2, {Variant::lv2, {0.1, 0.0, 0.0, 0.0}}), 0.6, 1e-15);
  EXPECT_NEAR(apply_adjustment(0.5, 0.2, 0.1, {Variant::lv2, {0.1, -0.2, 2.0, -1.0}}),
              0.5 + 0.1 * std::exp(0.4) - 0.2 * std::exp(-0.1), 1e-15);
}

TEST(ApplyAdjustment, Lv3BranchesOnStrictComparison) {
  const AdjustmentParams p{Variant::lv3, {0.1, 0.5, 0.0, 1.0, 1.0}};
  EXPECT_NEAR(apply_adjustment(0.5, 0.2, 0.1, p), 0.6, 1e-15);   // upper branch
  EXPECT_NEAR(apply_adjustment(0.1, 0.2, 0.1, p), 0.4, 1e-15);   // yhat == a0: lower
  EXPECT_NEAR(apply_adjustment(0.05, 0.2, 0.1, p), 0.35, 1e-15);
  const AdjustmentParams negative_a0{Variant::lv3, {-0.05, 0.5, 0.0, 1.0, 1.0}};
  EXPECT_NEAR(apply_adjustment(0.0, 0.2, 0.1, negative_a0), 0.1, 1e-15);
}

TEST(ApplyAdjustment, ArityMismatch) {
  EXPECT_THROW(apply_adjustment(0.5, 0.1, 0.1, {Variant::lv1, {1.0}}), std::invalid_argument);
  EXPECT_THROW(apply_adjustment(0.5, 0.1, 0.1, {Variant::lv3, {0, 0, 0, 0}}), std::invalid_argument);
  EXPECT_THROW((AdjustmentParams{Variant::lv2, {11.0, 0, 0, 0}}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((AdjustmentParams{Variant::lv3, {-0.1, 1.0, 0, 0, 0.5}}.validate()));
}

TEST(ApplyAdjustment, Lv2WithZeroRatesIsAConstantShift) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0), a(-10.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a1 = a(rng), a2 = a(rng);
    std::vector<double> base, lv2;
    for (int i = 0; i < 200; ++i) {
      const double y = u(rng), e = u(rng) * 0.3, l = u(rng) * 0.6;
      base.push_back(y);
      lv2.push_back(apply_adjustment(y, e, l, {Variant::lv2, {a1, a2, 0.0, 0.0}}));
      EXPECT_NEAR(lv2.back(), y + a1 + a2, 1e-14);
    }
    // Orderings agree except where rounding of the shift merges near-ties.
    const auto r0 = ranking(base), r2 = ranking(lv2);
    for (std::size_t i = 0; i < r0.size(); ++i) {
      if (r0[i] != r2[i]) {
        EXPECT_NEAR(base[r0[i]], base[r2[i]], 1e-14);
      }
    }
  }
}

// First-order expansion: lv2 with small rates moves scores like lv1 with
// coefficients (a1*a3, a2*a4) on top of the constant a1 + a2.
TEST(ApplyAdjustment, Lv2SmallRatesLinearizeToLv1) {
  const double a1 = 0.4, a2 = -0.3, a3 = 1e-4, a4 = 2e-4;
  for (double e : {0.0, 0.1, 0.4}) {
    for (double l : {0.0, 0.2, 0.6}) {
      const double lv2 = apply_adjustment(0.5, e, l, {Variant::lv2, {a1, a2, a3, a4}});
      const double lv1 = apply_adjustment(0.5, e, l, {Variant::lv1, {a1 * a3, a2 * a4}});
      EXPECT_NEAR(lv2 - (a1 + a2), lv1, 1e-7);
    }
  }
}

TEST(FitGlobal, SeparableData) {
  const auto val = columns({0.1, 0.2, 0.3, 0.7, 0.8, 0.9}, {0, 0, 0, 1, 1, 1});
  const auto r = fit_global(val, 0.01);
  EXPECT_FALSE(r.achieved_val.is_sentinel());
  EXPECT_EQ(r.achieved_val.tpr, 1.0);
  EXPECT_EQ(r.params.variant, Variant::global_only);
  EXPECT_TRUE(r.params.alpha.empty());
}

TEST(FitGlobal, UnreachableTargetGivesSentinel) {
  const auto val = columns({0.95, 0.2, 0.5, 0.6}, {0, 0, 1, 1});
  const auto r = fit_global(val, 1e-4);
  EXPECT_TRUE(std::isinf(r.global_threshold));
  EXPECT_EQ(r.achieved_val.tpr, 0.0);
}

TEST(FitGlobal, MultiplierScalesTarget) {
  const auto val = noisy_columns(1, 20000);
  FitOptions opt;
  opt.multiplier = 0.9;
  const auto r = fit_global(val, 0.001, opt);
  EXPECT_EQ(r.achieved_val, select_threshold(val.yhat, val.labels, 0.001 * 0.9));
  EXPECT_EQ(r.target_fpr, 0.001);
  EXPECT_EQ(r.fit_fpr_multiplier, 0.9);
}

TEST(FitGlobal, SingleClassRejected) {
  EXPECT_THROW(fit_global(columns({0.1, 0.2}, {0, 0}), 0.1), numeric_error);
}

TEST(FitLocal, ZeroSweepsIsGlobalFit) {
  const auto val = noisy_columns(2, 20000);
  FitOptions opt;
  opt.max_sweeps = 0;
  const auto g = fit_global(val, 0.01, opt);
  for (auto v : {Variant::lv1, Variant::lv2, Variant::lv3}) {
    const auto r = fit_local(val, 0.01, v, opt);
    EXPECT_EQ(r.global_threshold, g.global_threshold);
    EXPECT_EQ(r.achieved_val, g.achieved_val);
    EXPECT_EQ(r.sweeps_used, 0);
    EXPECT_EQ(r.params, initial_params(v));
  }
  EXPECT_EQ(initial_params(Variant::lv1).alpha, (std::vector<double>{0.0, 0.0}));
}

TEST(FitLocal, NeverWorseOnFittingSetWithNoiseUncertainty) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto val = noisy_columns(10 + seed, 20000);
    FitOptions opt;
    opt.seed = seed;
    const auto g = fit_global(val, 0.01, opt);
    for (auto v : {Variant::lv1, Variant::lv2, Variant::lv3}) {
      const auto r = fit_local(val, 0.01, v, opt);
      EXPECT_GE(r.achieved_val.tpr, g.achieved_val.tpr);
      EXPECT_LE(r.achieved_val.fpr, 0.9 * 0.01);
      r.params.validate();
    }
  }
}

TEST(FitLocal, BestTprNondecreasingInSweeps) {
  const auto ds = generate(heteroscedastic(4));
  const auto val = ScoredSamples::from(filter_split(ds, Split::validation));
  for (auto v : {Variant::lv1, Variant::lv2, Variant::lv3}) {
    double last = 0.0;
    for (int sweeps = 0; sweeps <= 3; ++sweeps) {
      FitOptions opt;
      opt.max_sweeps = sweeps;
      const auto r = fit_local(val, 1e-3, v, opt);
      EXPECT_GE(r.achieved_val.tpr, last) << to_string(v) << " sweeps=" << sweeps;
      last = r.achieved_val.tpr;
    }
  }
}

TEST(FitLocal, UncertaintyMarkedErrorsGiveNegativeEpistemicWeight) {
  int improved = 0, negative = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = generate(heteroscedastic(100 + seed));
    const auto val = ScoredSamples::from(filter_split(ds, Split::validation));
    FitOptions opt;
    opt.seed = seed;
    const auto g = fit_global(val, 1e-3, opt);
    const auto r = fit_local(val, 1e-3, Variant::lv1, opt);
    improved += r.achieved_val.tpr > g.achieved_val.tpr;
    negative += r.params.alpha[0] < 0.0;
  }
  EXPECT_GT(improved, 10);
  EXPECT_GT(negative, 10);
}

TEST(FitLocal, ThreadCountDoesNotChangeResult) {
  const auto ds = generate(heteroscedastic(7));
  const auto val = ScoredSamples::from(filter_split(ds, Split::validation));
  FitOptions one, four;
  four.threads = 4;
  for (auto v : {Variant::lv1, Variant::lv2, Variant::lv3}) {
    EXPECT_EQ(fit_local(val, 1e-3, v, one), fit_local(val, 1e-3, v, four));
  }
}

TEST(EvaluateCalibration, SeparableAndSentinel) {
  const auto data = columns({0.1, 0.2, 0.3, 0.7, 0.8, 0.9}, {0, 0, 0, 1, 1, 1});
  const auto g = fit_global(data, 0.01);
  const auto e = evaluate_calibration(data, g, 0.01);
  EXPECT_EQ(e.tpr, 1.0);
  EXPECT_EQ(e.actualized_fpr, 0.0);
  EXPECT_EQ(e.combined, 1.0);

  CalibrationResult sentinel = g;
  sentinel.global_threshold = kNoThreshold;
  const auto s = evaluate_calibration(data, sentinel, 0.01);
  EXPECT_EQ(s.tpr, 0.0);
  EXPECT_EQ(s.actualized_fpr, 0.0);
  EXPECT_EQ(s.combined, 0.0);
}

TEST(EvaluateCalibration, IdentityLocalMatchesGlobal) {
  const auto val = noisy_columns(20, 10000);
  const auto test = noisy_columns(21, 10000);
  const auto g = fit_global(val, 0.01);
  CalibrationResult identity = g;
  identity.params = AdjustmentParams::zeros(Variant::lv1);
  const auto a = evaluate_calibration(test, g, 0.01);
  const auto b = evaluate_calibration(test, identity, 0.01);
  const auto direct = evaluate_at_threshold(test.yhat, test.labels, g.global_threshold);
  EXPECT_EQ(a.tpr, b.tpr);
  EXPECT_EQ(a.actualized_fpr, b.actualized_fpr);
  EXPECT_EQ(a.tpr, direct.tpr);
  EXPECT_EQ(a.actualized_fpr, direct.fpr);
  EXPECT_EQ(a.combined, combined_metric(direct.tpr, direct.fpr, 0.01));
}

TEST(EvaluateCalibration, MemberCountMismatch) {
  auto test = noisy_columns(22, 100);
  const auto g = fit_global(test, 0.1);
  test.member_count = 3;
  EXPECT_THROW(evaluate_calibration(test, g, 0.1), data_error);
}

TEST(CalibrationJson, RoundTripsIncludingSentinel) {
  CalibrationResult r;
  r.params = {Variant::lv3, {-0.0312, 0.25, 1.0 / 3.0, 0.0, 0.999}};
  r.global_threshold = 0.123456789012345678;
  r.target_fpr = 1e-4;
  r.fit_fpr_multiplier = 0.9;
  r.achieved_val = {r.global_threshold, 0.87, 9e-5};
  r.sweeps_used = 3;
  r.seed = 17;
  r.member_count = 5;
  EXPECT_EQ(calibration_from_json(nlohmann::json::parse(to_json(r).dump())), r);

  r.global_threshold = kNoThreshold;
  r.achieved_val = {kNoThreshold, 0.0, 0.0};
  const auto j = to_json(r);
  EXPECT_EQ(j["threshold"], "inf");
  EXPECT_EQ(calibration_from_json(nlohmann::json::parse(j.dump())), r);
}

TEST(CalibrationJson, RejectsBadDocuments) {
  auto j = to_json(CalibrationResult{});
  j["variant"] = "g+lv9";
  EXPECT_THROW(calibration_from_json(j), data_error);
  j = to_json(CalibrationResult{});
  j["alpha"] = {1.0};
  EXPECT_THROW(calibration_from_json(j), data_error);
  j = to_json(CalibrationResult{});
  j.erase("threshold");
  EXPECT_THROW(calibration_from_json(j), data_error);
}
