#pragma once

// Seeded synthetic ensemble predictions.
//
// Each sample draws a latent logit from its class (or novel-cluster)
// distribution; member m then reports logistic(latent + e_m) with
// e_m ~ N(0, sd) where sd is member_noise_sd_base for ordinary samples and
// member_noise_sd_novel for novel-family and ambiguous samples. Ambiguous
// samples of either class share one latent cluster, so their ensemble mean
// carries no class signal while their members disagree. Novel
// samples are malicious, carry their own family tags and land in the test
// split only.
//
// Randomness comes from Philox4x32-10 keyed by the config seed with one
// counter stream per sample, so output is identical for any worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowfpr/data_model.hpp"
#include "lowfpr/error.hpp"
#include "lowfpr/parallel.hpp"
#include "lowfpr/random.hpp"

namespace lowfpr {

struct SynthConfig {
  std::size_t n_benign = 100000;
  std::size_t n_malicious = 100000;
  std::size_t member_count = 5;
  double novel_fraction = 0.0;
  double benign_logit_mean = -2.5;
  double malicious_logit_mean = 2.5;
  double novel_logit_mean = 0.5;
  double logit_sd = 1.5;
  double member_noise_sd_base = 0.5;
  double member_noise_sd_novel = 0.5;
  // Share of non-novel samples (either class) drawn from a class-agnostic
  // "ambiguous" cluster centred on ambiguous_logit_mean, with the novel
  // noise level.
  double ambiguous_fraction = 0.0;
  double ambiguous_logit_mean = 0.0;
  std::size_t seen_family_count = 8;
  std::size_t novel_family_count = 2;
  std::uint64_t seed = 0;
  double train_fraction = 0.0;
  double validation_fraction = 0.5;
  double test_fraction = 0.5;

  void validate() const {
    auto fail = [](const std::string& what) { throw data_error("synth config: " + what); };
    if (n_benign == 0 && n_malicious == 0) fail("no samples requested");
    if (member_count == 0) fail("member_count must be >= 1");
    if (!(novel_fraction >= 0.0 && novel_fraction <= 1.0)) fail("novel_fraction outside [0,1]");
    if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0)) {
      fail("ambiguous_fraction outside [0,1]");
    }
    if (!(logit_sd > 0.0)) fail("logit_sd must be positive");
    if (!(member_noise_sd_base >= 0.0)) fail("member_noise_sd_base must be >= 0");
    if (!(member_noise_sd_novel >= member_noise_sd_base)) {
      fail("member_noise_sd_novel must be >= member_noise_sd_base");
    }
    for (double v : {benign_logit_mean, malicious_logit_mean, novel_logit_mean,
                     ambiguous_logit_mean}) {
      if (!std::isfinite(v)) fail("logit means must be finite");
    }
    for (double f : {train_fraction, validation_fraction, test_fraction}) {
      if (!(f >= 0.0 && f <= 1.0)) fail("split fractions must lie in [0,1]");
    }
    if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
      fail("split fractions must sum to 1");
    }
    if (n_malicious > 0 && seen_family_count == 0) fail("seen_family_count must be >= 1");
    if (novel_fraction > 0.0 && novel_family_count == 0) fail("novel_family_count must be >= 1");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_benign", c.n_benign},
          {"n_malicious", c.n_malicious},
          {"member_count", c.member_count},
          {"novel_fraction", c.novel_fraction},
          {"benign_logit_mean", c.benign_logit_mean},
          {"malicious_logit_mean", c.malicious_logit_mean},
          {"novel_logit_mean", c.novel_logit_mean},
          {"logit_sd", c.logit_sd},
          {"member_noise_sd_base", c.member_noise_sd_base},
          {"member_noise_sd_novel", c.member_noise_sd_novel},
          {"ambiguous_fraction", c.ambiguous_fraction},
          {"ambiguous_logit_mean", c.ambiguous_logit_mean},
          {"seen_family_count", c.seen_family_count},
          {"novel_family_count", c.novel_family_count},
          {"seed", c.seed},
          {"split_fractions", {c.train_fraction, c.validation_fraction, c.test_fraction}}};
}

// Missing keys keep their defaults.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end()) it->get_to(field);
    };
    get("n_benign", c.n_benign);
    get("n_malicious", c.n_malicious);
    get("member_count", c.member_count);
    get("novel_fraction", c.novel_fraction);
    get("benign_logit_mean", c.benign_logit_mean);
    get("malicious_logit_mean", c.malicious_logit_mean);
    get("novel_logit_mean", c.novel_logit_mean);
    get("logit_sd", c.logit_sd);
    get("member_noise_sd_base", c.member_noise_sd_base);
    get("member_noise_sd_novel", c.member_noise_sd_novel);
    get("ambiguous_fraction", c.ambiguous_fraction);
    get("ambiguous_logit_mean", c.ambiguous_logit_mean);
    get("seen_family_count", c.seen_family_count);
    get("novel_family_count", c.novel_family_count);
    get("seed", c.seed);
    if (auto it = j.find("split_fractions"); it != j.end()) {
      const auto f = it->get<std::vector<double>>();
      if (f.size() != 3) throw data_error("synth config: split_fractions needs 3 entries");
      c.train_fraction = f[0];
      c.validation_fraction = f[1];
      c.test_fraction = f[2];
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace detail {

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct DrawnSample {
  bool malicious = false;
  bool novel = false;
  double latent = 0.0;
  Split split = Split::test;
  std::size_t family = 0;
  std::vector<double> scores;
};

// Draw order per sample is fixed: cluster, ambiguity, latent, split, family,
// then one normal per member.
inline DrawnSample draw_sample(const SynthConfig& c, RandomStream& rng, bool malicious) {
  DrawnSample s;
  s.malicious = malicious;
  s.novel = malicious && rng.uniform() < c.novel_fraction;
  const bool ambiguous = !s.novel && rng.uniform() < c.ambiguous_fraction;
  const double mean = s.novel      ? c.novel_logit_mean
                      : ambiguous  ? c.ambiguous_logit_mean
                      : malicious  ? c.malicious_logit_mean
                                   : c.benign_logit_mean;
  s.latent = mean + c.logit_sd * rng.normal();
  const double u = rng.uniform();
  if (s.novel) {
    s.split = Split::test;
  } else if (u < c.train_fraction) {
    s.split = Split::train;
  } else if (u < c.train_fraction + c.validation_fraction) {
    s.split = Split::validation;
  } else {
    s.split = Split::test;
  }
  if (malicious) {
    const std::size_t families = s.novel ? c.novel_family_count : c.seen_family_count;
    s.family = static_cast<std::size_t>(rng.below(families));
  }
  const double sd = (s.novel || ambiguous) ? c.member_noise_sd_novel : c.member_noise_sd_base;
  s.scores.resize(c.member_count);
  for (auto& score : s.scores) {
    const double noise = sd > 0.0 ? sd * rng.normal() : 0.0;
    score = logistic(s.latent + noise);
  }
  return s;
}

}  // namespace detail

inline PredictionDataset generate(const SynthConfig& config, int threads = 1) {
  config.validate();
  const std::size_t n = config.n_benign + config.n_malicious;
  PredictionDataset ds;
  ds.member_count = config.member_count;
  ds.provenance = "synth seed=" + std::to_string(config.seed);
  ds.records.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    RandomStream rng(config.seed, /*stream=*/1u, i);
    const bool malicious = i >= config.n_benign;
    auto s = detail::draw_sample(config, rng, malicious);
    auto& r = ds.records[i];
    r.sample_id = "syn-" + std::to_string(i);
    r.label = malicious ? Label::malicious : Label::benign;
    r.split = s.split;
    if (malicious) {
      r.family = (s.novel ? "novel-" : "fam-") + std::to_string(s.family);
    }
    r.member_scores = std::move(s.scores);
  });
  return ds;
}

struct OracleMetrics {
  double auc = 0.0;
  std::vector<double> fprs;
  std::vector<double> tprs;  // best TPR with FPR <= fprs[i], by direct counting
};

// Reference metrics from a large regeneration on an independent random
// stream. Counting is done here directly on sorted score arrays and shares
// nothing with the ROC module.
inline OracleMetrics oracle_metrics(const SynthConfig& config, std::size_t n_oracle,
                                    const std::vector<double>& fprs = {}, int threads = 1) {
  config.validate();
  const double total = static_cast<double>(config.n_benign + config.n_malicious);
  const auto n_neg = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_oracle) * static_cast<double>(config.n_benign) / total));
  const std::size_t n_pos = n_oracle - n_neg;
  if (n_neg == 0 || n_pos == 0) throw data_error("oracle_metrics: both classes required");

  const std::uint64_t key = derive_seed(config.seed, 0x0A7C1Eull);
  std::vector<double> neg(n_neg), pos(n_pos);
  parallel_for(n_oracle, threads, [&](std::size_t i) {
    RandomStream rng(key, /*stream=*/2u, i);
    const bool malicious = i >= n_neg;
    const auto s = detail::draw_sample(config, rng, malicious);
    const double mean =
        std::accumulate(s.scores.begin(), s.scores.end(), 0.0) / static_cast<double>(s.scores.size());
    (malicious ? pos[i - n_neg] : neg[i]) = mean;
  });
  std::sort(neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());

  // Mann-Whitney count: for each positive, negatives strictly below plus half the ties.
  OracleMetrics m;
  long double concordant = 0.0L;
  std::size_t lo = 0, hi = 0;
  for (double p : pos) {
    while (lo < n_neg && neg[lo] < p) ++lo;
    if (hi < lo) hi = lo;
    while (hi < n_neg && neg[hi] <= p) ++hi;
    concordant += static_cast<long double>(lo) + 0.5L * static_cast<long double>(hi - lo);
  }
  m.auc = static_cast<double>(concordant / (static_cast<long double>(n_pos) * n_neg));

  for (double f : fprs) {
    // Allow k false positives; any threshold above the (k+1)-th largest negative.
    auto k = static_cast<std::size_t>(std::floor(f * static_cast<double>(n_neg) + 1e-9));
    double tpr = 1.0;
    if (k < n_neg) {
      const double cut = neg[n_neg - 1 - k];
      const auto above = static_cast<std::size_t>(pos.end() - std::upper_bound(pos.begin(), pos.end(), cut));
      tpr = static_cast<double>(above) / static_cast<double>(n_pos);
    }
    m.fprs.push_back(f);
    m.tprs.push_back(tpr);
  }
  return m;
}

}  // namespace lowfpr
