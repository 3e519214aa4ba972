#pragma once

// Ensemble-versus-member comparison, uncertainty group splits, the Wilcoxon
// signed-rank test and histogramming of uncertainty values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowfpr/data_model.hpp"
#include "lowfpr/roc.hpp"
#include "lowfpr/uncertainty.hpp"

namespace lowfpr {

struct ComparisonRow {
  std::string model_name;
  double accuracy = 0.0;
  double auc = 0.0;
  double partial_auc = 0.0;
  bool is_ensemble = false;

  bool operator==(const ComparisonRow&) const = default;
};

struct EnsembleComparison {
  ComparisonRow ensemble;
  ComparisonRow members;  // metric-wise mean over individual members
};

inline EnsembleComparison ensemble_vs_members(const PredictionDataset& ds, double fpr_max,
                                              double accuracy_threshold = 0.5) {
  if (ds.member_count < 2) {
    throw std::invalid_argument("ensemble_vs_members: needs at least two members");
  }
  const auto labels = labels_of(ds);
  auto row = [&](std::span<const double> scores, std::string name, bool ens) {
    const auto curve = roc_curve(scores, labels);
    return ComparisonRow{std::move(name), accuracy(scores, labels, accuracy_threshold),
                         auc(curve), partial_auc(curve, fpr_max), ens};
  };

  std::vector<double> scores(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    scores[i] = ensemble_mean(ds.records[i].member_scores);
  }
  EnsembleComparison out;
  out.ensemble = row(scores, "ensemble", true);
  out.members = {"member_mean", 0.0, 0.0, 0.0, false};
  for (std::size_t m = 0; m < ds.member_count; ++m) {
    for (std::size_t i = 0; i < ds.size(); ++i) scores[i] = ds.records[i].member_scores[m];
    const auto r = row(scores, "member", false);
    out.members.accuracy += r.accuracy;
    out.members.auc += r.auc;
    out.members.partial_auc += r.partial_auc;
  }
  const auto t = static_cast<double>(ds.member_count);
  out.members.accuracy /= t;
  out.members.auc /= t;
  out.members.partial_auc /= t;
  return out;
}

enum class Measure { epistemic, aleatoric, predictive };

inline std::optional<Measure> parse_measure(std::string_view s) {
  if (s == "epistemic") return Measure::epistemic;
  if (s == "aleatoric") return Measure::aleatoric;
  if (s == "predictive") return Measure::predictive;
  return std::nullopt;
}

inline double pick(const UncertaintyTriple& u, Measure m) {
  switch (m) {
    case Measure::epistemic: return u.epistemic;
    case Measure::aleatoric: return u.aleatoric;
    case Measure::predictive: return u.predictive_entropy;
  }
  return 0.0;
}

struct GroupedValues {
  std::string first_name, second_name;
  std::vector<std::string> first_ids, second_ids;
  std::vector<double> first, second;
  // Set when either group is empty; downstream statistics are then undefined.
  bool empty_group = false;
};

inline GroupedValues uncertainty_by_correctness(const PredictionDataset& ds, double threshold,
                                                Measure measure, int threads = 1) {
  const auto rows = compute_uncertainties(ds, threads);
  GroupedValues g{"correct", "incorrect", {}, {}, {}, {}, false};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool right = (rows[i].yhat >= threshold) == ds.records[i].malicious();
    (right ? g.first_ids : g.second_ids).push_back(ds.records[i].sample_id);
    (right ? g.first : g.second).push_back(pick(rows[i].u, measure));
  }
  g.empty_group = g.first.empty() || g.second.empty();
  return g;
}

inline GroupedValues uncertainty_by_novelty(const PredictionDataset& ds,
                                            const std::set<std::string>& known_families,
                                            Measure measure, int threads = 1) {
  PredictionDataset tagged;
  tagged.member_count = ds.member_count;
  for (const auto& r : ds.records) {
    if (r.malicious() && r.family) tagged.records.push_back(r);
  }
  if (tagged.empty()) {
    throw std::invalid_argument("uncertainty_by_novelty: no family-tagged malicious samples");
  }
  const auto rows = compute_uncertainties(tagged, threads);
  GroupedValues g{"seen", "unseen", {}, {}, {}, {}, false};
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    const bool seen = known_families.count(*tagged.records[i].family) > 0;
    (seen ? g.first_ids : g.second_ids).push_back(tagged.records[i].sample_id);
    (seen ? g.first : g.second).push_back(pick(rows[i].u, measure));
  }
  g.empty_group = g.first.empty() || g.second.empty();
  return g;
}

inline std::set<std::string> families_in(const PredictionDataset& ds) {
  std::set<std::string> out;
  for (const auto& r : ds.records) {
    if (r.family) out.insert(*r.family);
  }
  return out;
}

struct WilcoxonResult {
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  double p_value = 1.0;    // two-sided
  std::size_t n = 0;       // nonzero differences used
  bool exact = true;
  bool degenerate = false;  // every difference was zero
};

namespace detail {

// Average ranks (1-based) of |d| for the nonzero differences.
inline std::vector<double> signed_rank_ranks(const std::vector<double>& mags,
                                             double* tie_term) {
  const std::size_t n = mags.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return mags[a] < mags[b]; });
  std::vector<double> ranks(n);
  double ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && mags[idx[j]] == mags[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = avg;
    const auto t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  if (tie_term) *tie_term = ties;
  return ranks;
}

}  // namespace detail

inline constexpr std::size_t kWilcoxonExactMax = 20;

// Two-sided Wilcoxon signed-rank test. Zero differences are dropped and tied
// magnitudes share the average rank. The null distribution is enumerated
// exactly for n <= 20 (over doubled ranks, so half-integer ranks stay exact);
// larger samples use the normal approximation with continuity and tie
// corrections. force_normal selects the approximation regardless of n.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> paired_diffs,
                                           bool force_normal = false) {
  std::vector<double> mags;
  std::vector<bool> positive;
  for (double d : paired_diffs) {
    if (d != 0.0) {
      mags.push_back(std::abs(d));
      positive.push_back(d > 0.0);
    }
  }
  WilcoxonResult res;
  res.n = mags.size();
  if (res.n == 0) {
    res.degenerate = true;
    return res;
  }
  double tie_term = 0.0;
  const auto ranks = detail::signed_rank_ranks(mags, &tie_term);
  for (std::size_t i = 0; i < res.n; ++i) {
    if (positive[i]) res.statistic += ranks[i];
  }
  const auto n = static_cast<double>(res.n);
  const double mean = n * (n + 1.0) / 4.0;

  if (res.n <= kWilcoxonExactMax && !force_normal) {
    // counts[s] = number of sign assignments whose doubled W+ equals s.
    std::vector<int> twice(res.n);
    int total = 0;
    for (std::size_t i = 0; i < res.n; ++i) {
      twice[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += twice[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    int reach = 0;
    for (int r : twice) {
      for (int s = reach; s >= 0; --s) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
      reach += r;
    }
    const int observed = static_cast<int>(std::lround(2.0 * res.statistic));
    double lower = 0.0, upper = 0.0, all = 0.0;
    for (int s = 0; s <= total; ++s) {
      const double c = counts[static_cast<std::size_t>(s)];
      all += c;
      if (s <= observed) lower += c;
      if (s >= observed) upper += c;
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    res.exact = true;
    return res;
  }

  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  res.exact = false;
  if (var <= 0.0) return res;
  const double dev = std::max(std::abs(res.statistic - mean) - 0.5, 0.0);
  res.p_value = std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
  return res;
}

enum class Normalization { count, density };

struct HistogramSpec {
  std::size_t bin_count = 20;
  double lo = 0.0;
  double hi = kLn2;
  Normalization normalization = Normalization::count;
};

struct Histogram {
  std::vector<double> edges;   // bin_count + 1
  std::vector<double> values;  // counts or densities
  std::size_t underflow = 0;
  std::size_t overflow = 0;
  std::size_t total = 0;
};

inline Histogram histogram(std::span<const double> values, const HistogramSpec& spec) {
  if (spec.bin_count == 0 || !(spec.lo < spec.hi)) {
    throw std::invalid_argument("histogram: need bin_count >= 1 and lo < hi");
  }
  Histogram h;
  const double width = (spec.hi - spec.lo) / static_cast<double>(spec.bin_count);
  h.edges.resize(spec.bin_count + 1);
  for (std::size_t k = 0; k <= spec.bin_count; ++k) {
    h.edges[k] = spec.lo + static_cast<double>(k) * width;
  }
  h.edges.back() = spec.hi;
  std::vector<std::size_t> counts(spec.bin_count, 0);
  for (double v : values) {
    ++h.total;
    if (v < spec.lo) {
      ++h.underflow;
    } else if (v > spec.hi) {
      ++h.overflow;
    } else {
      auto k = static_cast<std::size_t>((v - spec.lo) / width);
      k = std::min(k, spec.bin_count - 1);
      // Snap against rounding in the division so bins stay half-open on edges.
      while (k > 0 && v < h.edges[k]) --k;
      while (k + 1 < spec.bin_count && v >= h.edges[k + 1]) ++k;
      ++counts[k];
    }
  }
  // Out-of-range values stay in the denominator, so densities integrate to
  // the in-range share.
  h.values.resize(spec.bin_count);
  for (std::size_t k = 0; k < spec.bin_count; ++k) {
    const double c = static_cast<double>(counts[k]);
    h.values[k] = spec.normalization == Normalization::count || h.total == 0
                      ? c
                      : c / (static_cast<double>(h.total) * (h.edges[k + 1] - h.edges[k]));
  }
  return h;
}

inline void write_groups_csv(std::ostream& out, const GroupedValues& g) {
  out << "sample_id,group,value\n";
  for (std::size_t i = 0; i < g.first.size(); ++i) {
    out << g.first_ids[i] << ',' << g.first_name << ',' << detail::format_double(g.first[i]) << '\n';
  }
  for (std::size_t i = 0; i < g.second.size(); ++i) {
    out << g.second_ids[i] << ',' << g.second_name << ','
        << detail::format_double(g.second[i]) << '\n';
  }
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_lo,bin_hi,count_or_density\n";
  for (std::size_t k = 0; k < h.values.size(); ++k) {
    out << detail::format_double(h.edges[k]) << ',' << detail::format_double(h.edges[k + 1])
        << ',' << detail::format_double(h.values[k]) << '\n';
  }
}

inline void write_comparison_csv(std::ostream& out, const EnsembleComparison& c) {
  out << "model,accuracy,auc,partial_auc\n";
  for (const auto* r : {&c.ensemble, &c.members}) {
    out << r->model_name << ',' << detail::format_double(r->accuracy) << ','
        << detail::format_double(r->auc) << ',' << detail::format_double(r->partial_auc) << '\n';
  }
}

}  // namespace lowfpr
