#pragma once

// Valid versus invalid threshold-selection protocols.
//
// Valid: pick the threshold on validation data, then measure the realized
// FPR/TPR on test data. Invalid: pick the threshold on the test data itself,
// which hides the gap between target and realized FPR.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "lowfpr/data_model.hpp"
#include "lowfpr/parallel.hpp"
#include "lowfpr/random.hpp"
#include "lowfpr/roc.hpp"
#include "lowfpr/uncertainty.hpp"

namespace lowfpr {

struct ProtocolCurvePoint {
  double target_fpr = 0.0;
  double valid_tpr = 0.0;
  double valid_actualized_fpr = 0.0;
  double invalid_tpr = 0.0;
  // Empty when the valid protocol detects nothing (relative error undefined).
  std::optional<double> rel_error;
  bool attainable = true;

  bool operator==(const ProtocolCurvePoint&) const = default;
};

// Ensemble-mean scores and labels of a dataset.
struct LabeledScores {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  static LabeledScores from(const PredictionDataset& ds) {
    LabeledScores out;
    out.scores.reserve(ds.size());
    for (const auto& r : ds.records) out.scores.push_back(ensemble_mean(r.member_scores));
    out.labels = labels_of(ds);
    return out;
  }

  std::size_t negatives() const {
    std::size_t n = 0;
    for (auto l : labels) n += l == 0;
    return n;
  }
};

namespace detail {

inline void require_both(const LabeledScores& s, const char* what) {
  std::size_t pos = 0;
  for (auto l : s.labels) pos += l;
  if (pos == 0 || pos == s.labels.size()) {
    throw std::invalid_argument(std::string(what) + ": both classes are required");
  }
}

}  // namespace detail

// Smallest FPR whose estimate rests on at least min_fp_count false positives.
inline double min_estimable_fpr(std::size_t n_negatives, std::size_t min_fp_count = 100) {
  if (n_negatives == 0) throw std::invalid_argument("min_estimable_fpr: no negatives");
  return static_cast<double>(min_fp_count) / static_cast<double>(n_negatives);
}

inline std::vector<OperatingPoint> invalid_protocol_eval(const LabeledScores& test,
                                                         std::span<const double> target_fprs) {
  detail::require_both(test, "invalid_protocol_eval");
  std::vector<OperatingPoint> out;
  out.reserve(target_fprs.size());
  for (double t : target_fprs) out.push_back(select_threshold(test.scores, test.labels, t));
  return out;
}

inline std::vector<OperatingPoint> valid_protocol_eval(const LabeledScores& val,
                                                       const LabeledScores& test,
                                                       std::span<const double> target_fprs) {
  detail::require_both(val, "valid_protocol_eval");
  detail::require_both(test, "valid_protocol_eval");
  std::vector<OperatingPoint> out;
  out.reserve(target_fprs.size());
  for (double t : target_fprs) {
    const auto chosen = select_threshold(val.scores, val.labels, t);
    out.push_back(evaluate_at_threshold(test.scores, test.labels, chosen.threshold));
  }
  return out;
}

inline std::vector<ProtocolCurvePoint> relative_error_curve(const LabeledScores& val,
                                                            const LabeledScores& test,
                                                            std::span<const double> target_fprs) {
  const auto valid = valid_protocol_eval(val, test, target_fprs);
  const auto invalid = invalid_protocol_eval(test, target_fprs);
  std::vector<ProtocolCurvePoint> out(target_fprs.size());
  for (std::size_t i = 0; i < target_fprs.size(); ++i) {
    auto& p = out[i];
    p.target_fpr = target_fprs[i];
    p.valid_tpr = valid[i].tpr;
    p.valid_actualized_fpr = valid[i].fpr;
    p.invalid_tpr = invalid[i].tpr;
    p.attainable = !valid[i].is_sentinel();
    if (p.valid_tpr > 0.0) p.rel_error = std::abs(p.invalid_tpr - p.valid_tpr) / p.valid_tpr;
  }
  return out;
}

struct SubsampleCell {
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t reduced_negatives = 0;
  ProtocolCurvePoint point;
};

struct SubsampleOptions {
  // A target is attainable on a reduced validation set only if it leaves room
  // for at least this many false positives there (and yields a finite threshold).
  std::size_t min_fp_count = 1;
  int threads = 1;
};

// Rows ordered by (fraction, seed, target) in input order.
inline std::vector<SubsampleCell> subsampling_study(const PredictionDataset& val,
                                                    const LabeledScores& test,
                                                    std::span<const double> fractions,
                                                    std::span<const double> target_fprs,
                                                    std::span<const std::uint64_t> seeds,
                                                    const SubsampleOptions& opt = {}) {
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw std::invalid_argument("subsampling_study: fractions must lie in (0, 1]");
    }
  }
  detail::require_both(test, "subsampling_study");
  const std::size_t n_targets = target_fprs.size();
  const std::size_t n_cells = fractions.size() * seeds.size();
  const auto invalid = invalid_protocol_eval(test, target_fprs);
  std::vector<SubsampleCell> out(n_cells * n_targets);
  parallel_for(n_cells, opt.threads, [&](std::size_t cell) {
    const std::size_t fi = cell / seeds.size();
    const std::size_t si = cell % seeds.size();
    const auto reduced = LabeledScores::from(
        subsample(val, fractions[fi], derive_seed(seeds[si], fi, si)));
    const std::size_t n_neg = reduced.negatives();
    const bool usable = n_neg > 0 && n_neg < reduced.labels.size();
    for (std::size_t t = 0; t < n_targets; ++t) {
      auto& row = out[cell * n_targets + t];
      row.fraction = fractions[fi];
      row.seed = seeds[si];
      row.reduced_negatives = n_neg;
      auto& p = row.point;
      p.target_fpr = target_fprs[t];
      p.invalid_tpr = invalid[t].tpr;
      if (!usable) {
        p.attainable = false;
        continue;
      }
      const auto chosen = select_threshold(reduced.scores, reduced.labels, target_fprs[t]);
      const auto realized = evaluate_at_threshold(test.scores, test.labels, chosen.threshold);
      p.valid_tpr = realized.tpr;
      p.valid_actualized_fpr = realized.fpr;
      if (p.valid_tpr > 0.0) p.rel_error = std::abs(p.invalid_tpr - p.valid_tpr) / p.valid_tpr;
      p.attainable = !chosen.is_sentinel() &&
                     target_fprs[t] >= min_estimable_fpr(n_neg, opt.min_fp_count);
    }
  });
  return out;
}

inline void write_protocol_csv(std::ostream& out, const std::vector<ProtocolCurvePoint>& pts) {
  out << "target_fpr,valid_tpr,valid_fpr,invalid_tpr,rel_error,attainable\n";
  for (const auto& p : pts) {
    out << detail::format_double(p.target_fpr) << ',' << detail::format_double(p.valid_tpr)
        << ',' << detail::format_double(p.valid_actualized_fpr) << ','
        << detail::format_double(p.invalid_tpr) << ','
        << (p.rel_error ? detail::format_double(*p.rel_error) : std::string()) << ','
        << (p.attainable ? 1 : 0) << '\n';
  }
}

inline void write_subsample_csv(std::ostream& out, const std::vector<SubsampleCell>& rows) {
  out << "fraction,seed,target_fpr,valid_tpr,valid_fpr,invalid_tpr,rel_error,attainable\n";
  for (const auto& r : rows) {
    const auto& p = r.point;
    out << detail::format_double(r.fraction) << ',' << r.seed << ','
        << detail::format_double(p.target_fpr) << ',' << detail::format_double(p.valid_tpr)
        << ',' << detail::format_double(p.valid_actualized_fpr) << ','
        << detail::format_double(p.invalid_tpr) << ','
        << (p.rel_error ? detail::format_double(*p.rel_error) : std::string()) << ','
        << (p.attainable ? 1 : 0) << '\n';
  }
}

}  // namespace lowfpr
