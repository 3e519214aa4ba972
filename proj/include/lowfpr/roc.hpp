#pragma once

// ROC construction, threshold selection and low-FPR metrics.
//
// Decision rule everywhere: a sample is predicted malicious iff
// score >= threshold. The threshold +inf is the all-negative classifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "lowfpr/data_model.hpp"

namespace lowfpr {

inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

struct OperatingPoint {
  double threshold = kNoThreshold;
  double tpr = 0.0;
  double fpr = 0.0;

  bool is_sentinel() const { return std::isinf(threshold) && threshold > 0; }
  bool operator==(const OperatingPoint&) const = default;
};

struct RocCurve {
  // Descending threshold; points.front() is the +inf sentinel and
  // points.back() is the lowest observed score, where tpr = fpr = 1.
  std::vector<OperatingPoint> points;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

namespace detail {

inline void check_lengths(std::span<const double> scores,
                          std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length");
  }
}

inline double rate(std::size_t count, std::size_t total) {
  return total == 0 ? 0.0
                    : static_cast<double>(count) / static_cast<double>(total);
}

// Indices sorted by descending score.
inline std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Walks distinct score values from high to low, calling
// visit(threshold, true_positives, false_positives) after each tie group.
template <typename Visit>
void sweep_thresholds(std::span<const double> scores,
                      std::span<const std::uint8_t> labels, Visit&& visit) {
  const auto idx = order_descending(scores);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double t = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == t; ++i) {
      if (labels[idx[i]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    visit(t, tp, fp);
  }
}

// Largest false-positive count whose rate does not exceed target_fpr, using
// the same floating-point comparison as the reported FPR.
inline std::size_t max_false_positives(double target_fpr, std::size_t n_neg) {
  if (n_neg == 0) return 0;
  const auto n = static_cast<double>(n_neg);
  auto k = static_cast<std::size_t>(
      std::clamp(std::floor(target_fpr * n), 0.0, n));
  while (k < n_neg && rate(k + 1, n_neg) <= target_fpr) ++k;
  while (k > 0 && rate(k, n_neg) > target_fpr) --k;
  return k;
}

}  // namespace detail

inline std::vector<std::uint8_t> labels_of(const PredictionDataset& ds) {
  std::vector<std::uint8_t> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = ds.records[i].malicious();
  return out;
}

inline RocCurve roc_curve(std::span<const double> scores,
                          std::span<const std::uint8_t> labels) {
  detail::check_lengths(scores, labels);
  RocCurve curve;
  for (auto l : labels) (l ? curve.n_pos : curve.n_neg)++;
  if (curve.n_pos == 0 || curve.n_neg == 0) {
    throw std::invalid_argument("roc_curve: both classes are required");
  }
  curve.points.push_back({kNoThreshold, 0.0, 0.0});
  detail::sweep_thresholds(scores, labels,
                           [&](double t, std::size_t tp, std::size_t fp) {
                             curve.points.push_back({t, detail::rate(tp, curve.n_pos),
                                                     detail::rate(fp, curve.n_neg)});
                           });
  return curve;
}

inline double partial_auc(const RocCurve& curve, double fpr_max) {
  if (!(fpr_max > 0.0 && fpr_max <= 1.0)) {
    throw std::invalid_argument("partial_auc: fpr_max must lie in (0, 1]");
  }
  double area = 0.0;
  const auto& pts = curve.points;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double x0 = pts[i - 1].fpr, x1 = pts[i].fpr;
    const double y0 = pts[i - 1].tpr, y1 = pts[i].tpr;
    if (x0 >= fpr_max) break;
    if (x1 <= fpr_max) {
      area += (x1 - x0) * (y0 + y1) * 0.5;
    } else {
      const double y_cut = y0 + (y1 - y0) * (fpr_max - x0) / (x1 - x0);
      area += (fpr_max - x0) * (y0 + y_cut) * 0.5;
      break;
    }
  }
  return area;
}

inline double auc(const RocCurve& curve) {
  double area = 0.0;
  const auto& pts = curve.points;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) * 0.5;
  }
  return area;
}

inline OperatingPoint evaluate_at_threshold(std::span<const double> scores,
                                            std::span<const std::uint8_t> labels,
                                            double threshold) {
  detail::check_lengths(scores, labels);
  std::size_t tp = 0, fp = 0, n_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool flagged = scores[i] >= threshold;
    if (labels[i]) {
      ++n_pos;
      tp += flagged;
    } else {
      fp += flagged;
    }
  }
  return {threshold, detail::rate(tp, n_pos),
          detail::rate(fp, scores.size() - n_pos)};
}

// Maximizes validation TPR subject to validation FPR <= target_fpr over the
// observed scores plus +inf; among equal TPRs the larger threshold wins.
inline OperatingPoint select_threshold(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels,
                                       double target_fpr) {
  detail::check_lengths(scores, labels);
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
    throw std::invalid_argument("select_threshold: target_fpr must lie in (0, 1)");
  }
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_neg == 0) {
    throw std::invalid_argument("select_threshold: no negative samples");
  }
  OperatingPoint best{kNoThreshold, 0.0, 0.0};
  std::size_t best_tp = 0;
  detail::sweep_thresholds(scores, labels,
                           [&](double t, std::size_t tp, std::size_t fp) {
                             const double fpr = detail::rate(fp, n_neg);
                             if (fpr <= target_fpr && tp > best_tp) {
                               best = {t, detail::rate(tp, n_pos), fpr};
                               best_tp = tp;
                             }
                           });
  return best;
}

// Linear-time equivalent of select_threshold(...).tpr used inside the fitting
// loop. The best feasible threshold admits every positive scoring strictly
// above the (k+1)-th largest negative score, k being the false-positive budget.
// `negatives` is scratch space and is reordered.
inline double tpr_at_fpr_cap(std::span<const double> positives,
                             std::vector<double>& negatives, double target_fpr) {
  if (positives.empty() || negatives.empty()) return 0.0;
  const std::size_t k = detail::max_false_positives(target_fpr, negatives.size());
  if (k >= negatives.size()) return 1.0;
  std::nth_element(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(k),
                   negatives.end(), std::greater<>());
  const double cut = negatives[k];
  std::size_t tp = 0;
  for (double s : positives) tp += s > cut;
  return detail::rate(tp, positives.size());
}

inline double accuracy(std::span<const double> scores,
                       std::span<const std::uint8_t> labels, double threshold) {
  detail::check_lengths(scores, labels);
  if (scores.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += (scores[i] >= threshold) == static_cast<bool>(labels[i]);
  }
  return detail::rate(correct, scores.size());
}

// TPR penalized by the relative overrun of the realized FPR past the target.
inline double combined_metric(double tpr, double actualized_fpr, double target_fpr) {
  if (!(target_fpr > 0.0)) {
    throw std::invalid_argument("combined_metric: target_fpr must be positive");
  }
  return tpr - std::max(actualized_fpr - target_fpr, 0.0) / target_fpr;
}

inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,tpr,fpr\n";
  for (const auto& p : curve.points) {
    out << detail::format_double(p.threshold) << ',' << detail::format_double(p.tpr)
        << ',' << detail::format_double(p.fpr) << '\n';
  }
}

}  // namespace lowfpr
