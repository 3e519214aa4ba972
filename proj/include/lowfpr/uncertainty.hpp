#pragma once

// Ensemble-mean prediction and the entropy decomposition of binary ensemble
// predictions. All quantities are in nats.
//
//   predictive = H(mean_i p_i)
//   aleatoric  = mean_i H(p_i)
//   epistemic  = predictive - aleatoric   (mutual information)

#include <cmath>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "lowfpr/data_model.hpp"
#include "lowfpr/error.hpp"
#include "lowfpr/parallel.hpp"

namespace lowfpr {

inline constexpr double kLn2 = std::numbers::ln2;

struct UncertaintyTriple {
  double predictive_entropy = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("binary_entropy: probability outside [0,1]");
  }
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

inline double ensemble_mean(std::span<const double> member_scores) {
  if (member_scores.empty()) {
    throw std::invalid_argument("ensemble_mean: empty member sequence");
  }
  double sum = 0.0;
  for (double s : member_scores) sum += s;
  return sum / static_cast<double>(member_scores.size());
}

inline UncertaintyTriple uncertainty_triple(std::span<const double> member_scores) {
  if (member_scores.empty()) {
    throw std::invalid_argument("uncertainty_triple: empty member sequence");
  }
  UncertaintyTriple u;
  // Clamp guards against the mean of in-range values rounding past 1.
  u.predictive_entropy = binary_entropy(std::min(ensemble_mean(member_scores), 1.0));
  double alea = 0.0;
  bool all_equal = true;
  for (double s : member_scores) {
    alea += binary_entropy(s);
    all_equal = all_equal && s == member_scores.front();
  }
  u.aleatoric = alea / static_cast<double>(member_scores.size());
  if (all_equal) {
    // Identical members: mean equals each member up to rounding of the sum.
    u.aleatoric = u.predictive_entropy;
    return u;
  }
  const double mi = u.predictive_entropy - u.aleatoric;
  if (mi < -1e-9) {
    throw numeric_error("uncertainty_triple: mutual information " +
                        detail::format_double(mi) + " is negative");
  }
  u.epistemic = mi < 0.0 ? 0.0 : mi;
  if (u.aleatoric > u.predictive_entropy) u.aleatoric = u.predictive_entropy;
  return u;
}

struct UncertaintyRow {
  double yhat = 0.0;
  UncertaintyTriple u;
};

inline std::vector<UncertaintyRow> compute_uncertainties(const PredictionDataset& ds,
                                                         int threads = 1) {
  if (ds.empty()) throw std::invalid_argument("compute_uncertainties: empty dataset");
  std::vector<UncertaintyRow> rows(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    const auto& r = ds.records[i];
    try {
      rows[i].yhat = ensemble_mean(r.member_scores);
      rows[i].u = uncertainty_triple(r.member_scores);
    } catch (const std::exception& e) {
      throw numeric_error("sample '" + r.sample_id + "': " + e.what());
    }
  });
  return rows;
}

inline void write_uncertainties_csv(std::ostream& out, const PredictionDataset& ds,
                                    const std::vector<UncertaintyRow>& rows) {
  out << "sample_id,yhat,pred_entropy,aleatoric,epistemic\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << ds.records[i].sample_id << ',' << detail::format_double(rows[i].yhat)
        << ',' << detail::format_double(rows[i].u.predictive_entropy) << ','
        << detail::format_double(rows[i].u.aleatoric) << ','
        << detail::format_double(rows[i].u.epistemic) << '\n';
  }
}

}  // namespace lowfpr
