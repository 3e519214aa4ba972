#pragma once

// Uncertainty-aware local threshold adjustments and their fitting.
//
//   lv1: yhat + a1*epis + a2*alea
//   lv2: yhat + a1*exp(a3*epis) + a2*exp(a4*alea)
//   lv3: yhat + [yhat >  a0] (a1*epis + a2*alea)
//             + [yhat <= a0] (a3*epis + a4*alea)
//
// Coefficients are fit one at a time with Brent's method, each candidate
// value scored by re-selecting the global threshold on the adjusted
// validation scores and reading off the TPR at the (conservative) FPR cap.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lowfpr/brent.hpp"
#include "lowfpr/data_model.hpp"
#include "lowfpr/error.hpp"
#include "lowfpr/parallel.hpp"
#include "lowfpr/random.hpp"
#include "lowfpr/roc.hpp"
#include "lowfpr/uncertainty.hpp"

namespace lowfpr {

enum class Variant { global_only, lv1, lv2, lv3 };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::global_only: return "g";
    case Variant::lv1: return "g+l";
    case Variant::lv2: return "g+lv2";
    case Variant::lv3: return "g+lv3";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "g") return Variant::global_only;
  if (s == "g+l" || s == "g+lv1") return Variant::lv1;
  if (s == "g+lv2") return Variant::lv2;
  if (s == "g+lv3") return Variant::lv3;
  return std::nullopt;
}

inline std::size_t arity(Variant v) {
  switch (v) {
    case Variant::global_only: return 0;
    case Variant::lv1: return 2;
    case Variant::lv2: return 4;
    case Variant::lv3: return 5;
  }
  return 0;
}

struct Bracket {
  double lo;
  double hi;
};

// Search interval for coefficient `index` of `variant`. For lv3, index 0 is
// the branch point a0.
inline Bracket coefficient_bracket(Variant v, std::size_t index) {
  switch (v) {
    case Variant::lv1: return {-100.0, 100.0};
    case Variant::lv2: return {-10.0, 10.0};
    case Variant::lv3: return index == 0 ? Bracket{-0.1, 0.1} : Bracket{0.0, 1.0};
    case Variant::global_only: break;
  }
  throw std::invalid_argument("global-only variant has no coefficients");
}

struct AdjustmentParams {
  Variant variant = Variant::global_only;
  // lv1: (a1, a2); lv2: (a1, a2, a3, a4); lv3: (a0, a1, a2, a3, a4).
  std::vector<double> alpha;

  static AdjustmentParams zeros(Variant v) { return {v, std::vector<double>(arity(v), 0.0)}; }

  void validate() const {
    if (alpha.size() != arity(variant)) {
      throw std::invalid_argument("adjustment " + std::string(to_string(variant)) +
                                  " expects " + std::to_string(arity(variant)) +
                                  " coefficients, got " + std::to_string(alpha.size()));
    }
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      const auto [lo, hi] = coefficient_bracket(variant, i);
      if (!(alpha[i] >= lo && alpha[i] <= hi)) {
        throw std::invalid_argument("coefficient " + std::to_string(i) + " of " +
                                    std::string(to_string(variant)) +
                                    " outside its bracket");
      }
    }
  }

  bool operator==(const AdjustmentParams&) const = default;
};

namespace detail {

// Unchecked evaluation; callers validate the parameter arity once.
inline double adjust_unchecked(double yhat, double epis, double alea,
                               Variant variant, const double* a) {
  switch (variant) {
    case Variant::global_only:
      return yhat;
    case Variant::lv1:
      return yhat + a[0] * epis + a[1] * alea;
    case Variant::lv2:
      return yhat + a[0] * std::exp(a[2] * epis) + a[1] * std::exp(a[3] * alea);
    case Variant::lv3:
      return yhat > a[0] ? yhat + (a[1] * epis + a[2] * alea)
                         : yhat + (a[3] * epis + a[4] * alea);
  }
  return yhat;
}

}  // namespace detail

inline double apply_adjustment(double yhat, double u_epis, double u_alea,
                               const AdjustmentParams& params) {
  if (params.alpha.size() != arity(params.variant)) {
    throw std::invalid_argument("apply_adjustment: coefficient count does not match variant");
  }
  return detail::adjust_unchecked(yhat, u_epis, u_alea, params.variant,
                                  params.alpha.data());
}

// Column view of a dataset: ensemble means, uncertainties and labels.
struct ScoredSamples {
  std::vector<double> yhat;
  std::vector<double> epistemic;
  std::vector<double> aleatoric;
  std::vector<std::uint8_t> labels;
  std::size_t member_count = 0;

  std::size_t size() const { return yhat.size(); }

  static ScoredSamples from(const PredictionDataset& ds, int threads = 1) {
    ScoredSamples s;
    s.member_count = ds.member_count;
    if (ds.empty()) return s;
    const auto rows = compute_uncertainties(ds, threads);
    s.yhat.reserve(rows.size());
    s.epistemic.reserve(rows.size());
    s.aleatoric.reserve(rows.size());
    for (const auto& r : rows) {
      s.yhat.push_back(r.yhat);
      s.epistemic.push_back(r.u.epistemic);
      s.aleatoric.push_back(r.u.aleatoric);
    }
    s.labels = labels_of(ds);
    return s;
  }

  std::vector<double> adjusted(const AdjustmentParams& params, int threads = 1) const {
    if (params.alpha.size() != arity(params.variant)) {
      throw std::invalid_argument("adjusted: coefficient count does not match variant");
    }
    std::vector<double> out(size());
    parallel_for(size(), threads, [&](std::size_t i) {
      out[i] = detail::adjust_unchecked(yhat[i], epistemic[i], aleatoric[i],
                                        params.variant, params.alpha.data());
    });
    return out;
  }
};

struct CalibrationResult {
  AdjustmentParams params;
  double global_threshold = kNoThreshold;
  double target_fpr = 0.0;
  double fit_fpr_multiplier = 0.9;
  OperatingPoint achieved_val;
  int sweeps_used = 0;
  std::uint64_t seed = 0;
  std::size_t member_count = 0;

  bool operator==(const CalibrationResult&) const = default;
};

struct FitOptions {
  double multiplier = 0.9;
  double sweep_tol = 1e-6;
  int max_sweeps = 50;
  double brent_tol = 1e-8;
  int brent_max_iters = 200;
  std::uint64_t seed = 0;
  int threads = 1;
};

namespace detail {

inline void require_both_classes(std::span<const std::uint8_t> labels, const char* what) {
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg) {
    throw numeric_error(std::string(what) + ": fitting data must contain both classes");
  }
}

inline double effective_target(double target_fpr, double multiplier) {
  const double eff = target_fpr * multiplier;
  if (!(eff > 0.0 && eff < 1.0)) {
    throw std::invalid_argument("multiplier * target_fpr must lie in (0, 1)");
  }
  return eff;
}

// Scores adjusted coefficient vectors by validation TPR at the FPR cap.
class CapObjective {
 public:
  CapObjective(const ScoredSamples& samples, Variant variant, double cap, int threads)
      : samples_(samples), variant_(variant), cap_(cap), threads_(threads) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      (samples.labels[i] ? pos_idx_ : neg_idx_).push_back(i);
    }
    pos_.resize(pos_idx_.size());
    neg_.resize(neg_idx_.size());
  }

  double tpr(const std::vector<double>& alpha) {
    const double* a = alpha.data();
    auto fill = [&](const std::vector<std::size_t>& idx, std::vector<double>& out) {
      parallel_for(idx.size(), threads_, [&](std::size_t j) {
        const std::size_t i = idx[j];
        out[j] = adjust_unchecked(samples_.yhat[i], samples_.epistemic[i],
                                  samples_.aleatoric[i], variant_, a);
      });
    };
    fill(pos_idx_, pos_);
    fill(neg_idx_, neg_);
    return tpr_at_fpr_cap(pos_, neg_, cap_);
  }

 private:
  const ScoredSamples& samples_;
  Variant variant_;
  double cap_;
  int threads_;
  std::vector<std::size_t> pos_idx_, neg_idx_;
  std::vector<double> pos_, neg_;
};

inline std::vector<std::size_t> coordinate_order(Variant v, std::uint64_t seed, int sweep) {
  std::vector<std::size_t> order(arity(v));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (v == Variant::lv1) return order;
  RandomStream rng(seed, /*stream=*/0xC0u, static_cast<std::uint64_t>(sweep));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
  return order;
}

inline CalibrationResult finish_fit(const ScoredSamples& val, AdjustmentParams params,
                                    double target_fpr, const FitOptions& opt,
                                    int sweeps_used) {
  CalibrationResult res;
  const auto scores = val.adjusted(params, opt.threads);
  res.achieved_val = select_threshold(scores, val.labels,
                                      effective_target(target_fpr, opt.multiplier));
  res.global_threshold = res.achieved_val.threshold;
  res.params = std::move(params);
  res.target_fpr = target_fpr;
  res.fit_fpr_multiplier = opt.multiplier;
  res.sweeps_used = sweeps_used;
  res.seed = opt.seed;
  res.member_count = val.member_count;
  return res;
}

}  // namespace detail

inline CalibrationResult fit_global(const ScoredSamples& val, double target_fpr,
                                    const FitOptions& opt = {}) {
  detail::require_both_classes(val.labels, "fit_global");
  return detail::finish_fit(val, AdjustmentParams::zeros(Variant::global_only),
                            target_fpr, opt, 0);
}

inline CalibrationResult fit_global(const PredictionDataset& val, double target_fpr,
                                    const FitOptions& opt = {}) {
  return fit_global(ScoredSamples::from(val, opt.threads), target_fpr, opt);
}

// Starting point of the coordinate search. Every variant starts at the
// identity adjustment. For lv2 the exponent rates start at 1: with a1 = a2 = 0
// and zero rates each single-coordinate move either adds a constant or
// nothing, so a search started from all zeros could never leave the origin.
inline AdjustmentParams initial_params(Variant v) {
  auto p = AdjustmentParams::zeros(v);
  if (v == Variant::lv2) p.alpha[2] = p.alpha[3] = 1.0;
  return p;
}

// Coordinate-wise fit. The global-only solution is the starting incumbent; a Brent step replaces the incumbent
// only when it strictly raises the validation TPR.
inline CalibrationResult fit_local(const ScoredSamples& val, double target_fpr,
                                   Variant variant, const FitOptions& opt = {}) {
  if (variant == Variant::global_only) return fit_global(val, target_fpr, opt);
  detail::require_both_classes(val.labels, "fit_local");
  const double cap = detail::effective_target(target_fpr, opt.multiplier);

  detail::CapObjective objective(val, variant, cap, opt.threads);
  AdjustmentParams params = initial_params(variant);
  double best_tpr = objective.tpr(params.alpha);

  int sweeps = 0;
  while (sweeps < opt.max_sweeps) {
    const double sweep_start = best_tpr;
    for (std::size_t c : detail::coordinate_order(variant, opt.seed, sweeps)) {
      const auto [lo, hi] = coefficient_bracket(variant, c);
      std::vector<double> trial = params.alpha;
      const auto step = brent_minimize(
          [&](double x) {
            trial[c] = x;
            return -objective.tpr(trial);
          },
          lo, hi, opt.brent_tol, opt.brent_max_iters);
      if (-step.f > best_tpr) {
        best_tpr = -step.f;
        params.alpha[c] = step.x;
      }
    }
    ++sweeps;
    if (best_tpr - sweep_start < opt.sweep_tol) break;
  }
  return detail::finish_fit(val, std::move(params), target_fpr, opt, sweeps);
}

inline CalibrationResult fit_local(const PredictionDataset& val, double target_fpr,
                                   Variant variant, const FitOptions& opt = {}) {
  return fit_local(ScoredSamples::from(val, opt.threads), target_fpr, variant, opt);
}

struct CalibrationEval {
  double tpr = 0.0;
  double actualized_fpr = 0.0;
  double combined = 0.0;
};

inline CalibrationEval evaluate_calibration(const ScoredSamples& test,
                                            const CalibrationResult& result,
                                            double target_fpr, int threads = 1) {
  if (test.member_count != result.member_count) {
    throw data_error("calibration was fit on " + std::to_string(result.member_count) +
                     " ensemble members, test data has " +
                     std::to_string(test.member_count));
  }
  detail::require_both_classes(test.labels, "evaluate_calibration");
  const auto scores = test.adjusted(result.params, threads);
  const auto op = evaluate_at_threshold(scores, test.labels, result.global_threshold);
  return {op.tpr, op.fpr, combined_metric(op.tpr, op.fpr, target_fpr)};
}

inline CalibrationEval evaluate_calibration(const PredictionDataset& test,
                                            const CalibrationResult& result,
                                            double target_fpr, int threads = 1) {
  if (test.member_count != result.member_count) {
    throw data_error("calibration was fit on " + std::to_string(result.member_count) +
                     " ensemble members, test data has " +
                     std::to_string(test.member_count));
  }
  return evaluate_calibration(ScoredSamples::from(test, threads), result, target_fpr,
                              threads);
}

// JSON form:
// {"variant": "g+lv2", "alpha": [...], "threshold": 0.93 | "inf",
//  "target_fpr": ..., "multiplier": ..., "seed": ..., "sweeps_used": ...,
//  "member_count": ..., "val_tpr": ..., "val_fpr": ...}
inline nlohmann::json to_json(const CalibrationResult& r) {
  nlohmann::json j;
  j["variant"] = std::string(to_string(r.params.variant));
  j["alpha"] = r.params.alpha;
  if (std::isinf(r.global_threshold)) {
    j["threshold"] = r.global_threshold > 0 ? "inf" : "-inf";
  } else {
    j["threshold"] = r.global_threshold;
  }
  j["target_fpr"] = r.target_fpr;
  j["multiplier"] = r.fit_fpr_multiplier;
  j["seed"] = r.seed;
  j["sweeps_used"] = r.sweeps_used;
  j["member_count"] = r.member_count;
  j["val_tpr"] = r.achieved_val.tpr;
  j["val_fpr"] = r.achieved_val.fpr;
  return j;
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
  try {
    CalibrationResult r;
    const auto variant = parse_variant(j.at("variant").get<std::string>());
    if (!variant) throw data_error("calibration: unknown variant");
    r.params.variant = *variant;
    r.params.alpha = j.at("alpha").get<std::vector<double>>();
    r.params.validate();
    const auto& t = j.at("threshold");
    if (t.is_string()) {
      const auto s = t.get<std::string>();
      if (s == "inf") {
        r.global_threshold = kNoThreshold;
      } else if (s == "-inf") {
        r.global_threshold = -kNoThreshold;
      } else {
        throw data_error("calibration: bad threshold '" + s + "'");
      }
    } else {
      r.global_threshold = t.get<double>();
    }
    r.target_fpr = j.at("target_fpr").get<double>();
    r.fit_fpr_multiplier = j.at("multiplier").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.sweeps_used = j.at("sweeps_used").get<int>();
    r.member_count = j.at("member_count").get<std::size_t>();
    r.achieved_val = {r.global_threshold, j.at("val_tpr").get<double>(),
                      j.at("val_fpr").get<double>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("calibration JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw data_error(std::string("calibration JSON: ") + e.what());
  }
}

inline void save_calibration(const std::filesystem::path& path, const CalibrationResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write '" + path.string() + "'");
  out << to_json(r).dump(2) << '\n';
}

inline CalibrationResult load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("calibration '" + path.string() + "': " + e.what());
  }
  return calibration_from_json(j);
}

}  // namespace lowfpr
