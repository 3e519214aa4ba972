// lowfpr: batch front end for dataset checks, calibration fits, evaluation,
// protocol studies and synthetic data.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <lowfpr/lowfpr.hpp>

namespace fs = std::filesystem;
using namespace lowfpr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string input;
  std::string output_dir = ".";
  std::string format;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool needs_input = true) {
  auto* in = cmd->add_option("--input", c.input, "dataset file (.csv or .jsonl)");
  if (needs_input) in->required();
  cmd->add_option("--output-dir", c.output_dir, "directory for output files");
  cmd->add_option("--format", c.format, "csv|jsonl (default: from extension)")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

PredictionDataset load(const Common& c) {
  if (c.format.empty()) return load_dataset(c.input);
  return load_dataset(c.input, c.format == "csv" ? DataFormat::csv : DataFormat::jsonl);
}

fs::path out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  return fs::path(c.output_dir) / name;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw data_error("cannot write '" + p.string() + "'");
  return out;
}

PredictionDataset require_split(const PredictionDataset& ds, Split s) {
  auto part = filter_split(ds, s);
  if (part.empty()) throw data_error("no records in split '" + std::string(to_string(s)) + "'");
  return part;
}

std::vector<double> targets_or_default(std::vector<double> t) {
  if (t.empty()) return {1e-2, 1e-3, 1e-4, 1e-5};
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0 && t[i] <= 1.0)) throw usage_error("--target-fpr values must lie in (0, 1]");
    if (i > 0 && !(t[i] < t[i - 1])) throw usage_error("--target-fpr values must be strictly descending");
  }
  return t;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return detail::format_double(v);
}

void print_counts(const PredictionDataset& ds) {
  std::cout << "records " << ds.size() << ", members " << ds.member_count << '\n';
  for (Split s : {Split::train, Split::validation, Split::test}) {
    std::size_t neg = 0, pos = 0;
    for (const auto& r : ds.records) {
      if (r.split == s) (r.malicious() ? pos : neg) += 1;
    }
    std::cout << to_string(s) << ": benign " << neg << ", malicious " << pos << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-FPR detector calibration toolkit"};
  app.require_subcommand(1);

  // validate
  Common validate_opt;
  auto* validate = app.add_subcommand("validate", "check a dataset and print counts");
  add_common(validate, validate_opt);

  // uncertainty
  Common unc_opt;
  auto* uncertainty = app.add_subcommand("uncertainty", "write per-sample uncertainty triples");
  add_common(uncertainty, unc_opt);

  // fit
  Common fit_opt;
  std::string variant_name = "g";
  double fit_target = 1e-3;
  FitOptions fit_cfg;
  std::string fit_output;
  auto* fit = app.add_subcommand("fit", "fit a calibration on the validation split");
  add_common(fit, fit_opt);
  fit->add_option("--variant", variant_name, "g|g+l|g+lv2|g+lv3");
  fit->add_option("--target-fpr", fit_target, "target false positive rate");
  fit->add_option("--multiplier", fit_cfg.multiplier, "fit at multiplier * target");
  fit->add_option("--seed", fit_cfg.seed, "coordinate order seed");
  fit->add_option("--max-sweeps", fit_cfg.max_sweeps);
  fit->add_option("--sweep-tol", fit_cfg.sweep_tol);
  fit->add_option("--output", fit_output, "calibration path (default OUTPUT_DIR/calibration.json)");

  // eval
  Common eval_opt;
  std::string calibration_path;
  std::optional<double> eval_target;
  auto* eval = app.add_subcommand("eval", "apply a calibration to the test split");
  add_common(eval, eval_opt);
  eval->add_option("--calibration", calibration_path, "calibration JSON")->required();
  eval->add_option("--target-fpr", eval_target, "target for the combined score (default: fitted target)");

  // study
  Common study_opt;
  std::string study_name;
  std::vector<double> study_targets;
  std::vector<double> fractions{1.0, 0.1, 0.01};
  std::uint64_t study_seeds = 20;
  std::uint64_t seed_base = 0;
  std::size_t min_fp_count = 1;
  std::string measure_name = "epistemic";
  double decision_threshold = 0.5;
  double fpr_max = 1e-3;
  std::size_t bins = 20;
  auto* study = app.add_subcommand("study", "run a protocol or analysis study");
  add_common(study, study_opt);
  study->add_option("study", study_name, "protocol|subsample|table1|errors|novelty")
      ->required()
      ->check(CLI::IsMember({"protocol", "subsample", "table1", "errors", "novelty"}));
  study->add_option("--target-fpr", study_targets, "repeatable; default 1e-2 1e-3 1e-4 1e-5");
  study->add_option("--fractions", fractions, "validation fractions for subsample")->delimiter(',');
  study->add_option("--study-seeds", study_seeds, "number of subsample seeds");
  study->add_option("--seed", seed_base, "first subsample seed");
  study->add_option("--min-fp-count", min_fp_count, "false positives needed for an estimable target");
  study->add_option("--measure", measure_name, "predictive|aleatoric|epistemic")
      ->check(CLI::IsMember({"predictive", "aleatoric", "epistemic"}));
  study->add_option("--threshold", decision_threshold, "decision threshold for errors study");
  study->add_option("--fpr-max", fpr_max, "partial AUC limit for table1");
  study->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);

  // synth
  Common synth_opt;
  std::string synth_config;
  std::string synth_output;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_opt, false);
  synth->add_option("--config", synth_config, "config JSON (default: built-in defaults)");
  synth->add_option("--output", synth_output, "dataset path")->required();
  synth->add_option("--seed", synth_seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) {
      print_counts(load(validate_opt));
      std::cout << "ok\n";
    } else if (*uncertainty) {
      const auto ds = load(unc_opt);
      const auto rows = compute_uncertainties(ds, unc_opt.threads);
      auto out = open_out(out_path(unc_opt, "uncertainties.csv"));
      write_uncertainties_csv(out, ds, rows);
    } else if (*fit) {
      const auto variant = parse_variant(variant_name);
      if (!variant) throw usage_error("unknown variant '" + variant_name + "'");
      if (!(fit_target > 0.0 && fit_target <= 1.0)) throw usage_error("--target-fpr must lie in (0, 1]");
      fit_cfg.threads = fit_opt.threads;
      const auto val = require_split(load(fit_opt), Split::validation);
      const auto res = fit_local(val, fit_target, *variant, fit_cfg);
      save_calibration(fit_output.empty() ? out_path(fit_opt, "calibration.json") : fs::path(fit_output), res);
      std::cout << "variant " << to_string(res.params.variant) << ", threshold "
                << fmt(res.global_threshold) << ", validation tpr " << fmt(res.achieved_val.tpr)
                << ", fpr " << fmt(res.achieved_val.fpr) << ", sweeps " << res.sweeps_used << '\n';
    } else if (*eval) {
      const auto cal = load_calibration(calibration_path);
      const double target = eval_target.value_or(cal.target_fpr);
      if (!(target > 0.0 && target <= 1.0)) throw usage_error("--target-fpr must lie in (0, 1]");
      const auto test = require_split(load(eval_opt), Split::test);
      const auto r = evaluate_calibration(test, cal, target, eval_opt.threads);
      auto out = open_out(out_path(eval_opt, "eval.csv"));
      out << "variant,target_fpr,tpr,actualized_fpr,combined\n"
          << to_string(cal.params.variant) << ',' << fmt(target) << ',' << fmt(r.tpr) << ','
          << fmt(r.actualized_fpr) << ',' << fmt(r.combined) << '\n';
      std::cout << "tpr " << fmt(r.tpr) << ", actualized fpr " << fmt(r.actualized_fpr)
                << ", combined " << fmt(r.combined) << '\n';
    } else if (*study) {
      const auto ds = load(study_opt);
      const auto measure = *parse_measure(measure_name);
      const HistogramSpec spec{bins, 0.0, kLn2, Normalization::count};
      if (study_name == "protocol") {
        const auto targets = targets_or_default(study_targets);
        const auto val = LabeledScores::from(require_split(ds, Split::validation));
        const auto test = LabeledScores::from(require_split(ds, Split::test));
        auto out = open_out(out_path(study_opt, "protocol.csv"));
        write_protocol_csv(out, relative_error_curve(val, test, targets));
      } else if (study_name == "subsample") {
        const auto targets = targets_or_default(study_targets);
        std::vector<std::uint64_t> seeds(study_seeds);
        std::iota(seeds.begin(), seeds.end(), seed_base);
        const auto test = LabeledScores::from(require_split(ds, Split::test));
        const auto rows = subsampling_study(require_split(ds, Split::validation), test, fractions,
                                            targets, seeds, {min_fp_count, study_opt.threads});
        auto out = open_out(out_path(study_opt, "subsample.csv"));
        write_subsample_csv(out, rows);
      } else if (study_name == "table1") {
        const auto cmp = ensemble_vs_members(require_split(ds, Split::test), fpr_max);
        auto out = open_out(out_path(study_opt, "table1.csv"));
        write_comparison_csv(out, cmp);
      } else if (study_name == "errors") {
        const auto g = uncertainty_by_correctness(require_split(ds, Split::test),
                                                  decision_threshold, measure, study_opt.threads);
        auto groups = open_out(out_path(study_opt, "errors.csv"));
        write_groups_csv(groups, g);
        auto h1 = open_out(out_path(study_opt, "errors_hist_" + g.first_name + ".csv"));
        write_histogram_csv(h1, histogram(g.first, spec));
        auto h2 = open_out(out_path(study_opt, "errors_hist_" + g.second_name + ".csv"));
        write_histogram_csv(h2, histogram(g.second, spec));
        if (g.empty_group) std::cerr << "warning: one group is empty\n";
      } else {
        // Families with training samples count as seen.
        const auto known = families_in(filter_split(ds, Split::train));
        const auto g = uncertainty_by_novelty(require_split(ds, Split::test), known, measure,
                                              study_opt.threads);
        auto groups = open_out(out_path(study_opt, "novelty.csv"));
        write_groups_csv(groups, g);
        auto h1 = open_out(out_path(study_opt, "novelty_hist_" + g.first_name + ".csv"));
        write_histogram_csv(h1, histogram(g.first, spec));
        auto h2 = open_out(out_path(study_opt, "novelty_hist_" + g.second_name + ".csv"));
        write_histogram_csv(h2, histogram(g.second, spec));
        if (g.empty_group) std::cerr << "warning: one group is empty\n";
      }
    } else if (*synth) {
      SynthConfig cfg;
      if (!synth_config.empty()) {
        std::ifstream in(synth_config, std::ios::binary);
        if (!in) throw data_error("cannot open '" + synth_config + "'");
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
          throw data_error("synth config: " + std::string(e.what()));
        }
        cfg = synth_config_from_json(j);
      }
      if (synth_seed) cfg.seed = *synth_seed;
      const auto ds = generate(cfg, synth_opt.threads);
      const fs::path path(synth_output);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      const auto format = synth_opt.format.empty() ? format_from_path(path)
                          : synth_opt.format == "csv" ? DataFormat::csv
                                                      : DataFormat::jsonl;
      save_dataset(path, ds, format);
      print_counts(ds);
    }
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
