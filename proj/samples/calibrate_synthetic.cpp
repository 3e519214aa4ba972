// Fits each calibration variant on a synthetic ensemble and reports the test
// operating point at a few target false positive rates.
#include <iomanip>
#include <iostream>

#include <lowfpr/lowfpr.hpp>

using namespace lowfpr;

int main(int argc, char** argv) {
  SynthConfig cfg;
  cfg.n_benign = 200000;
  cfg.n_malicious = 40000;
  cfg.benign_logit_mean = -3.0;
  cfg.malicious_logit_mean = 2.0;
  cfg.logit_sd = 1.0;
  cfg.member_noise_sd_base = 0.3;
  cfg.member_noise_sd_novel = 1.5;
  cfg.ambiguous_fraction = 0.05;
  cfg.seed = argc > 1 ? std::stoull(argv[1]) : 0;

  const auto ds = generate(cfg);
  const auto val = ScoredSamples::from(filter_split(ds, Split::validation));
  const auto test = ScoredSamples::from(filter_split(ds, Split::test));

  std::cout << std::setw(8) << "variant" << std::setw(10) << "target" << std::setw(10) << "tpr"
            << std::setw(12) << "fpr" << std::setw(10) << "combined" << '\n';
  for (double target : {1e-2, 1e-3, 1e-4}) {
    for (auto v : {Variant::global_only, Variant::lv1, Variant::lv2, Variant::lv3}) {
      const auto fit = fit_local(val, target, v);
      const auto ev = evaluate_calibration(test, fit, target);
      std::cout << std::setw(8) << to_string(v) << std::setw(10) << target << std::setw(10)
                << std::setprecision(4) << ev.tpr << std::setw(12) << ev.actualized_fpr
                << std::setw(10) << ev.combined << '\n';
    }
  }
}
