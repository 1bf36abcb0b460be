#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "axis/merge.hpp"

namespace axis {

struct CalibrationReport {
  std::map<std::string, double> gamma;  // per-layer rescale factor
  std::vector<double> alphas;
  std::vector<double> accuracies;
};

struct RescaleResult {
  MergedDelta merged;
  std::map<std::string, double> gamma;
  std::vector<std::string> warnings;
};

// Data-free spectral calibration: per layer multiply every merged
// singular value by gamma = sigma_min(theta_pre) / sigma_max(delta_m),
// where sigma_min is the smallest pre-trained singular value above a
// relative floor of 1e-10. Singular vectors are untouched. Layers with a
// zero merged delta are skipped with a warning; a zero pre-trained layer
// is an error.
RescaleResult spectral_rescale(const MergedDelta& merged,
                               const ParamSet& theta_pre);

using Evaluator = std::function<double(const ParamSet&)>;

// Evaluates theta_pre + alpha * delta_m (vector deltas included) for each
// alpha in [0, 1]. The alpha = 0 row equals the evaluator's pre-trained
// accuracy exactly.
CalibrationReport interpolate_eval(const ParamSet& theta_pre,
                                   const MergedDelta& merged,
                                   const std::vector<double>& alphas,
                                   const Evaluator& evaluator);

// CSV emission: report as "alpha,accuracy" rows, gammas as a one-row
// sidecar with one column per layer.
void write_calibration_csv(const CalibrationReport& report,
                           const std::string& report_path,
                           const std::string& gamma_path);

}  // namespace axis
