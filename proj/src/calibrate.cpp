#include "axis/calibrate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace axis {

RescaleResult spectral_rescale(const MergedDelta& merged,
                               const ParamSet& theta_pre) {
  RescaleResult result;
  result.merged = merged;
  for (auto& [name, factors] : result.merged.layers) {
    if (!theta_pre.contains(name) ||
        theta_pre.at(name).kind != Kind::MatrixKind) {
      throw Error(ErrorCode::SchemaMismatch,
                  "merged layer missing from pre-trained parameters: " + name);
    }
    const double s_max_merged =
        factors.s.empty() ? 0.0 : factors.s.front();
    if (!(s_max_merged > 0.0)) {
      result.warnings.push_back("layer " + name +
                                ": zero merged delta, rescale skipped");
      continue;
    }

    const SvdFactors pre = svd(theta_pre.at(name).as_matrix(), 0.0);
    const double pre_max = pre.s.empty() ? 0.0 : pre.s.front();
    if (!(pre_max > 0.0)) {
      throw Error(ErrorCode::DegenerateLayer,
                  "pre-trained layer is zero: " + name);
    }
    const double floor = 1e-10 * pre_max;
    double pre_min = pre_max;
    for (double s : pre.s) {
      if (s > floor) pre_min = s;
    }

    const double gamma = pre_min / s_max_merged;
    for (double& s : factors.s) s *= gamma;
    result.gamma[name] = gamma;
  }
  return result;
}

CalibrationReport interpolate_eval(const ParamSet& theta_pre,
                                   const MergedDelta& merged,
                                   const std::vector<double>& alphas,
                                   const Evaluator& evaluator) {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0) || alphas[i] > 1.0) {
      throw Error(ErrorCode::InvalidInput, "alpha values must lie in [0, 1]");
    }
    if (i > 0 && !(alphas[i] > alphas[i - 1])) {
      throw Error(ErrorCode::InvalidInput,
                  "alpha values must be strictly increasing");
    }
  }

  std::map<std::string, Matrix> matrix_deltas;
  for (const auto& [name, factors] : merged.layers) {
    matrix_deltas.emplace(name, reconstruct(factors.u, factors.s, factors.v));
  }

  CalibrationReport report;
  report.alphas = alphas;
  for (double alpha : alphas) {
    const ParamSet blended =
        apply_delta(theta_pre, matrix_deltas, merged.vector_deltas, alpha);
    try {
      report.accuracies.push_back(evaluator(blended));
    } catch (const Error& e) {
      throw Error(e.code(), "evaluator failed at alpha " +
                                std::to_string(alpha) + ": " + e.what());
    }
  }
  return report;
}

void write_calibration_csv(const CalibrationReport& report,
                           const std::string& report_path,
                           const std::string& gamma_path) {
  std::ofstream out(report_path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + report_path);
  }
  out << "alpha,accuracy\n";
  char buf[64];
  for (std::size_t i = 0; i < report.alphas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", report.alphas[i],
                  report.accuracies[i]);
    out << buf;
  }
  if (!out.flush()) {
    throw Error(ErrorCode::IoError, "write failed: " + report_path);
  }

  std::ofstream gout(gamma_path);
  if (!gout) {
    throw Error(ErrorCode::IoError, "cannot open " + gamma_path);
  }
  bool first = true;
  for (const auto& [name, unused] : report.gamma) {
    (void)unused;
    gout << (first ? "" : ",") << name;
    first = false;
  }
  gout << "\n";
  first = true;
  for (const auto& [name, gamma] : report.gamma) {
    (void)name;
    std::snprintf(buf, sizeof(buf), "%.10g", gamma);
    gout << (first ? "" : ",") << buf;
    first = false;
  }
  gout << "\n";
  if (!gout.flush()) {
    throw Error(ErrorCode::IoError, "write failed: " + gamma_path);
  }
}

}  // namespace axis
