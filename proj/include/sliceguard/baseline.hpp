#pragma once

// Reconstruction-error threshold detector sharing the autoencoder with the
// PUL detector.

#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "sliceguard/autoencoder.hpp"
#include "sliceguard/common.hpp"
#include "sliceguard/features.hpp"
#include "sliceguard/pul_detector.hpp"

namespace sliceguard::baseline {

using detect::Verdict;

struct ThresholdConfig {
  double alpha = 0.1408;  // normalized feature space

  void validate() const {
    if (!(alpha > 0)) throw ConfigError("alpha", "must be positive");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ThresholdConfig, alpha)

// Boundary inclusive: err == alpha is benign.
inline Verdict classify_threshold(double err, const ThresholdConfig& cfg) {
  return err <= cfg.alpha ? Verdict::Benign : Verdict::Attack;
}

inline std::vector<double> reconstruction_errors(const nn::AutoencoderModel& model,
                                                 const std::vector<features::FeatureVector>& rows) {
  if (rows.empty()) return {};
  return nn::reconstruction_errors(model, detect::model_inputs(model, rows));
}

// Error of a single already-selected, normalized input vector.
inline double reconstruction_error(const nn::AutoencoderModel& model, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.arch().input_width)
    throw Error("reconstruction_error: feature dimension mismatch");
  return nn::reconstruction_errors(model, nn::make_sequences(x.transpose()))[0];
}

inline std::vector<Verdict> classify(const std::vector<double>& errors, const ThresholdConfig& cfg) {
  std::vector<Verdict> out;
  out.reserve(errors.size());
  for (double e : errors) out.push_back(classify_threshold(e, cfg));
  return out;
}

inline std::vector<Verdict> predict(const nn::AutoencoderModel& model, const std::vector<features::FeatureVector>& rows,
                                    const ThresholdConfig& cfg) {
  cfg.validate();
  return classify(reconstruction_errors(model, rows), cfg);
}

// Threshold at the given quantile of training reconstruction errors.
inline double calibrate_alpha(const std::vector<double>& training_errors, double q = 0.95) {
  if (!(q > 0 && q < 1)) throw ConfigError("calibration_quantile", "must be in (0, 1)");
  return detect::quantile(training_errors, q);
}

}  // namespace sliceguard::baseline
