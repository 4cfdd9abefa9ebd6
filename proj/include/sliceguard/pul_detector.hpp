#pragma once

// Positive-unlabeled detector: the LSTM-Autoencoder's encoder maps windows to
// latent codes, k-means (k = 2) splits the codes, and the labeled benign
// subset decides which cluster is benign.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sliceguard/autoencoder.hpp"
#include "sliceguard/common.hpp"
#include "sliceguard/features.hpp"
#include "sliceguard/kmeans.hpp"

namespace sliceguard::detect {

using json = nlohmann::json;

enum class Verdict : std::uint8_t { Benign, Attack };

inline std::string_view to_string(Verdict v) { return v == Verdict::Benign ? "Benign" : "Attack"; }

inline Verdict parse_verdict(std::string_view s) {
  if (s == "Benign") return Verdict::Benign;
  if (s == "Attack") return Verdict::Attack;
  throw Error("unknown verdict '" + std::string(s) + "'");
}

using ClusterMap = std::array<Verdict, 2>;

// The cluster holding most labeled positives is benign; an exact tie makes
// cluster 0 benign.
inline ClusterMap assign_cluster_labels(const std::vector<std::size_t>& assignments, const std::vector<bool>& labeled_mask) {
  if (assignments.size() != labeled_mask.size()) throw Error("assign_cluster_labels: length mismatch");
  std::array<std::size_t, 2> votes{0, 0};
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (!labeled_mask[i]) continue;
    if (assignments[i] > 1) throw Error("assign_cluster_labels: expected two clusters");
    ++votes[assignments[i]];
  }
  if (votes[0] + votes[1] == 0) throw Error("assign_cluster_labels: no labeled positives");
  if (votes[1] > votes[0]) return {Verdict::Attack, Verdict::Benign};
  return {Verdict::Benign, Verdict::Attack};
}

struct Preprocessing {
  std::vector<std::size_t> selected;
  features::NormalizerParams normalizer;  // over the selected columns
};

// Min-max fit on all features, then drop columns whose normalized variance
// does not exceed tau.
inline Preprocessing fit_preprocessing(const std::vector<features::FeatureVector>& rows, double tau) {
  const auto x = features::to_matrix(rows);
  const auto full = features::fit_normalizer(x);
  Preprocessing p;
  p.selected = features::variance_threshold_select(features::apply_normalizer(x, full), tau);
  for (auto j : p.selected) {
    p.normalizer.min.push_back(full.min[j]);
    p.normalizer.max.push_back(full.max[j]);
  }
  return p;
}

// Model input for feature rows (lookback 1).
inline nn::SequenceSet model_inputs(const nn::AutoencoderModel& model, const std::vector<features::FeatureVector>& rows) {
  if (model.arch().lookback != 1) throw Error("row-level inference requires lookback 1");
  const auto x = features::apply_normalizer(features::select_columns(features::to_matrix(rows), model.selected),
                                            model.normalizer);
  return nn::make_sequences(x);
}

inline bool looks_unnormalized(const nn::SequenceSet& data) {
  for (const auto& s : data.steps)
    if (s.size() > 0 && (s.minCoeff() < -0.5f || s.maxCoeff() > 1.5f)) return true;
  return false;
}

// Latent codes; warns once on stderr when the input is far outside [0, 1].
inline Eigen::MatrixXd encode(const nn::AutoencoderModel& model, const nn::SequenceSet& data) {
  if (data.width() != 0 && data.width() != model.arch().input_width) throw Error("encode: feature dimension mismatch");
  if (looks_unnormalized(data)) std::cerr << "warning: encoder input looks unnormalized (values far outside [0,1])\n";
  return nn::encode(model, data);
}

struct PulDetector {
  nn::AutoencoderModel model;
  Eigen::MatrixXd centroids;  // 2 x code_width
  ClusterMap cluster_to_class{Verdict::Benign, Verdict::Attack};
  cluster::KMeansConfig kmeans;
  double inertia = 0.0;
  // Reconstruction-error threshold calibrated on the training rows, used by
  // the baseline detector in calibration mode.
  double calibrated_alpha = 0.0;
};

struct PulOptions {
  nn::AutoencoderArch arch;  // input_width is set from the feature selection
  nn::TrainConfig train;
  cluster::KMeansConfig kmeans;
  double variance_tau = 1e-6;
  double calibration_quantile = 0.95;
};

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile: empty input");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Trains the autoencoder on every row (labeled or not), clusters the
// training codes and maps clusters to classes via the labeled subset.
inline PulDetector fit_pul_detector(const std::vector<features::FeatureVector>& rows,
                                    const std::vector<bool>& labeled_mask, const PulOptions& opt) {
  if (rows.size() != labeled_mask.size()) throw Error("fit_pul_detector: labeled mask length mismatch");
  if (std::none_of(labeled_mask.begin(), labeled_mask.end(), [](bool b) { return b; }))
    throw Error("fit_pul_detector: no labeled positives");
  opt.kmeans.validate();
  if (opt.kmeans.k != 2) throw ConfigError("kmeans.k", "the detector needs exactly two clusters");
  const auto prep = fit_preprocessing(rows, opt.variance_tau);
  auto arch = opt.arch;
  arch.input_width = prep.selected.size();
  if (arch.lookback != 1) throw ConfigError("lookback", "dataset rows are independent windows; lookback must be 1");
  const auto x = features::apply_normalizer(features::select_columns(features::to_matrix(rows), prep.selected),
                                            prep.normalizer);
  const auto data = nn::make_sequences(x);

  PulDetector det;
  det.model = nn::train_autoencoder(data, arch, opt.train);
  det.model.selected = prep.selected;
  det.model.normalizer = prep.normalizer;
  det.kmeans = opt.kmeans;
  const auto codes = nn::encode(det.model, data);
  auto km = cluster::kmeans_fit(codes, opt.kmeans);
  det.centroids = km.centroids;
  det.inertia = km.inertia;
  det.cluster_to_class = assign_cluster_labels(km.assignments, labeled_mask);
  det.calibrated_alpha = quantile(nn::reconstruction_errors(det.model, data), opt.calibration_quantile);
  return det;
}

inline std::vector<Verdict> predict_codes(const PulDetector& det, const Eigen::MatrixXd& codes) {
  if (codes.cols() != det.centroids.cols()) throw Error("predict: latent width mismatch");
  std::vector<Verdict> out;
  out.reserve(static_cast<std::size_t>(codes.rows()));
  for (Eigen::Index i = 0; i < codes.rows(); ++i)
    out.push_back(det.cluster_to_class[cluster::nearest_centroid(det.centroids, codes.row(i))]);
  return out;
}

inline std::vector<Verdict> predict(const PulDetector& det, const std::vector<features::FeatureVector>& rows) {
  if (rows.empty()) return {};
  return predict_codes(det, detect::encode(det.model, model_inputs(det.model, rows)));
}

// ---------------------------------------------------------------------------

inline json detector_to_json(const PulDetector& d) {
  json j;
  j["format"] = "sliceguard-detector/1";
  j["autoencoder"] = nn::model_to_json(d.model);
  j["kmeans"] = d.kmeans;
  j["centroids"] = nn::detail::matrix_to_json(d.centroids);
  j["cluster_to_class"] = {to_string(d.cluster_to_class[0]), to_string(d.cluster_to_class[1])};
  j["inertia"] = d.inertia;
  j["calibrated_alpha"] = d.calibrated_alpha;
  return j;
}

inline PulDetector detector_from_json(const json& j) {
  if (j.value("format", std::string{}) != "sliceguard-detector/1") throw Error("detector: unsupported format");
  PulDetector d;
  d.model = nn::model_from_json(j.at("autoencoder"));
  d.kmeans = j.at("kmeans").get<cluster::KMeansConfig>();
  d.centroids.resize(j.at("centroids").at("rows").get<Eigen::Index>(), j.at("centroids").at("cols").get<Eigen::Index>());
  nn::detail::matrix_from_json(j.at("centroids"), d.centroids);
  if (d.centroids.rows() != 2 || static_cast<std::size_t>(d.centroids.cols()) != d.model.arch().code_width())
    throw Error("detector: centroid shape inconsistent with arch");
  const auto& map = j.at("cluster_to_class");
  d.cluster_to_class = {parse_verdict(map.at(0).get<std::string>()), parse_verdict(map.at(1).get<std::string>())};
  if (d.cluster_to_class[0] == d.cluster_to_class[1]) throw Error("detector: cluster_to_class must be a bijection");
  d.inertia = j.at("inertia").get<double>();
  d.calibrated_alpha = j.at("calibrated_alpha").get<double>();
  return d;
}

}  // namespace sliceguard::detect
