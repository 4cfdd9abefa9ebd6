#pragma once

// Per-window KPI / PM-counter features computed from an event trace, plus the
// variance-threshold selection and min-max normalization applied before
// model input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sliceguard/common.hpp"
#include "sliceguard/sim_core.hpp"

namespace sliceguard::features {

using json = nlohmann::json;

enum Feature : std::size_t {
  kRegSuccessRate,
  kPduEstabSuccessRate,
  kMeanPduSessions,
  kMaxPduSessions,
  kAmfInitRegRequests,
  kAmfInitRegSuccess,
  kAmfServiceReqAttempted,
  kAmfServiceReqSuccess,
  kSmfPduCreateRequests,
  kSmfPduCreateSuccess,
  kSmfPduCreateFailed,
  kSmfMaxPduEstabTimeMs,
  kSmfPduReleasedAmfInitiated,
  kNssfSelectionRequests,
  kNssfSelectionSuccess,
  kNssfSelectionFailed,
  kAmfInitRegFailed,
  kNumFeatures
};

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "reg_success_rate_ns",
    "pdu_estab_success_rate_ns",
    "mean_pdu_sessions_ns",
    "max_pdu_sessions_ns",
    "amf_init_reg_requests",
    "amf_init_reg_success",
    "amf_service_req_attempted",
    "amf_service_req_success",
    "smf_pdu_create_requests",
    "smf_pdu_create_success",
    "smf_pdu_create_failed",
    "smf_max_pdu_estab_time_ms",
    "smf_pdu_released_amf_initiated",
    "nssf_selection_requests",
    "nssf_selection_success",
    "nssf_selection_failed",
    "amf_init_reg_failed",
};

using FeatureVector = std::array<double, kNumFeatures>;

enum class Label : std::uint8_t { Benign, RSA, TSA, Unlabeled };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::Benign: return "Benign";
    case Label::RSA: return "RSA";
    case Label::TSA: return "TSA";
    case Label::Unlabeled: return "Unlabeled";
  }
  return "?";
}

inline Label parse_label(std::string_view s) {
  if (s == "Benign") return Label::Benign;
  if (s == "RSA") return Label::RSA;
  if (s == "TSA") return Label::TSA;
  if (s == "Unlabeled") return Label::Unlabeled;
  throw Error("unknown label '" + std::string(s) + "'");
}

inline bool is_attack(Label l) { return l == Label::RSA || l == Label::TSA; }

struct FeatureRow {
  double window_start = 0.0;
  FeatureVector values{};
  Label label = Label::Unlabeled;
};

struct FeatureMatrix {
  double window = 1.0;
  std::string trace_digest;
  std::vector<FeatureRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

// Per-slice statistics of one window; the 17 aggregated features and the
// optional per-instance columns are both derived from it.
struct SliceWindowStats {
  double reg_attempts = 0, reg_success = 0;
  double estab_attempts = 0, estab_success = 0, estab_failed = 0;
  double max_estab_ms = 0;
  double mean_sessions = 0, max_sessions = 0;
};

struct WindowStats {
  double window_start = 0.0;
  std::vector<SliceWindowStats> slices;
  double service_attempted = 0, service_success = 0;
  double released_amf_initiated = 0;
  double nssf_requests = 0, nssf_success = 0, nssf_failed = 0;
};

namespace detail {

inline double rate(double ok, double attempts) { return attempts > 0 ? ok / attempts : 1.0; }

inline Label label_for(const sim::EventTrace& trace, double window_start) {
  if (trace.scenario == sim::Scenario::Benign || !trace.attack_window) return Label::Benign;
  if (window_start < trace.attack_window->first) return Label::Benign;
  return trace.scenario == sim::Scenario::RSA ? Label::RSA : Label::TSA;
}

// Tracks which slice (if any) holds each UE's PDU session and integrates
// per-slice session counts over time.
class SessionLedger {
 public:
  explicit SessionLedger(std::size_t num_slices) : counts_(num_slices, 0) {}

  void begin_window(double start, std::vector<SliceWindowStats>& out) {
    last_t_ = start;
    for (std::size_t s = 0; s < counts_.size(); ++s) out[s].max_sessions = counts_[s];
  }

  void advance(double t, std::vector<SliceWindowStats>& out) {
    for (std::size_t s = 0; s < counts_.size(); ++s) out[s].mean_sessions += counts_[s] * (t - last_t_);
    last_t_ = t;
  }

  void apply(const sim::SignalingEvent& e, std::vector<SliceWindowStats>& out) {
    using P = sim::ProcedureKind;
    auto it = holder_.find(e.ue_id);
    const bool has = it != holder_.end();
    auto drop = [&] {
      if (has) {
        counts_[it->second] -= 1;
        holder_.erase(it);
      }
    };
    if (!e.ok()) {
      drop();
    } else if (e.kind == P::PduSessionEstablishment) {
      drop();
      holder_[e.ue_id] = e.slice.index;
      counts_[e.slice.index] += 1;
      out[e.slice.index].max_sessions = std::max(out[e.slice.index].max_sessions, counts_[e.slice.index]);
    } else if (e.kind == P::PduSessionRelease || e.kind == P::UeReleasePduSession ||
               e.kind == P::GnbReleasePduSession || e.kind == P::Deregistration) {
      drop();
    }
  }

  void end_window(double end, double width, std::vector<SliceWindowStats>& out) {
    advance(end, out);
    for (auto& s : out) s.mean_sessions /= width;
  }

 private:
  std::vector<double> counts_;
  std::unordered_map<std::uint32_t, std::size_t> holder_;
  double last_t_ = 0.0;
};

}  // namespace detail

// Tumbling-window statistics over [0, emulation_duration). Session counts
// carry over from one window to the next.
inline std::vector<WindowStats> compute_window_stats(const sim::EventTrace& trace, double window) {
  if (!(window > 0)) throw ConfigError("window", "must be positive");
  std::vector<WindowStats> out;
  if (trace.events.empty()) return out;
  const std::size_t num_slices = trace.config.num_slices;
  const double horizon = trace.config.emulation_duration;
  const auto num_windows = static_cast<std::size_t>(std::ceil(horizon / window));
  out.resize(num_windows);
  detail::SessionLedger ledger(num_slices);
  std::size_t next = 0;
  const auto& events = trace.events;
  for (std::size_t w = 0; w < num_windows; ++w) {
    auto& ws = out[w];
    ws.window_start = static_cast<double>(w) * window;
    const double end = ws.window_start + window;
    ws.slices.assign(num_slices, {});
    ledger.begin_window(ws.window_start, ws.slices);
    for (; next < events.size() && events[next].timestamp < end; ++next) {
      const auto& e = events[next];
      if (e.slice.index >= num_slices) throw Error("event slice out of range");
      ledger.advance(e.timestamp, ws.slices);
      ledger.apply(e, ws.slices);
      auto& sl = ws.slices[e.slice.index];
      using P = sim::ProcedureKind;
      switch (e.kind) {
        case P::Registration:
          sl.reg_attempts += 1;
          sl.reg_success += e.ok();
          break;
        case P::PduSessionEstablishment:
          sl.estab_attempts += 1;
          if (e.ok()) {
            sl.estab_success += 1;
            sl.max_estab_ms = std::max(sl.max_estab_ms, e.latency_ms);
          } else {
            sl.estab_failed += 1;
          }
          break;
        case P::Uplink:
        case P::Downlink:
          ws.service_attempted += 1;
          ws.service_success += e.ok();
          break;
        case P::PduSessionRelease:
        case P::GnbReleasePduSession: ws.released_amf_initiated += e.ok(); break;
        case P::NsSelection:
          ws.nssf_requests += 1;
          (e.ok() ? ws.nssf_success : ws.nssf_failed) += 1;
          break;
        default: break;
      }
    }
    ledger.end_window(end, window, ws.slices);
  }
  return out;
}

inline FeatureVector aggregate(const WindowStats& ws) {
  FeatureVector f{};
  double reg_att = 0, reg_ok = 0, est_att = 0, est_ok = 0, est_fail = 0, max_ms = 0, mean_sum = 0, max_s = 0;
  for (const auto& s : ws.slices) {
    reg_att += s.reg_attempts;
    reg_ok += s.reg_success;
    est_att += s.estab_attempts;
    est_ok += s.estab_success;
    est_fail += s.estab_failed;
    max_ms = std::max(max_ms, s.max_estab_ms);
    mean_sum += s.mean_sessions;
    max_s = std::max(max_s, s.max_sessions);
  }
  f[kRegSuccessRate] = detail::rate(reg_ok, reg_att);
  f[kPduEstabSuccessRate] = detail::rate(est_ok, est_att);
  f[kMeanPduSessions] = ws.slices.empty() ? 0.0 : mean_sum / static_cast<double>(ws.slices.size());
  f[kMaxPduSessions] = max_s;
  f[kAmfInitRegRequests] = reg_att;
  f[kAmfInitRegSuccess] = reg_ok;
  f[kAmfServiceReqAttempted] = ws.service_attempted;
  f[kAmfServiceReqSuccess] = ws.service_success;
  f[kSmfPduCreateRequests] = est_att;
  f[kSmfPduCreateSuccess] = est_ok;
  f[kSmfPduCreateFailed] = est_fail;
  f[kSmfMaxPduEstabTimeMs] = max_ms;
  f[kSmfPduReleasedAmfInitiated] = ws.released_amf_initiated;
  f[kNssfSelectionRequests] = ws.nssf_requests;
  f[kNssfSelectionSuccess] = ws.nssf_success;
  f[kNssfSelectionFailed] = ws.nssf_failed;
  f[kAmfInitRegFailed] = reg_att - reg_ok;
  return f;
}

inline FeatureMatrix compute_window_features(const sim::EventTrace& trace, double window = 1.0) {
  FeatureMatrix m;
  m.window = window;
  m.trace_digest = trace.digest();
  const auto stats = compute_window_stats(trace, window);
  m.rows.reserve(stats.size());
  for (const auto& ws : stats) m.rows.push_back({ws.window_start, aggregate(ws), detail::label_for(trace, ws.window_start)});
  return m;
}

// Per-instance layout: features marked per-NS or per-SMF get one column per
// slice instead of being aggregated. Column count depends on num_slices.
struct WideMatrix {
  std::vector<std::string> names;
  std::vector<double> window_start;
  std::vector<std::vector<double>> values;
  std::vector<Label> labels;
};

inline WideMatrix compute_instance_features(const sim::EventTrace& trace, double window = 1.0) {
  WideMatrix m;
  const std::size_t ns = trace.config.num_slices;
  auto per_slice = [&](std::string_view base) {
    for (std::size_t s = 0; s < ns; ++s) m.names.push_back(std::string(base) + "_s" + std::to_string(s));
  };
  per_slice("reg_success_rate");
  per_slice("pdu_estab_success_rate");
  per_slice("mean_pdu_sessions");
  per_slice("max_pdu_sessions");
  for (auto n : {"amf_init_reg_requests", "amf_init_reg_success", "amf_service_req_attempted", "amf_service_req_success"})
    m.names.emplace_back(n);
  per_slice("smf_pdu_create_requests");
  per_slice("smf_pdu_create_success");
  per_slice("smf_pdu_create_failed");
  per_slice("smf_max_pdu_estab_time_ms");
  for (auto n : {"smf_pdu_released_amf_initiated", "nssf_selection_requests", "nssf_selection_success",
                 "nssf_selection_failed", "amf_init_reg_failed"})
    m.names.emplace_back(n);

  for (const auto& ws : compute_window_stats(trace, window)) {
    std::vector<double> row;
    row.reserve(m.names.size());
    double reg_att = 0, reg_ok = 0;
    for (const auto& s : ws.slices) row.push_back(detail::rate(s.reg_success, s.reg_attempts));
    for (const auto& s : ws.slices) row.push_back(detail::rate(s.estab_success, s.estab_attempts));
    for (const auto& s : ws.slices) row.push_back(s.mean_sessions);
    for (const auto& s : ws.slices) row.push_back(s.max_sessions);
    for (const auto& s : ws.slices) {
      reg_att += s.reg_attempts;
      reg_ok += s.reg_success;
    }
    row.insert(row.end(), {reg_att, reg_ok, ws.service_attempted, ws.service_success});
    for (const auto& s : ws.slices) row.push_back(s.estab_attempts);
    for (const auto& s : ws.slices) row.push_back(s.estab_success);
    for (const auto& s : ws.slices) row.push_back(s.estab_failed);
    for (const auto& s : ws.slices) row.push_back(s.max_estab_ms);
    row.insert(row.end(), {ws.released_amf_initiated, ws.nssf_requests, ws.nssf_success, ws.nssf_failed,
                           reg_att - reg_ok});
    m.window_start.push_back(ws.window_start);
    m.values.push_back(std::move(row));
    m.labels.push_back(detail::label_for(trace, ws.window_start));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Selection and normalization operate on row-major sample matrices.

using Matrix = Eigen::MatrixXd;

inline Matrix to_matrix(const std::vector<FeatureVector>& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < kNumFeatures; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline Matrix to_matrix(const FeatureMatrix& fm) {
  std::vector<FeatureVector> rows;
  rows.reserve(fm.size());
  for (const auto& r : fm.rows) rows.push_back(r.values);
  return to_matrix(rows);
}

// Column variances with an n-1 denominator.
inline Eigen::VectorXd column_variance(const Matrix& x) {
  const auto n = x.rows();
  if (n < 2) return Eigen::VectorXd::Zero(x.cols());
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n - 1)).transpose();
}

// Indices of columns whose variance exceeds tau.
inline std::vector<std::size_t> variance_threshold_select(const Matrix& x, double tau = 1e-6) {
  if (x.rows() == 0) throw Error("variance_threshold_select: empty matrix");
  const auto var = column_variance(x);
  std::vector<std::size_t> keep;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (var(j) > tau) keep.push_back(static_cast<std::size_t>(j));
  if (keep.empty()) throw Error("variance_threshold_select: every feature eliminated (degenerate data)");
  return keep;
}

inline Matrix select_columns(const Matrix& x, const std::vector<std::size_t>& cols) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= static_cast<std::size_t>(x.cols())) throw Error("select_columns: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(cols[j]));
  }
  return out;
}

struct NormalizerParams {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t width() const { return min.size(); }
};

inline void to_json(json& j, const NormalizerParams& p) { j = json{{"min", p.min}, {"max", p.max}}; }
inline void from_json(const json& j, NormalizerParams& p) {
  j.at("min").get_to(p.min);
  j.at("max").get_to(p.max);
  if (p.min.size() != p.max.size()) throw Error("normalizer: min/max length mismatch");
  for (std::size_t i = 0; i < p.min.size(); ++i)
    if (p.max[i] < p.min[i]) throw Error("normalizer: max < min");
}

inline NormalizerParams fit_normalizer(const Matrix& x) {
  if (x.rows() == 0) throw Error("fit_normalizer: empty matrix");
  NormalizerParams p;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    p.min.push_back(x.col(j).minCoeff());
    p.max.push_back(x.col(j).maxCoeff());
  }
  return p;
}

// (x - min) / (max - min), clamped to [0, 1]; constant columns map to 0.
inline Matrix apply_normalizer(const Matrix& x, const NormalizerParams& p) {
  if (static_cast<std::size_t>(x.cols()) != p.width()) throw Error("apply_normalizer: width mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double lo = p.min[static_cast<std::size_t>(j)];
    const double span = p.max[static_cast<std::size_t>(j)] - lo;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out(i, j) = span > 0 ? std::clamp((x(i, j) - lo) / span, 0.0, 1.0) : 0.0;
  }
  return out;
}

struct Sequence {
  std::vector<FeatureVector> steps;
  Label label = Label::Unlabeled;
  double window_start = 0.0;  // of the final window
};

// Sliding sequences of `lookback` consecutive windows; each carries the label
// of its final window.
inline std::vector<Sequence> windowize(const FeatureMatrix& m, std::size_t lookback) {
  if (lookback == 0) throw ConfigError("lookback", "must be at least 1");
  std::vector<Sequence> out;
  if (m.size() < lookback) return out;
  out.reserve(m.size() - lookback + 1);
  for (std::size_t end = lookback; end <= m.size(); ++end) {
    Sequence s;
    for (std::size_t i = end - lookback; i < end; ++i) s.steps.push_back(m.rows[i].values);
    s.label = m.rows[end - 1].label;
    s.window_start = m.rows[end - 1].window_start;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: window_start, the 17 features, label.

inline void write_feature_csv(std::ostream& out, const FeatureMatrix& m) {
  out << "window_start";
  for (auto n : kFeatureNames) out << ',' << n;
  out << ",label\n";
  for (const auto& r : m.rows) {
    out << format_double(r.window_start);
    for (double v : r.values) out << ',' << format_double(v);
    out << ',' << to_string(r.label) << '\n';
  }
}

inline FeatureMatrix read_feature_csv(std::istream& in) {
  FeatureMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw Error("feature csv: missing header");
  const auto header = split(line, ',');
  if (header.size() != kNumFeatures + 2 || header.front() != "window_start" || header.back() != "label")
    throw Error("feature csv: unexpected header");
  for (std::size_t j = 0; j < kNumFeatures; ++j)
    if (header[j + 1] != kFeatureNames[j]) throw Error("feature csv: column " + std::to_string(j + 1) + " misnamed");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != kNumFeatures + 2) throw Error("feature csv: wrong cell count");
    FeatureRow r;
    r.window_start = parse_double(cells[0]);
    for (std::size_t j = 0; j < kNumFeatures; ++j) r.values[j] = parse_double(cells[j + 1]);
    r.label = parse_label(cells.back());
    m.rows.push_back(r);
  }
  if (m.rows.size() >= 2) m.window = m.rows[1].window_start - m.rows[0].window_start;
  return m;
}

}  // namespace sliceguard::features
