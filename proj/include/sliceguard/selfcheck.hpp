#pragma once

// Built-in oracle suites behind `sliceguard selfcheck`: feature counters
// against a naive event scan, autoencoder gradients against finite
// differences, and k-means against brute-force 2-partitions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sliceguard/autoencoder.hpp"
#include "sliceguard/common.hpp"
#include "sliceguard/features.hpp"
#include "sliceguard/kmeans.hpp"
#include "sliceguard/sim_core.hpp"

namespace sliceguard::selfcheck {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0, failures = 0;
  std::string detail;
};

namespace detail {

// Counts one window by rescanning the trace from the start.
inline features::FeatureVector naive_window(const sim::EventTrace& tr, double start, double width) {
  using P = sim::ProcedureKind;
  const std::size_t S = tr.config.num_slices;
  const double end = start + width;
  std::map<std::uint32_t, std::size_t> holder;
  std::vector<double> count(S, 0.0), area(S, 0.0), peak(S, 0.0);
  double last = start;
  bool inside = false;
  double reg = 0, reg_ok = 0, est = 0, est_ok = 0, est_fail = 0, max_ms = 0, svc = 0, svc_ok = 0, rel = 0, ns = 0,
         ns_ok = 0, ns_fail = 0;
  for (const auto& e : tr.events) {
    if (e.timestamp >= end) break;
    if (!inside && e.timestamp >= start) {
      inside = true;
      peak = count;
    }
    if (inside) {
      for (std::size_t s = 0; s < S; ++s) area[s] += count[s] * (e.timestamp - last);
      last = e.timestamp;
    }
    auto it = holder.find(e.ue_id);
    const bool ok = e.outcome == sim::Outcome::Success;
    const bool ends_session = !ok || e.kind == P::PduSessionEstablishment || e.kind == P::PduSessionRelease ||
                              e.kind == P::UeReleasePduSession || e.kind == P::GnbReleasePduSession ||
                              e.kind == P::Deregistration;
    if (ends_session && it != holder.end()) {
      count[it->second] -= 1;
      holder.erase(it);
    }
    if (ok && e.kind == P::PduSessionEstablishment) {
      holder[e.ue_id] = e.slice.index;
      count[e.slice.index] += 1;
    }
    if (inside) {
      for (std::size_t s = 0; s < S; ++s) peak[s] = std::max(peak[s], count[s]);
      switch (e.kind) {
        case P::Registration: reg += 1, reg_ok += ok; break;
        case P::PduSessionEstablishment:
          est += 1, est_ok += ok, est_fail += !ok;
          if (ok) max_ms = std::max(max_ms, e.latency_ms);
          break;
        case P::Uplink:
        case P::Downlink: svc += 1, svc_ok += ok; break;
        case P::PduSessionRelease:
        case P::GnbReleasePduSession: rel += ok; break;
        case P::NsSelection: ns += 1, ns_ok += ok, ns_fail += !ok; break;
        default: break;
      }
    }
  }
  if (!inside) peak = count;
  double mean = 0, mx = 0;
  for (std::size_t s = 0; s < S; ++s) {
    area[s] += count[s] * (end - last);
    mean += area[s] / width;
    mx = std::max(mx, peak[s]);
  }
  features::FeatureVector f{};
  using namespace features;
  f[kRegSuccessRate] = reg > 0 ? reg_ok / reg : 1.0;
  f[kPduEstabSuccessRate] = est > 0 ? est_ok / est : 1.0;
  f[kMeanPduSessions] = mean / static_cast<double>(S);
  f[kMaxPduSessions] = mx;
  f[kAmfInitRegRequests] = reg;
  f[kAmfInitRegSuccess] = reg_ok;
  f[kAmfServiceReqAttempted] = svc;
  f[kAmfServiceReqSuccess] = svc_ok;
  f[kSmfPduCreateRequests] = est;
  f[kSmfPduCreateSuccess] = est_ok;
  f[kSmfPduCreateFailed] = est_fail;
  f[kSmfMaxPduEstabTimeMs] = max_ms;
  f[kSmfPduReleasedAmfInitiated] = rel;
  f[kNssfSelectionRequests] = ns;
  f[kNssfSelectionSuccess] = ns_ok;
  f[kNssfSelectionFailed] = ns_fail;
  f[kAmfInitRegFailed] = reg - reg_ok;
  return f;
}

inline bool close_rel(double a, double b, double rel) {
  return a == b || std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

inline SuiteResult feature_counters(std::uint64_t seed = 7, std::size_t windows = 60) {
  SuiteResult r{"feature-counters"};
  sim::NetworkConfig cfg;
  cfg.emulation_duration = 240;
  cfg.attack_start = 120;
  Rng rng(seed);
  for (auto sc : {sim::Scenario::Benign, sim::Scenario::RSA, sim::Scenario::TSA}) {
    const auto tr = sim::simulate(sc, cfg, rng.next());
    const auto fm = features::compute_window_features(tr);
    for (std::size_t n = 0; n < windows / 3; ++n) {
      const auto w = static_cast<std::size_t>(rng.below(fm.rows.size()));
      const auto want = detail::naive_window(tr, fm.rows[w].window_start, 1.0);
      ++r.cases;
      for (std::size_t j = 0; j < features::kNumFeatures; ++j)
        if (!detail::close_rel(fm.rows[w].values[j], want[j], 1e-12)) {
          ++r.failures;
          if (r.detail.empty())
            r.detail = std::string(features::kFeatureNames[j]) + " differs at t=" + format_double(fm.rows[w].window_start);
          break;
        }
    }
  }
  r.passed = r.failures == 0;
  return r;
}

inline SuiteResult gradients(std::uint64_t seed = 11, std::size_t instances = 5) {
  SuiteResult r{"gradient-check"};
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t n = 0; n < instances; ++n) {
    nn::AutoencoderArch a;
    a.input_width = 2 + rng.below(3);
    a.encoder = {3 + rng.below(4), 2 + rng.below(3)};
    a.decoder = {a.encoder[1], a.encoder[0]};
    a.lookback = 1 + rng.below(3);
    nn::Autoencoder<double> net(a);
    net.init_uniform(rng);
    for (auto& [p, len] : net.blocks())
      for (Eigen::Index i = 0; i < len; ++i) p[i] += 0.3 * rng.uniform(-1, 1);
    const Eigen::Index B = 3;
    std::vector<nn::Mat<double>> xs(a.lookback);
    for (auto& x : xs) x = nn::Mat<double>::NullaryExpr(a.input_width, B, [&] { return rng.uniform(); });
    nn::ForwardState<double> st;
    nn::forward(net, xs, st);
    nn::Autoencoder<double> g(a);
    g.set_zero();
    nn::backward(net, xs, st, g);
    auto pb = net.blocks();
    const auto gb = g.blocks();
    bool ok = true;
    for (std::size_t k = 0; k < pb.size(); ++k)
      for (Eigen::Index i = 0; i < pb[k].second; ++i) {
        const double old = pb[k].first[i], h = 1e-5;
        pb[k].first[i] = old + h;
        nn::forward(net, xs, st);
        const double lp = nn::reconstruction_loss(xs, st.y);
        pb[k].first[i] = old - h;
        nn::forward(net, xs, st);
        const double lm = nn::reconstruction_loss(xs, st.y);
        pb[k].first[i] = old;
        const double num = (lp - lm) / (2 * h), an = gb[k].first[i];
        const double err = std::abs(num - an);
        if (err > std::max(1e-6, 1e-4 * std::max(std::abs(num), std::abs(an)))) ok = false;
        if (err > 1e-6) worst = std::max(worst, err / std::max(std::abs(num), std::abs(an)));
      }
    ++r.cases;
    if (!ok) ++r.failures;
  }
  r.passed = r.failures == 0;
  r.detail = "worst relative error " + format_double(worst);
  return r;
}

inline SuiteResult kmeans_optimality(std::uint64_t seed = 13, std::size_t instances = 40) {
  SuiteResult r{"kmeans-brute-force"};
  Rng rng(seed);
  std::size_t matched = 0, monotone_fail = 0;
  for (std::size_t n = 0; n < instances; ++n) {
    const auto pts = static_cast<Eigen::Index>(2 + rng.below(7));
    const auto dims = static_cast<Eigen::Index>(1 + rng.below(4));
    Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(pts, dims, [&] { return rng.uniform(-5, 5); });
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 1; mask + 1 < (1u << pts); ++mask) {
      double sse = 0;
      for (int side = 0; side < 2; ++side) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dims);
        double cnt = 0;
        for (Eigen::Index i = 0; i < pts; ++i)
          if (((mask >> i) & 1u) == static_cast<unsigned>(side)) mean += x.row(i), cnt += 1;
        mean /= cnt;
        for (Eigen::Index i = 0; i < pts; ++i)
          if (((mask >> i) & 1u) == static_cast<unsigned>(side)) sse += (x.row(i) - mean).squaredNorm();
      }
      best = std::min(best, sse);
    }
    cluster::KMeansConfig cfg;
    const auto km = cluster::kmeans_fit(x, cfg);
    ++r.cases;
    if (km.inertia <= best * (1 + 1e-9) + 1e-12) ++matched;
    for (std::size_t i = 1; i < km.inertia_history.size(); ++i)
      if (km.inertia_history[i] > km.inertia_history[i - 1] * (1 + 1e-12)) {
        ++monotone_fail;
        break;
      }
  }
  r.failures = r.cases - matched + monotone_fail;
  r.passed = matched * 100 >= 95 * r.cases && monotone_fail == 0;
  r.detail = std::to_string(matched) + "/" + std::to_string(r.cases) + " optimal";
  return r;
}

inline std::vector<SuiteResult> run_all() { return {feature_counters(), gradients(), kmeans_optimality()}; }

}  // namespace sliceguard::selfcheck
