#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "sliceguard/features.hpp"

using namespace sliceguard;
using namespace sliceguard::features;
using P = sim::ProcedureKind;
using oracles::feature_oracle;
using oracles::session_deltas;

namespace {

sim::SignalingEvent ev(double t, std::uint32_t ue, P kind, std::uint16_t slice, bool ok = true, double ms = 0) {
  sim::SignalingEvent e;
  e.timestamp = t;
  e.ue_id = ue;
  e.kind = kind;
  e.slice = sim::SliceId{slice};
  e.outcome = ok ? sim::Outcome::Success : sim::Outcome::Failure;
  e.latency_ms = ms;
  e.nfs = sim::nfs_for(kind);
  e.procedure = kind;
  return e;
}

sim::EventTrace handmade(std::vector<sim::SignalingEvent> events, double duration = 3) {
  sim::EventTrace t;
  t.config.num_slices = 2;
  t.config.emulation_duration = duration;
  t.config.attack_start = duration / 2;
  t.events = std::move(events);
  return t;
}


}  // namespace

TEST(WindowFeatures, ThreeRegistrationsTwoSucceed) {
  const auto tr = handmade({ev(0.1, 1, P::Registration, 0), ev(0.2, 2, P::Registration, 1, false),
                            ev(0.3, 3, P::Registration, 0)});
  const auto m = compute_window_features(tr);
  ASSERT_EQ(m.size(), 3u);
  const auto& f = m.rows[0].values;
  EXPECT_DOUBLE_EQ(f[kRegSuccessRate], 2.0 / 3.0);
  EXPECT_EQ(f[kAmfInitRegRequests], 3);
  EXPECT_EQ(f[kAmfInitRegSuccess], 2);
  EXPECT_EQ(f[kAmfInitRegFailed], 1);
}

TEST(WindowFeatures, EmptyWindowIsNeutral) {
  const auto tr = handmade({ev(2.5, 1, P::Registration, 0)});
  const auto m = compute_window_features(tr);
  const auto& f = m.rows[0].values;
  EXPECT_EQ(f[kRegSuccessRate], 1.0);
  EXPECT_EQ(f[kPduEstabSuccessRate], 1.0);
  for (std::size_t j = 2; j < kNumFeatures; ++j) EXPECT_EQ(f[j], 0.0) << kFeatureNames[j];
}

TEST(WindowFeatures, SeventeenInOrder) {
  EXPECT_EQ(kNumFeatures, 17u);
  EXPECT_EQ(kFeatureNames.front(), "reg_success_rate_ns");
  EXPECT_EQ(kFeatureNames[11], "smf_max_pdu_estab_time_ms");
  EXPECT_EQ(kFeatureNames.back(), "amf_init_reg_failed");
}

TEST(WindowFeatures, SessionsCarryOverAndLatencyMax) {
  const auto tr = handmade({ev(0.5, 1, P::PduSessionEstablishment, 0, true, 30),
                            ev(0.75, 2, P::PduSessionEstablishment, 0, true, 45),
                            ev(0.9, 3, P::PduSessionEstablishment, 1, false, 99),
                            ev(1.5, 1, P::UeReleasePduSession, 0)});
  const auto m = compute_window_features(tr);
  EXPECT_EQ(m.rows[0].values[kSmfMaxPduEstabTimeMs], 45);
  EXPECT_EQ(m.rows[0].values[kSmfPduCreateFailed], 1);
  EXPECT_DOUBLE_EQ(m.rows[0].values[kMeanPduSessions], (0.25 * 1 + 0.25 * 2) / 2);
  EXPECT_EQ(m.rows[0].values[kMaxPduSessions], 2);
  EXPECT_DOUBLE_EQ(m.rows[1].values[kMeanPduSessions], (0.5 * 2 + 0.5 * 1) / 2);
  EXPECT_EQ(m.rows[1].values[kMaxPduSessions], 2);
  EXPECT_DOUBLE_EQ(m.rows[2].values[kMeanPduSessions], 0.5);
  EXPECT_EQ(m.rows[2].values[kMaxPduSessions], 1);
}

TEST(WindowFeatures, MatchesNaiveScanOnSimulatedTraces) {
  sim::NetworkConfig cfg;
  cfg.emulation_duration = 400;
  cfg.attack_start = 200;
  for (auto sc : {sim::Scenario::Benign, sim::Scenario::RSA, sim::Scenario::TSA}) {
    const auto tr = sim::simulate(sc, cfg, 31);
    const auto deltas = session_deltas(tr);
    const auto m = compute_window_features(tr);
    ASSERT_EQ(m.size(), 400u);
    for (std::size_t w = 0; w < m.size(); w += 7) {
      const auto want = feature_oracle(tr, deltas, m.rows[w].window_start, 1.0);
      for (std::size_t j = 0; j < kNumFeatures; ++j)
        ASSERT_NEAR(m.rows[w].values[j], want[j], 1e-12 * std::max(1.0, std::abs(want[j])))
            << kFeatureNames[j] << " window " << w;
    }
  }
}

TEST(WindowFeatures, InvariantsAndLabels) {
  sim::NetworkConfig cfg;
  cfg.emulation_duration = 600;
  cfg.attack_start = 300;
  const auto tr = sim::simulate(sim::Scenario::RSA, cfg, 2);
  const auto m = compute_window_features(tr);
  for (const auto& r : m.rows) {
    const auto& f = r.values;
    EXPECT_EQ(f[kSmfPduCreateSuccess] + f[kSmfPduCreateFailed], f[kSmfPduCreateRequests]);
    EXPECT_EQ(f[kNssfSelectionSuccess] + f[kNssfSelectionFailed], f[kNssfSelectionRequests]);
    EXPECT_GE(f[kMaxPduSessions] + 1e-12, f[kMeanPduSessions]);
    EXPECT_GE(f[kRegSuccessRate], 0.0);
    EXPECT_LE(f[kRegSuccessRate], 1.0);
    EXPECT_EQ(r.label, r.window_start < 300 ? Label::Benign : Label::RSA);
  }
}

TEST(WindowFeatures, AttackRaisesRegistrations) {
  sim::NetworkConfig cfg;
  for (auto sc : {sim::Scenario::RSA, sim::Scenario::TSA}) {
    const auto m = compute_window_features(sim::simulate(sc, cfg, 5));
    double pre = 0, post = 0, npre = 0, npost = 0;
    for (const auto& r : m.rows) {
      (is_attack(r.label) ? post : pre) += r.values[kAmfInitRegRequests];
      (is_attack(r.label) ? npost : npre) += 1;
    }
    EXPECT_GT(post / npost, pre / npre);
  }
}

TEST(WindowFeatures, EmptyTraceEmptyMatrix) {
  EXPECT_TRUE(compute_window_features(handmade({})).empty());
  EXPECT_THROW(compute_window_features(handmade({ev(0.1, 1, P::Registration, 0)}), 0.0), ConfigError);
}

TEST(VarianceThreshold, Examples) {
  Matrix x(4, 3);
  x << 1, 0, 5, 1, 1, 5, 1, 0, 5, 1, 1, 5.00001;
  EXPECT_EQ(variance_threshold_select(x, 0.0), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(variance_threshold_select(x, 1e-6), (std::vector<std::size_t>{1}));
  Matrix c = Matrix::Constant(5, 2, 3.0);
  EXPECT_THROW(variance_threshold_select(c, 0.0), Error);
}

TEST(Normalizer, Examples) {
  Matrix x(3, 2);
  x << 2, 7, 4, 7, 6, 7;
  const auto p = fit_normalizer(x);
  const auto y = apply_normalizer(x, p);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(2, 0), 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(y(i, 1), 0.0);
  Matrix t(2, 2);
  t << 10, 7, -3, 8;
  const auto z = apply_normalizer(t, p);
  EXPECT_EQ(z(0, 0), 1.0);
  EXPECT_EQ(z(1, 0), 0.0);
}

TEST(Normalizer, TrainingRangeMapsToUnitInterval) {
  sim::NetworkConfig cfg;
  cfg.emulation_duration = 300;
  cfg.attack_start = 150;
  const auto x = to_matrix(compute_window_features(sim::simulate(sim::Scenario::TSA, cfg, 3)));
  const auto p = fit_normalizer(x);
  const auto y = apply_normalizer(x, p);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (p.max[j] == p.min[j]) continue;
    EXPECT_EQ(y.col(j).minCoeff(), 0.0);
    EXPECT_EQ(y.col(j).maxCoeff(), 1.0);
  }
}

TEST(Windowize, Cardinality) {
  FeatureMatrix m;
  for (int i = 0; i < 100; ++i) m.rows.push_back({double(i), {}, i < 98 ? Label::Benign : Label::TSA});
  EXPECT_EQ(windowize(m, 1).size(), 100u);
  m.rows.resize(5);
  m.rows[4].label = Label::RSA;
  const auto s = windowize(m, 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.back().label, Label::RSA);
  EXPECT_EQ(s.front().label, Label::Benign);
  EXPECT_TRUE(windowize(m, 6).empty());
}

TEST(FeatureCsv, RoundTrip) {
  sim::NetworkConfig cfg;
  cfg.emulation_duration = 200;
  cfg.attack_start = 100;
  const auto m = compute_window_features(sim::simulate(sim::Scenario::RSA, cfg, 1));
  std::ostringstream a;
  write_feature_csv(a, m);
  std::istringstream in(a.str());
  const auto back = read_feature_csv(in);
  std::ostringstream b;
  write_feature_csv(b, back);
  EXPECT_EQ(a.str(), b.str());
  ASSERT_EQ(back.size(), m.size());
  EXPECT_EQ(back.rows[150].label, Label::RSA);
}
