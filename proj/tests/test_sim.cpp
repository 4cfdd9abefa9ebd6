#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "sliceguard/sim_core.hpp"

using namespace sliceguard;
using namespace sliceguard::sim;
using P = ProcedureKind;

namespace {

NetworkConfig short_config(double duration = 600, double start = 300) {
  NetworkConfig c;
  c.emulation_duration = duration;
  c.attack_start = start;
  return c;
}

std::string serialize(const EventTrace& t) {
  std::ostringstream s;
  write_trace(s, t);
  return s.str();
}

}  // namespace

TEST(Procedures, RegistrationRowOfDependencyTable) {
  const auto row = successors(P::Registration);
  const std::set<P> got(row.begin(), row.end());
  EXPECT_EQ(got, (std::set<P>{P::ISS, P::Uplink, P::Downlink, P::UeReleasePduSession, P::GnbReleasePduSession}));
}

TEST(Procedures, UnregisteredUeOnlyRegisters) {
  const auto cfg = short_config();
  ControlPlane plane(cfg);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    UeState ue(0, cfg.num_slices);
    const auto evs = step_ue(ue, 10.0 + i, rng, cfg, plane);
    ASSERT_FALSE(evs.empty());
    for (const auto& e : evs) EXPECT_EQ(e.procedure, P::Registration);
    EXPECT_EQ(evs.front().kind, P::NsSelection);
  }
}

TEST(Procedures, SameSeedSameEvents) {
  const auto cfg = short_config();
  auto run = [&] {
    ControlPlane plane(cfg);
    Rng rng(7);
    UeState ue(4, cfg.num_slices);
    std::vector<SignalingEvent> all;
    for (int i = 0; i < 30; ++i) {
      auto evs = step_ue(ue, i * 2.0, rng, cfg, plane);
      all.insert(all.end(), evs.begin(), evs.end());
    }
    return all;
  };
  EXPECT_EQ(run(), run());
}

TEST(Procedures, StepsFollowDependencyTable) {
  auto cfg = short_config(100000, 50000);
  cfg.base_failure_prob = 0.05;
  ControlPlane plane(cfg);
  Rng rng(21);
  UeState ue(1, cfg.num_slices);
  std::size_t checked = 0;
  for (int i = 0; i < 3000; ++i) {
    const auto before = ue.last_procedure;
    const bool was_registered = ue.registered;
    const auto evs = step_ue(ue, i * 10.0, rng, cfg, plane);
    ASSERT_FALSE(evs.empty());
    const P top = evs.front().procedure;
    if (!was_registered || !before) {
      EXPECT_EQ(top, P::Registration);
      continue;
    }
    const auto row = successors(*before);
    EXPECT_NE(std::find(row.begin(), row.end(), top), row.end())
        << to_string(*before) << " -> " << to_string(top);
    ++checked;
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Procedures, RegistrationAndIssSubEvents) {
  const auto cfg = short_config();
  auto c = cfg;
  c.base_failure_prob = 0;
  ControlPlane plane(c);
  Rng rng(5);
  UeState ue(0, c.num_slices);
  const auto reg = execute_procedure(ue, P::Registration, SliceId{1}, 1.0, rng, c, plane);
  std::vector<P> kinds;
  for (const auto& e : reg) kinds.push_back(e.kind);
  EXPECT_EQ(kinds, (std::vector<P>{P::NsSelection, P::Registration, P::PduSessionEstablishment}));
  const auto iss = execute_procedure(ue, P::ISS, SliceId{2}, 2.0, rng, c, plane);
  kinds.clear();
  for (const auto& e : iss) kinds.push_back(e.kind);
  EXPECT_EQ(kinds, (std::vector<P>{P::PduSessionRelease, P::Deregistration, P::NsSelection, P::Registration,
                                   P::PduSessionEstablishment}));
  EXPECT_EQ(iss.front().slice.index, 1);
  EXPECT_EQ(iss.back().slice.index, 2);
  EXPECT_EQ(ue.current_slice->index, 2);
  for (const auto& e : iss) EXPECT_EQ(e.latency_ms > 0, e.kind == P::PduSessionEstablishment);
}

TEST(AttackPlan, DefaultsPickTwentyEightOfNinetyTwo) {
  NetworkConfig cfg;
  Rng rng(1);
  const auto plan = plan_attack(AttackVariant::RSA, cfg, rng);
  EXPECT_EQ(plan.compromised_ue_ids.size(), 28u);
  EXPECT_EQ(std::set<std::uint32_t>(plan.compromised_ue_ids.begin(), plan.compromised_ue_ids.end()).size(), 28u);
  for (auto id : plan.compromised_ue_ids) EXPECT_LT(id, 92u);
  EXPECT_DOUBLE_EQ(plan.start, 3600.0);
  EXPECT_FALSE(plan.target_slice);
}

TEST(AttackPlan, RejectsMoreCompromisedThanUes) {
  NetworkConfig cfg;
  cfg.num_compromised = 93;
  Rng rng(1);
  EXPECT_THROW(plan_attack(AttackVariant::TSA, cfg, rng), ConfigError);
}

TEST(AttackPlan, TsaTargetReproducible) {
  NetworkConfig cfg;
  Rng a(99), b(99);
  const auto pa = plan_attack(AttackVariant::TSA, cfg, a);
  const auto pb = plan_attack(AttackVariant::TSA, cfg, b);
  ASSERT_TRUE(pa.target_slice);
  EXPECT_EQ(pa.target_slice, pb.target_slice);
  EXPECT_LT(pa.target_slice->index, 4);
}

TEST(Emulation, NoCompromisedMatchesBenign) {
  auto cfg = short_config();
  cfg.num_compromised = 0;
  const auto benign = simulate(Scenario::Benign, cfg, 17);
  const auto rsa = simulate(Scenario::RSA, cfg, 17);
  EXPECT_EQ(benign.events, rsa.events);
}

TEST(Emulation, BenignHasNoInjectedEvents) {
  const auto t = simulate(Scenario::Benign, short_config(), 2);
  EXPECT_FALSE(t.attack_window);
  for (const auto& e : t.events) ASSERT_FALSE(e.injected);
}

TEST(Emulation, RsaRaisesCompromisedIssRate) {
  NetworkConfig cfg;
  const auto t = simulate(Scenario::RSA, cfg, 3);
  const std::set<std::uint32_t> bad(t.plan->compromised_ue_ids.begin(), t.plan->compromised_ue_ids.end());
  double pre = 0, post = 0;
  for (const auto& e : t.events)
    if (bad.count(e.ue_id) && e.kind == P::Deregistration && e.procedure == P::ISS)
      (e.timestamp < cfg.attack_start ? pre : post) += 1;
  const double pre_rate = pre / cfg.attack_start;
  const double post_rate = post / (cfg.emulation_duration - cfg.attack_start);
  EXPECT_GT(post_rate, pre_rate);
}

TEST(Emulation, TsaConcentratesOnTarget) {
  auto cfg = short_config(1200, 600);
  AttackOptions opt;
  opt.switchback_prob = 0.1;
  const auto t = simulate(Scenario::TSA, cfg, 4, opt);
  const auto target = t.plan->target_slice->index;
  double hit = 0, all = 0;
  for (const auto& e : t.events)
    if (e.injected && e.kind == P::Registration && e.timestamp >= t.plan->start) {
      all += 1;
      hit += e.slice.index == target;
    }
  ASSERT_GT(all, 100);
  EXPECT_GE(hit / all, 0.90);
}

TEST(Emulation, TsaModalDestinationIsTarget) {
  const auto t = simulate(Scenario::TSA, short_config(), 8);
  std::map<std::uint16_t, int> dest;
  for (const auto& e : t.events)
    if (e.injected && e.kind == P::Registration) ++dest[e.slice.index];
  const auto modal = std::max_element(dest.begin(), dest.end(), [](auto& a, auto& b) { return a.second < b.second; });
  EXPECT_EQ(modal->first, t.plan->target_slice->index);
}

TEST(Emulation, RsaReachesEverySlice) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t = simulate(Scenario::RSA, short_config(), seed);
    std::set<std::uint16_t> dest;
    for (const auto& e : t.events)
      if (e.injected && e.kind == P::Registration) dest.insert(e.slice.index);
    EXPECT_EQ(dest.size(), 4u);
  }
}

TEST(Emulation, SortedAndLatencyOnlyOnEstablishment) {
  const auto t = simulate(Scenario::RSA, short_config(), 5);
  for (std::size_t i = 1; i < t.events.size(); ++i) ASSERT_LE(t.events[i - 1].timestamp, t.events[i].timestamp);
  for (const auto& e : t.events) {
    ASSERT_GE(e.latency_ms, 0.0);
    if (e.latency_ms > 0) ASSERT_EQ(e.kind, P::PduSessionEstablishment);
    ASSERT_LT(e.slice.index, 4);
  }
}

void check_causality(const EventTrace& t) {
  struct Ctx {
    std::optional<std::uint16_t> reg, sess;
  };
  std::map<std::uint32_t, Ctx> ctx;
  std::size_t checked = 0;
  for (const auto& e : t.events) {
    auto& c = ctx[e.ue_id];
    const bool service = e.kind == P::Uplink || e.kind == P::Downlink || e.kind == P::UeReleasePduSession ||
                         e.kind == P::GnbReleasePduSession;
    if (service) {
      ASSERT_EQ(c.reg, e.slice.index) << "ue " << e.ue_id << " t=" << e.timestamp;
      ASSERT_EQ(c.sess, e.slice.index) << "ue " << e.ue_id << " t=" << e.timestamp;
      ++checked;
    }
    if (!e.ok()) {
      c = {};
      continue;
    }
    switch (e.kind) {
      case P::Registration: c.reg = e.slice.index, c.sess.reset(); break;
      case P::PduSessionEstablishment: c.sess = e.slice.index; break;
      case P::PduSessionRelease:
      case P::UeReleasePduSession:
      case P::GnbReleasePduSession: c.sess.reset(); break;
      case P::Deregistration: c = {}; break;
      default: break;
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Emulation, ServiceEventsNeedRegistrationAndSession) {
  for (auto sc : {Scenario::Benign, Scenario::RSA, Scenario::TSA})
    for (std::uint64_t seed : {6, 7, 8}) {
      SCOPED_TRACE(seed);
      check_causality(simulate(sc, short_config(), seed));
    }
}

TEST(Trace, DeterministicBytes) {
  const auto cfg = short_config();
  EXPECT_EQ(serialize(simulate(Scenario::RSA, cfg, 11)), serialize(simulate(Scenario::RSA, cfg, 11)));
  EXPECT_NE(serialize(simulate(Scenario::RSA, cfg, 11)), serialize(simulate(Scenario::RSA, cfg, 12)));
}

TEST(Trace, JsonLinesRoundTrip) {
  const auto t = simulate(Scenario::TSA, short_config(), 9);
  const auto text = serialize(t);
  std::istringstream in(text);
  const auto back = read_trace(in);
  EXPECT_EQ(back.events, t.events);
  EXPECT_EQ(back.digest(), t.digest());
  EXPECT_EQ(serialize(back), text);
}

TEST(Trace, RejectsUnsortedInput) {
  auto t = simulate(Scenario::Benign, short_config(60, 30), 9);
  ASSERT_GT(t.events.size(), 2u);
  std::swap(t.events.front(), t.events.back());
  std::istringstream in(serialize(t));
  EXPECT_THROW(read_trace(in), Error);
}

TEST(Config, Validation) {
  NetworkConfig c;
  c.attack_start = c.emulation_duration;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.base_failure_prob = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.amf_capacity = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_scenario("dos"), ConfigError);
}
