#pragma once

// Seeded discrete-event emulation of UEs driving 5G control-plane procedures
// across network slices, with Random/Target Slice Attack orchestration.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sliceguard/common.hpp"

namespace sliceguard::sim {

using json = nlohmann::json;

struct SliceId {
  std::uint16_t index = 0;
  auto operator<=>(const SliceId&) const = default;
};

enum class ProcedureKind : std::uint8_t {
  Registration,
  ISS,
  Uplink,
  Downlink,
  UeReleasePduSession,
  GnbReleasePduSession,
  Deregistration,
  NsSelection,
  PduSessionEstablishment,
  PduSessionRelease,
};

inline constexpr std::array<std::string_view, 10> kProcedureNames = {
    "Registration",  "ISS",          "Uplink",      "Downlink",
    "UeReleasePduSession", "GnbReleasePduSession", "Deregistration", "NsSelection",
    "PduSessionEstablishment", "PduSessionRelease"};

inline std::string_view to_string(ProcedureKind k) { return kProcedureNames[static_cast<std::size_t>(k)]; }

inline ProcedureKind parse_procedure(std::string_view s) {
  for (std::size_t i = 0; i < kProcedureNames.size(); ++i)
    if (kProcedureNames[i] == s) return static_cast<ProcedureKind>(i);
  throw Error("unknown procedure kind '" + std::string(s) + "'");
}

// True for the six procedures a UE can trigger on its own.
inline constexpr bool is_top_level(ProcedureKind k) {
  return static_cast<std::uint8_t>(k) <= static_cast<std::uint8_t>(ProcedureKind::GnbReleasePduSession);
}

// Possible subsequent procedures after a successfully completed one.
inline std::span<const ProcedureKind> successors(ProcedureKind k) {
  using P = ProcedureKind;
  static constexpr std::array kAfterIss = {P::ISS, P::Uplink, P::Downlink, P::UeReleasePduSession,
                                           P::GnbReleasePduSession};
  static constexpr std::array kAfterUplink = {P::ISS, P::Downlink, P::UeReleasePduSession,
                                              P::GnbReleasePduSession};
  static constexpr std::array kAfterDownlink = {P::ISS, P::Uplink, P::UeReleasePduSession,
                                                P::GnbReleasePduSession};
  static constexpr std::array kAfterUeRelease = {P::ISS, P::Downlink, P::Uplink, P::GnbReleasePduSession};
  static constexpr std::array kAfterGnbRelease = {P::ISS, P::Uplink, P::Downlink};
  switch (k) {
    case P::ISS:
    case P::Registration: return kAfterIss;
    case P::Uplink: return kAfterUplink;
    case P::Downlink: return kAfterDownlink;
    case P::UeReleasePduSession: return kAfterUeRelease;
    case P::GnbReleasePduSession: return kAfterGnbRelease;
    default: return {};
  }
}

enum class Outcome : std::uint8_t { Success, Failure };

enum class Nf : std::uint8_t { AMF = 1, SMF = 2, NSSF = 4 };
using NfMask = std::uint8_t;

inline constexpr NfMask operator|(Nf a, Nf b) { return static_cast<NfMask>(static_cast<NfMask>(a) | static_cast<NfMask>(b)); }
inline constexpr bool touches(NfMask m, Nf nf) { return (m & static_cast<NfMask>(nf)) != 0; }

// NFs that handle each event kind.
inline constexpr NfMask nfs_for(ProcedureKind k) {
  using P = ProcedureKind;
  switch (k) {
    case P::NsSelection: return Nf::AMF | Nf::NSSF;
    case P::PduSessionEstablishment:
    case P::PduSessionRelease:
    case P::UeReleasePduSession:
    case P::GnbReleasePduSession:
    case P::Downlink: return Nf::AMF | Nf::SMF;
    default: return static_cast<NfMask>(Nf::AMF);
  }
}

struct NetworkConfig {
  std::uint32_t num_slices = 4;
  std::uint32_t num_ues = 92;
  std::uint32_t num_compromised = 28;
  double emulation_duration = 7200.0;
  double attack_start = 3600.0;

  // Requests per load window each NF instance absorbs before overloading.
  double amf_capacity = 40.0;
  double smf_capacity = 15.0;  // per slice
  double nssf_capacity = 15.0;
  double load_window = 1.0;

  double base_failure_prob = 0.02;
  double overload_failure_gain = 0.5;
  double max_failure_prob = 0.95;

  double latency_base_ms = 20.0;
  double latency_per_load_ms = 2.0;
  double latency_jitter = 0.1;

  // Mean gap between benign procedures of one UE at peak load.
  double mean_step_interval = 20.0;
  // Rate multiplier at t=0; ramps linearly to 1 at attack_start.
  double ramp_floor = 0.5;
  double sub_event_spacing = 0.005;
  // Compromised UEs stop benign activity once the attack begins.
  bool compromised_idle = false;

  void validate() const {
    if (num_slices == 0 || num_slices > 0xffff) throw ConfigError("num_slices", "must be in [1, 65535]");
    if (num_ues == 0) throw ConfigError("num_ues", "must be positive");
    if (num_compromised > num_ues) throw ConfigError("num_compromised", "exceeds num_ues");
    if (!(emulation_duration > 0)) throw ConfigError("emulation_duration", "must be positive");
    if (!(attack_start >= 0 && attack_start < emulation_duration))
      throw ConfigError("attack_start", "must lie in [0, emulation_duration)");
    if (!(amf_capacity > 0)) throw ConfigError("amf_capacity", "must be positive");
    if (!(smf_capacity > 0)) throw ConfigError("smf_capacity", "must be positive");
    if (!(nssf_capacity > 0)) throw ConfigError("nssf_capacity", "must be positive");
    if (!(load_window > 0)) throw ConfigError("load_window", "must be positive");
    if (!(base_failure_prob >= 0 && base_failure_prob < 1))
      throw ConfigError("base_failure_prob", "must lie in [0, 1)");
    if (!(max_failure_prob >= base_failure_prob && max_failure_prob < 1))
      throw ConfigError("max_failure_prob", "must lie in [base_failure_prob, 1)");
    if (latency_base_ms < 0 || latency_per_load_ms < 0) throw ConfigError("latency", "must be non-negative");
    if (!(latency_jitter >= 0 && latency_jitter < 1)) throw ConfigError("latency_jitter", "must lie in [0, 1)");
    if (!(mean_step_interval > 0)) throw ConfigError("mean_step_interval", "must be positive");
    if (!(ramp_floor > 0 && ramp_floor <= 1)) throw ConfigError("ramp_floor", "must lie in (0, 1]");
    if (!(sub_event_spacing >= 0)) throw ConfigError("sub_event_spacing", "must be non-negative");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetworkConfig, num_slices, num_ues, num_compromised,
                                                emulation_duration, attack_start, amf_capacity, smf_capacity,
                                                nssf_capacity, load_window, base_failure_prob,
                                                overload_failure_gain, max_failure_prob, latency_base_ms,
                                                latency_per_load_ms, latency_jitter, mean_step_interval,
                                                ramp_floor, sub_event_spacing, compromised_idle)

struct UeState {
  std::uint32_t ue_id = 0;
  bool is_compromised = false;
  std::optional<SliceId> current_slice;
  bool registered = false;
  std::vector<std::uint32_t> active_pdu_sessions;  // indexed by slice
  std::optional<ProcedureKind> last_procedure;
  double busy_until = 0.0;  // timestamp of the last emitted sub-event

  UeState() = default;
  UeState(std::uint32_t id, std::uint32_t num_slices, bool compromised = false)
      : ue_id(id), is_compromised(compromised), active_pdu_sessions(num_slices, 0) {}

  bool has_session() const {
    return current_slice && active_pdu_sessions[current_slice->index] > 0;
  }

  void reset() {
    registered = false;
    current_slice.reset();
    last_procedure.reset();
    std::fill(active_pdu_sessions.begin(), active_pdu_sessions.end(), 0);
  }
};

struct SignalingEvent {
  double timestamp = 0.0;
  std::uint32_t ue_id = 0;
  ProcedureKind kind = ProcedureKind::Registration;
  SliceId slice;
  Outcome outcome = Outcome::Success;
  double latency_ms = 0.0;
  NfMask nfs = 0;
  // Ground truth, not used by feature extraction: the top-level procedure
  // this event belongs to, and whether an attack burst injected it.
  ProcedureKind procedure = ProcedureKind::Registration;
  bool injected = false;

  bool ok() const { return outcome == Outcome::Success; }
  bool operator==(const SignalingEvent&) const = default;
};

enum class AttackVariant : std::uint8_t { RSA, TSA };
enum class Scenario : std::uint8_t { Benign, RSA, TSA };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::Benign: return "benign";
    case Scenario::RSA: return "rsa";
    case Scenario::TSA: return "tsa";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "benign") return Scenario::Benign;
  if (s == "rsa") return Scenario::RSA;
  if (s == "tsa") return Scenario::TSA;
  throw ConfigError("scenario", "expected benign|rsa|tsa, got '" + std::string(s) + "'");
}

struct AttackPlan {
  AttackVariant variant = AttackVariant::RSA;
  std::optional<SliceId> target_slice;
  std::vector<std::uint32_t> compromised_ue_ids;  // sorted
  double start = 0.0;
  double burst_interval = 5.0;
  double switchback_prob = 0.5;
  // Per compromised UE (same order as compromised_ue_ids): offset of its
  // burst schedule inside one burst interval.
  std::vector<double> phase;
};

struct EventTrace {
  NetworkConfig config;
  Scenario scenario = Scenario::Benign;
  std::optional<AttackPlan> plan;
  std::uint64_t seed = 0;
  std::vector<SignalingEvent> events;
  std::optional<std::pair<double, double>> attack_window;

  json header() const;
  // Identity of the trace: digest of (config, scenario, plan, seed).
  std::string digest() const { return sha256_hex(header_core().dump()); }

 private:
  json header_core() const;
};

// Per-NF-instance sliding request counter that drives the overload-dependent
// failure and latency model.
class ControlPlane {
 public:
  explicit ControlPlane(const NetworkConfig& cfg)
      : cfg_(cfg), smf_(cfg.num_slices) {}

  struct Load {
    double overload = 0.0;  // max over touched NFs of max(0, load/capacity - 1)
    double count = 0.0;     // max raw request count over touched NFs
  };

  Load admit(double t, NfMask nfs, SliceId slice) {
    Load load;
    auto visit = [&](std::deque<double>& q, double capacity) {
      q.push_back(t);
      while (!q.empty() && q.front() <= t - cfg_.load_window) q.pop_front();
      const auto n = static_cast<double>(q.size());
      load.count = std::max(load.count, n);
      load.overload = std::max(load.overload, std::max(0.0, n / capacity - 1.0));
    };
    if (touches(nfs, Nf::AMF)) visit(amf_, cfg_.amf_capacity);
    if (touches(nfs, Nf::SMF)) visit(smf_[slice.index], cfg_.smf_capacity);
    if (touches(nfs, Nf::NSSF)) visit(nssf_, cfg_.nssf_capacity);
    return load;
  }

 private:
  const NetworkConfig& cfg_;
  std::deque<double> amf_;
  std::vector<std::deque<double>> smf_;
  std::deque<double> nssf_;
};

namespace detail {

class ProcedureRunner {
 public:
  ProcedureRunner(UeState& ue, double now, Rng& rng, const NetworkConfig& cfg, ControlPlane& plane,
                  ProcedureKind top, bool injected)
      : ue_(ue), now_(now), rng_(rng), cfg_(cfg), plane_(plane), top_(top), injected_(injected) {}

  // Emits one event; on failure the UE context is dropped and false returned.
  bool emit(ProcedureKind kind, SliceId slice) {
    const double t = now_ + cfg_.sub_event_spacing * static_cast<double>(events.size());
    if (t >= cfg_.emulation_duration) {
      truncated = true;
      return false;
    }
    SignalingEvent ev;
    ev.timestamp = t;
    ev.ue_id = ue_.ue_id;
    ev.kind = kind;
    ev.slice = slice;
    ev.nfs = nfs_for(kind);
    ev.procedure = top_;
    ev.injected = injected_;
    const auto load = plane_.admit(t, ev.nfs, slice);
    const double p_fail =
        std::min(cfg_.base_failure_prob + cfg_.overload_failure_gain * load.overload, cfg_.max_failure_prob);
    ev.outcome = rng_.bernoulli(p_fail) ? Outcome::Failure : Outcome::Success;
    if (kind == ProcedureKind::PduSessionEstablishment) {
      const double jitter = rng_.uniform(-cfg_.latency_jitter, cfg_.latency_jitter);
      ev.latency_ms = (cfg_.latency_base_ms + cfg_.latency_per_load_ms * load.count) * (1.0 + jitter);
    }
    events.push_back(ev);
    if (!ev.ok()) ue_.reset();
    return ev.ok();
  }

  bool release_session(ProcedureKind kind) {
    const SliceId s = *ue_.current_slice;
    if (!emit(kind, s)) return false;
    ue_.active_pdu_sessions[s.index] = 0;
    return true;
  }

  bool establish_session() {
    const SliceId s = *ue_.current_slice;
    if (!emit(ProcedureKind::PduSessionEstablishment, s)) return false;
    ue_.active_pdu_sessions[s.index] = 1;
    return true;
  }

  // Selection, registration and session establishment in `dest`.
  bool attach(SliceId dest) {
    if (!emit(ProcedureKind::NsSelection, dest)) return false;
    if (!emit(ProcedureKind::Registration, dest)) return false;
    ue_.registered = true;
    ue_.current_slice = dest;
    return establish_session();
  }

  bool run(std::optional<SliceId> dest) {
    using P = ProcedureKind;
    switch (top_) {
      case P::Registration:
        if (ue_.registered) ue_.reset();
        return attach(*dest);
      case P::ISS: {
        const SliceId from = *ue_.current_slice;
        if (ue_.has_session() && !release_session(P::PduSessionRelease)) return false;
        if (!emit(P::Deregistration, from)) return false;
        ue_.reset();
        return attach(*dest);
      }
      case P::Uplink:
      case P::Downlink:
        if (!ue_.has_session() && !establish_session()) return false;
        return emit(top_, *ue_.current_slice);
      case P::UeReleasePduSession:
      case P::GnbReleasePduSession: return release_session(top_);
      default: throw Error("not a top-level procedure: " + std::string(to_string(top_)));
    }
  }

  std::vector<SignalingEvent> events;
  bool truncated = false;

 private:
  UeState& ue_;
  double now_;
  Rng& rng_;
  const NetworkConfig& cfg_;
  ControlPlane& plane_;
  ProcedureKind top_;
  bool injected_;
};

inline SliceId random_slice(Rng& rng, const NetworkConfig& cfg) {
  return SliceId{static_cast<std::uint16_t>(rng.below(cfg.num_slices))};
}

inline SliceId random_other_slice(Rng& rng, const NetworkConfig& cfg, SliceId current) {
  if (cfg.num_slices < 2) return current;
  auto pick = static_cast<std::uint16_t>(rng.below(cfg.num_slices - 1));
  if (pick >= current.index) ++pick;
  return SliceId{pick};
}

}  // namespace detail

// Runs `top` for the UE at `now`, updating its state. A failed sub-event aborts
// the procedure and drops the UE context (next procedure is Registration).
inline std::vector<SignalingEvent> execute_procedure(UeState& ue, ProcedureKind top, std::optional<SliceId> dest,
                                                     double now, Rng& rng, const NetworkConfig& cfg,
                                                     ControlPlane& plane, bool injected = false) {
  if (top != ProcedureKind::Registration && (!ue.registered || !ue.current_slice)) top = ProcedureKind::Registration;
  if ((top == ProcedureKind::Registration || top == ProcedureKind::ISS) && !dest)
    throw Error("execute_procedure: destination slice required");
  detail::ProcedureRunner runner(ue, now, rng, cfg, plane, top, injected);
  if (runner.run(dest) && !runner.truncated) ue.last_procedure = top;
  return std::move(runner.events);
}

// Chooses the UE's next procedure uniformly from the successors of its last
// successful one (Registration when it has none) and executes it.
inline std::vector<SignalingEvent> step_ue(UeState& ue, double now, Rng& rng, const NetworkConfig& cfg,
                                           ControlPlane& plane) {
  using P = ProcedureKind;
  if (!ue.registered || !ue.current_slice || !ue.last_procedure)
    return execute_procedure(ue, P::Registration, detail::random_slice(rng, cfg), now, rng, cfg, plane);

  std::array<P, 5> eligible{};
  std::size_t n = 0;
  for (P next : successors(*ue.last_procedure)) {
    if ((next == P::UeReleasePduSession || next == P::GnbReleasePduSession) && !ue.has_session()) continue;
    if (next == P::ISS && cfg.num_slices < 2) continue;
    eligible[n++] = next;
  }
  if (n == 0) return execute_procedure(ue, P::Registration, detail::random_slice(rng, cfg), now, rng, cfg, plane);
  const P next = eligible[rng.below(n)];
  std::optional<SliceId> dest;
  if (next == P::ISS) dest = detail::random_other_slice(rng, cfg, *ue.current_slice);
  return execute_procedure(ue, next, dest, now, rng, cfg, plane);
}

inline AttackPlan plan_attack(AttackVariant variant, const NetworkConfig& cfg, Rng& rng,
                              double burst_interval = 5.0, double switchback_prob = 0.5) {
  cfg.validate();
  if (!(burst_interval > 0)) throw ConfigError("burst_interval", "must be positive");
  if (!(switchback_prob >= 0 && switchback_prob <= 1)) throw ConfigError("switchback_prob", "must lie in [0, 1]");
  AttackPlan plan;
  plan.variant = variant;
  plan.start = cfg.attack_start;
  plan.burst_interval = burst_interval;
  plan.switchback_prob = switchback_prob;
  std::vector<std::uint32_t> ids(cfg.num_ues);
  for (std::uint32_t i = 0; i < cfg.num_ues; ++i) ids[i] = i;
  // Partial Fisher-Yates: the first num_compromised entries are the sample.
  for (std::uint32_t i = 0; i < cfg.num_compromised; ++i) {
    const auto j = i + static_cast<std::uint32_t>(rng.below(cfg.num_ues - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(cfg.num_compromised);
  std::sort(ids.begin(), ids.end());
  plan.compromised_ue_ids = std::move(ids);
  if (variant == AttackVariant::TSA) plan.target_slice = detail::random_slice(rng, cfg);
  plan.phase.reserve(plan.compromised_ue_ids.size());
  for (std::size_t i = 0; i < plan.compromised_ue_ids.size(); ++i) plan.phase.push_back(rng.uniform(0.0, burst_interval));
  return plan;
}

// Per-UE procedure-rate multiplier: linear ramp to peak at attack_start, then plateau.
inline double load_multiplier(const NetworkConfig& cfg, double t) {
  if (cfg.attack_start <= 0) return 1.0;
  const double frac = std::min(t / cfg.attack_start, 1.0);
  return cfg.ramp_floor + (1.0 - cfg.ramp_floor) * frac;
}

inline EventTrace run_emulation(const NetworkConfig& cfg, const std::optional<AttackPlan>& plan, std::uint64_t seed) {
  cfg.validate();
  EventTrace trace;
  trace.config = cfg;
  trace.seed = seed;
  trace.plan = plan;
  trace.scenario = !plan ? Scenario::Benign : plan->variant == AttackVariant::RSA ? Scenario::RSA : Scenario::TSA;
  if (plan) {
    if (plan->start < cfg.attack_start) throw ConfigError("plan.start", "precedes config.attack_start");
    if (plan->variant == AttackVariant::TSA && !plan->target_slice)
      throw ConfigError("plan.target_slice", "TSA requires a target slice");
    if (plan->phase.size() != plan->compromised_ue_ids.size())
      throw ConfigError("plan.phase", "one phase per compromised UE required");
    for (auto id : plan->compromised_ue_ids)
      if (id >= cfg.num_ues) throw ConfigError("plan.compromised_ue_ids", "UE id out of range");
    trace.attack_window = std::make_pair(plan->start, cfg.emulation_duration);
  }

  Rng rng(seed);
  ControlPlane plane(cfg);
  std::vector<UeState> ues;
  ues.reserve(cfg.num_ues);
  for (std::uint32_t i = 0; i < cfg.num_ues; ++i) ues.emplace_back(i, cfg.num_slices);

  enum class ActionKind : std::uint8_t { Step, Burst, Switchback };
  struct Action {
    double t;
    std::uint64_t seq;
    std::uint32_t ue;
    ActionKind kind;
    std::uint32_t slot;   // index into the plan for attack actions
    std::uint64_t burst;  // burst counter for attack actions
    bool operator>(const Action& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };
  std::priority_queue<Action, std::vector<Action>, std::greater<>> queue;
  std::uint64_t seq = 0;
  auto next_step = [&](double t) { return t + rng.exponential(load_multiplier(cfg, t) / cfg.mean_step_interval); };

  for (std::uint32_t i = 0; i < cfg.num_ues; ++i) queue.push({next_step(0.0), seq++, i, ActionKind::Step, 0, 0});
  if (plan) {
    for (std::uint32_t k = 0; k < plan->compromised_ue_ids.size(); ++k) {
      const auto id = plan->compromised_ue_ids[k];
      ues[id].is_compromised = true;
      queue.push({plan->start + plan->phase[k] + rng.uniform(), seq++, id, ActionKind::Burst, k, 0});
    }
  }

  auto& events = trace.events;

  while (!queue.empty()) {
    const Action a = queue.top();
    queue.pop();
    if (a.t >= cfg.emulation_duration) continue;
    UeState& ue = ues[a.ue];
    if (a.t <= ue.busy_until) {
      // a procedure for this UE is still emitting; wait for it
      Action later = a;
      later.t = ue.busy_until + cfg.sub_event_spacing;
      later.seq = seq++;
      queue.push(later);
      continue;
    }
    auto append = [&](std::vector<SignalingEvent>&& evs) {
      if (!evs.empty()) ue.busy_until = evs.back().timestamp;
      events.insert(events.end(), evs.begin(), evs.end());
    };
    switch (a.kind) {
      case ActionKind::Step:
        if (ue.is_compromised && cfg.compromised_idle && plan && a.t >= plan->start) break;
        append(step_ue(ue, a.t, rng, cfg, plane));
        queue.push({next_step(a.t), seq++, a.ue, ActionKind::Step, 0, 0});
        break;
      case ActionKind::Burst: {
        SliceId dest;
        if (plan->variant == AttackVariant::TSA)
          dest = *plan->target_slice;
        else
          dest = ue.current_slice ? detail::random_other_slice(rng, cfg, *ue.current_slice)
                                  : detail::random_slice(rng, cfg);
        append(execute_procedure(ue, ProcedureKind::ISS, dest, a.t, rng, cfg, plane, true));
        if (rng.bernoulli(plan->switchback_prob))
          queue.push({a.t + 0.5 * plan->burst_interval, seq++, a.ue, ActionKind::Switchback, a.slot, a.burst});
        const double next = plan->start + plan->phase[a.slot] +
                            static_cast<double>(a.burst + 1) * plan->burst_interval + rng.uniform();
        queue.push({next, seq++, a.ue, ActionKind::Burst, a.slot, a.burst + 1});
        break;
      }
      case ActionKind::Switchback: {
        const SliceId dest = ue.current_slice ? detail::random_other_slice(rng, cfg, *ue.current_slice)
                                              : detail::random_slice(rng, cfg);
        append(execute_procedure(ue, ProcedureKind::ISS, dest, a.t, rng, cfg, plane, true));
        break;
      }
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const SignalingEvent& x, const SignalingEvent& y) { return x.timestamp < y.timestamp; });
  return trace;
}

struct AttackOptions {
  double burst_interval = 5.0;
  double switchback_prob = 0.5;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AttackOptions, burst_interval, switchback_prob)

// One seeded run of a scenario. The attack plan draws from a stream forked
// off the run seed, so (scenario, config, seed) fixes the whole trace.
inline EventTrace simulate(Scenario scenario, const NetworkConfig& cfg, std::uint64_t seed,
                           const AttackOptions& attack = {}) {
  std::optional<AttackPlan> plan;
  if (scenario != Scenario::Benign) {
    Rng prng = Rng(seed).fork(0x706c616e);
    plan = plan_attack(scenario == Scenario::RSA ? AttackVariant::RSA : AttackVariant::TSA, cfg, prng,
                       attack.burst_interval, attack.switchback_prob);
  }
  return run_emulation(cfg, plan, seed);
}

// ---------------------------------------------------------------------------
// JSON-lines trace format: a header object, then one event object per line.

inline json plan_to_json(const AttackPlan& p) {
  json j;
  j["variant"] = p.variant == AttackVariant::RSA ? "rsa" : "tsa";
  j["target_slice"] = p.target_slice ? json(p.target_slice->index) : json(nullptr);
  j["compromised_ue_ids"] = p.compromised_ue_ids;
  j["start"] = p.start;
  j["burst_interval"] = p.burst_interval;
  j["switchback_prob"] = p.switchback_prob;
  j["phase"] = p.phase;
  return j;
}

inline AttackPlan plan_from_json(const json& j) {
  AttackPlan p;
  p.variant = j.at("variant").get<std::string>() == "tsa" ? AttackVariant::TSA : AttackVariant::RSA;
  if (!j.at("target_slice").is_null()) p.target_slice = SliceId{j.at("target_slice").get<std::uint16_t>()};
  p.compromised_ue_ids = j.at("compromised_ue_ids").get<std::vector<std::uint32_t>>();
  p.start = j.at("start").get<double>();
  p.burst_interval = j.at("burst_interval").get<double>();
  p.switchback_prob = j.at("switchback_prob").get<double>();
  p.phase = j.at("phase").get<std::vector<double>>();
  return p;
}

inline json EventTrace::header_core() const {
  json h;
  h["format"] = "sliceguard-trace/1";
  h["config"] = config;
  h["scenario"] = to_string(scenario);
  h["plan"] = plan ? plan_to_json(*plan) : json(nullptr);
  h["seed"] = seed;
  return h;
}

inline json EventTrace::header() const {
  json h = header_core();
  h["digest"] = digest();
  h["attack_window"] = attack_window ? json::array({attack_window->first, attack_window->second}) : json(nullptr);
  h["num_events"] = events.size();
  return h;
}

inline json nfs_to_json(NfMask m) {
  json arr = json::array();
  if (touches(m, Nf::AMF)) arr.push_back("AMF");
  if (touches(m, Nf::SMF)) arr.push_back("SMF");
  if (touches(m, Nf::NSSF)) arr.push_back("NSSF");
  return arr;
}

inline NfMask nfs_from_json(const json& arr) {
  NfMask m = 0;
  for (const auto& v : arr) {
    const auto s = v.get<std::string>();
    if (s == "AMF") m |= static_cast<NfMask>(Nf::AMF);
    else if (s == "SMF") m |= static_cast<NfMask>(Nf::SMF);
    else if (s == "NSSF") m |= static_cast<NfMask>(Nf::NSSF);
    else throw Error("unknown NF '" + s + "'");
  }
  return m;
}

inline json event_to_json(const SignalingEvent& e) {
  json j;
  j["t"] = e.timestamp;
  j["ue"] = e.ue_id;
  j["kind"] = to_string(e.kind);
  j["slice"] = e.slice.index;
  j["outcome"] = e.ok() ? "Success" : "Failure";
  j["latency_ms"] = e.latency_ms;
  j["nfs"] = nfs_to_json(e.nfs);
  j["procedure"] = to_string(e.procedure);
  j["injected"] = e.injected;
  return j;
}

inline SignalingEvent event_from_json(const json& j) {
  SignalingEvent e;
  e.timestamp = j.at("t").get<double>();
  e.ue_id = j.at("ue").get<std::uint32_t>();
  e.kind = parse_procedure(j.at("kind").get<std::string>());
  e.slice = SliceId{j.at("slice").get<std::uint16_t>()};
  const auto outcome = j.at("outcome").get<std::string>();
  if (outcome != "Success" && outcome != "Failure") throw Error("bad outcome '" + outcome + "'");
  e.outcome = outcome == "Success" ? Outcome::Success : Outcome::Failure;
  e.latency_ms = j.value("latency_ms", 0.0);
  e.nfs = j.contains("nfs") ? nfs_from_json(j.at("nfs")) : nfs_for(e.kind);
  e.procedure = j.contains("procedure") ? parse_procedure(j.at("procedure").get<std::string>()) : e.kind;
  e.injected = j.value("injected", false);
  return e;
}

inline void write_trace(std::ostream& out, const EventTrace& trace) {
  out << trace.header().dump() << '\n';
  for (const auto& e : trace.events) out << event_to_json(e).dump() << '\n';
}

inline EventTrace read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("trace: missing header line");
  const json h = json::parse(line);
  if (h.value("format", std::string{}) != "sliceguard-trace/1") throw Error("trace: unsupported format");
  EventTrace trace;
  trace.config = h.at("config").get<NetworkConfig>();
  trace.scenario = parse_scenario(h.at("scenario").get<std::string>());
  if (!h.at("plan").is_null()) trace.plan = plan_from_json(h.at("plan"));
  trace.seed = h.at("seed").get<std::uint64_t>();
  if (h.contains("attack_window") && !h.at("attack_window").is_null())
    trace.attack_window = std::make_pair(h["attack_window"][0].get<double>(), h["attack_window"][1].get<double>());
  std::size_t lineno = 1;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      trace.events.push_back(event_from_json(json::parse(line)));
    } catch (const std::exception& ex) {
      throw Error("trace line " + std::to_string(lineno) + ": " + ex.what());
    }
    if (trace.events.back().timestamp < last_t)
      throw Error("trace line " + std::to_string(lineno) + ": timestamps must be non-decreasing");
    last_t = trace.events.back().timestamp;
  }
  if (h.contains("num_events") && h["num_events"].get<std::size_t>() != trace.events.size())
    throw Error("trace: event count does not match header");
  return trace;
}

}  // namespace sliceguard::sim
