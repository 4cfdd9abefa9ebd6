#pragma once

// Detection metrics and the contamination sweep.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sliceguard/autoencoder.hpp"
#include "sliceguard/baseline.hpp"
#include "sliceguard/common.hpp"
#include "sliceguard/datasets.hpp"
#include "sliceguard/kmeans.hpp"
#include "sliceguard/pul_detector.hpp"
#include "sliceguard/sim_core.hpp"

namespace sliceguard::eval {

using json = nlohmann::json;
using detect::Verdict;

// Attack is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct Scores {
  ConfusionMatrix cm;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the metric's denominator was zero and 0 was reported instead.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

inline Scores score(const std::vector<Verdict>& verdicts, const std::vector<Verdict>& truth) {
  if (verdicts.size() != truth.size()) throw Error("score: verdict/truth length mismatch");
  Scores s;
  auto& cm = s.cm;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const bool pred = verdicts[i] == Verdict::Attack;
    const bool real = truth[i] == Verdict::Attack;
    if (pred && real) ++cm.tp;
    else if (pred) ++cm.fp;
    else if (real) ++cm.fn;
    else ++cm.tn;
  }
  const auto tp = static_cast<double>(cm.tp);
  if (cm.tp + cm.fp > 0) s.precision = tp / static_cast<double>(cm.tp + cm.fp);
  else s.precision_undefined = true;
  if (cm.tp + cm.fn > 0) s.recall = tp / static_cast<double>(cm.tp + cm.fn);
  else s.recall_undefined = true;
  if (s.precision + s.recall > 0) s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  else s.f1_undefined = true;
  return s;
}

// ---------------------------------------------------------------------------

enum class BaselineMode : std::uint8_t { Fixed, Calibrate };

NLOHMANN_JSON_SERIALIZE_ENUM(BaselineMode, {{BaselineMode::Fixed, "fixed"}, {BaselineMode::Calibrate, "calibrate"}})

struct SweepConfig {
  std::vector<double> levels{0.1, 0.2, 0.3, 0.4};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t total_records = 8000;
  std::size_t test_per_class = 1000;
  double labeled_positive_fraction = 0.1;
  double rsa_tsa_split = 0.5;
  sim::NetworkConfig network;
  sim::AttackOptions attack;
  nn::AutoencoderArch arch;
  nn::TrainConfig train;
  cluster::KMeansConfig kmeans;
  double variance_tau = 1e-6;
  BaselineMode baseline_mode = BaselineMode::Calibrate;
  double alpha = 0.1408;
  double calibration_quantile = 0.95;

  void validate() const {
    if (levels.empty()) throw ConfigError("levels", "at least one contamination level required");
    if (seeds.empty()) throw ConfigError("seeds", "at least one seed required");
    if (test_per_class == 0) throw ConfigError("test_per_class", "must be positive");
    for (double l : levels)
      data::DatasetSpec{total_records, l, rsa_tsa_split, labeled_positive_fraction, 0}.validate();
    network.validate();
    train.validate();
    kmeans.validate();
    baseline::ThresholdConfig{alpha}.validate();
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SweepConfig, levels, seeds, total_records, test_per_class,
                                                labeled_positive_fraction, rsa_tsa_split, network, attack, arch, train,
                                                kmeans, variance_tau, baseline_mode, alpha, calibration_quantile)

inline const std::array<std::string, 2> kDetectors{"pul", "baseline"};
inline const std::array<std::string, 2> kTestSets{"rsa", "tsa"};

struct CellResult {
  double level = 0.0;
  std::uint64_t seed = 0;
  std::string detector;
  std::string test_set;
  Scores scores;
  double alpha = 0.0;  // baseline rows only
};

struct SummaryRow {
  double level = 0.0;
  std::string detector;
  std::string test_set;
  double precision = 0.0, recall = 0.0, f1 = 0.0, f1_std = 0.0;
  std::size_t n_seeds = 0;
};

struct SweepReport {
  SweepConfig config;
  std::vector<CellResult> cells;   // ordered by (seed, level, detector, test_set)
  std::vector<SummaryRow> summary;  // ordered by (level, detector, test_set)
  std::vector<json> training;       // per (seed, level): counts, silhouette, epochs

  // Mean F1 across test sets and seeds.
  double mean_f1(double level, const std::string& detector) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells)
      if (c.level == level && c.detector == detector) {
        sum += c.scores.f1;
        ++n;
      }
    return n ? sum / static_cast<double>(n) : 0.0;
  }
};

// Run seeds for the seven simulated traces behind one sweep seed: two benign
// training runs, one RSA and one TSA training run, then one benign, one RSA
// and one TSA run reserved for testing.
inline std::array<std::uint64_t, 7> run_seeds(std::uint64_t sweep_seed) {
  std::array<std::uint64_t, 7> s{};
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = Rng::mix(sweep_seed * 16 + k);
  return s;
}

struct SeedPools {
  data::Pool benign, rsa, tsa;
  data::Dataset test_rsa, test_tsa;
};

inline SeedPools build_seed_pools(const SweepConfig& cfg, std::uint64_t seed) {
  const auto rs = run_seeds(seed);
  SeedPools p;
  p.benign = data::simulate_pool("benign-train", sim::Scenario::Benign, {rs[0], rs[1]}, cfg.network, cfg.attack);
  p.rsa = data::simulate_pool("rsa-train", sim::Scenario::RSA, {rs[2]}, cfg.network, cfg.attack);
  p.tsa = data::simulate_pool("tsa-train", sim::Scenario::TSA, {rs[3]}, cfg.network, cfg.attack);
  const auto tb = data::simulate_pool("benign-test", sim::Scenario::Benign, {rs[4]}, cfg.network, cfg.attack);
  const auto tr = data::simulate_pool("rsa-test", sim::Scenario::RSA, {rs[5]}, cfg.network, cfg.attack);
  const auto tt = data::simulate_pool("tsa-test", sim::Scenario::TSA, {rs[6]}, cfg.network, cfg.attack);
  std::set<std::string> train_digests;
  for (const auto* pool : {&p.benign, &p.rsa, &p.tsa})
    for (const auto& s : pool->sources) train_digests.insert(s.digest);
  p.test_rsa = data::assemble_test(tb, tr, sim::AttackVariant::RSA, train_digests, cfg.test_per_class, Rng::mix(seed ^ 0xA1));
  p.test_tsa = data::assemble_test(tb, tt, sim::AttackVariant::TSA, train_digests, cfg.test_per_class, Rng::mix(seed ^ 0xA2));
  return p;
}

struct LevelOutcome {
  std::vector<CellResult> cells;
  json training;
};

inline LevelOutcome run_level(const SweepConfig& cfg, const SeedPools& pools, std::uint64_t seed, std::size_t level_idx) {
  const double level = cfg.levels[level_idx];
  data::DatasetSpec spec{cfg.total_records, level, cfg.rsa_tsa_split, cfg.labeled_positive_fraction,
                         Rng::mix(seed * 1000 + level_idx)};
  const auto train = data::assemble_training(pools.benign, pools.rsa, pools.tsa, spec);

  detect::PulOptions opt;
  opt.arch = cfg.arch;
  opt.train = cfg.train;
  opt.train.seed = Rng::mix(seed * 1000 + level_idx + 500);
  opt.kmeans = cfg.kmeans;
  opt.variance_tau = cfg.variance_tau;
  opt.calibration_quantile = cfg.calibration_quantile;
  const auto det = detect::fit_pul_detector(train.values(), train.labeled_mask(), opt);
  const baseline::ThresholdConfig thr{cfg.baseline_mode == BaselineMode::Fixed ? cfg.alpha
                                                                                : std::max(det.calibrated_alpha, 1e-12)};
  LevelOutcome out;
  const auto c = train.counts();
  out.training = json{{"level", level},
                      {"seed", seed},
                      {"counts", {{"benign", c.benign}, {"rsa", c.rsa}, {"tsa", c.tsa}, {"labeled", c.labeled}}},
                      {"selected_features", det.model.selected},
                      {"best_epoch", det.model.best_epoch},
                      {"epochs_run", det.model.history.size()},
                      {"kmeans_inertia", det.inertia},
                      {"cluster_to_class", {detect::to_string(det.cluster_to_class[0]),
                                            detect::to_string(det.cluster_to_class[1])}},
                      {"baseline_alpha", thr.alpha}};
  const std::array<const data::Dataset*, 2> tests{&pools.test_rsa, &pools.test_tsa};
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const auto rows = tests[t]->values();
    const auto truth = tests[t]->truth();
    const auto inputs = detect::model_inputs(det.model, rows);
    out.cells.push_back({level, seed, "pul", kTestSets[t],
                         score(detect::predict_codes(det, detect::encode(det.model, inputs)), truth), 0.0});
    out.cells.push_back({level, seed, "baseline", kTestSets[t],
                         score(baseline::classify(nn::reconstruction_errors(det.model, inputs), thr), truth),
                         thr.alpha});
  }
  return out;
}

// Runs work items 0..n-1 on up to `jobs` threads; results are written to
// their own slot so the reduction order never depends on scheduling.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  pool.clear();
  if (err) std::rethrow_exception(err);
}

inline std::vector<SummaryRow> summarize(const SweepConfig& cfg, const std::vector<CellResult>& cells) {
  std::vector<SummaryRow> out;
  for (double level : cfg.levels)
    for (const auto& d : kDetectors)
      for (const auto& t : kTestSets) {
        SummaryRow r{level, d, t};
        std::vector<double> f1s;
        for (const auto& c : cells)
          if (c.level == level && c.detector == d && c.test_set == t) {
            r.precision += c.scores.precision;
            r.recall += c.scores.recall;
            f1s.push_back(c.scores.f1);
          }
        r.n_seeds = f1s.size();
        if (r.n_seeds == 0) continue;
        const auto n = static_cast<double>(r.n_seeds);
        r.precision /= n;
        r.recall /= n;
        for (double f : f1s) r.f1 += f / n;
        if (r.n_seeds > 1) {
          double ss = 0.0;
          for (double f : f1s) ss += (f - r.f1) * (f - r.f1);
          r.f1_std = std::sqrt(ss / (n - 1));
        }
        out.push_back(r);
      }
  return out;
}

using Progress = std::function<void(const std::string&)>;

inline SweepReport run_sweep(const SweepConfig& cfg, std::size_t jobs = 1, const Progress& progress = {}) {
  cfg.validate();
  SweepReport rep;
  rep.config = cfg;
  const std::size_t nl = cfg.levels.size();
  std::vector<SeedPools> pools(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), jobs, [&](std::size_t s) {
    try {
      pools[s] = build_seed_pools(cfg, cfg.seeds[s]);
    } catch (const Error& e) {
      throw Error("seed " + std::to_string(cfg.seeds[s]) + ": " + e.what());
    }
    if (progress) progress("simulated pools for seed " + std::to_string(cfg.seeds[s]));
  });
  std::vector<LevelOutcome> outcomes(cfg.seeds.size() * nl);
  parallel_for(outcomes.size(), jobs, [&](std::size_t i) {
    const std::size_t s = i / nl, l = i % nl;
    try {
      outcomes[i] = run_level(cfg, pools[s], cfg.seeds[s], l);
    } catch (const Error& e) {
      throw Error("level " + format_double(cfg.levels[l]) + ", seed " + std::to_string(cfg.seeds[s]) + ": " + e.what());
    }
    if (progress)
      progress("finished level " + format_double(cfg.levels[l]) + " seed " + std::to_string(cfg.seeds[s]));
  });
  for (auto& o : outcomes) {
    rep.cells.insert(rep.cells.end(), o.cells.begin(), o.cells.end());
    rep.training.push_back(std::move(o.training));
  }
  rep.summary = summarize(cfg, rep.cells);
  return rep;
}

// ---------------------------------------------------------------------------

inline json scores_to_json(const Scores& s) {
  return json{{"tp", s.cm.tp},
              {"fp", s.cm.fp},
              {"tn", s.cm.tn},
              {"fn", s.cm.fn},
              {"precision", s.precision},
              {"recall", s.recall},
              {"f1", s.f1},
              {"precision_undefined", s.precision_undefined},
              {"recall_undefined", s.recall_undefined},
              {"f1_undefined", s.f1_undefined}};
}

inline json report_to_json(const SweepReport& r) {
  json j;
  j["format"] = "sliceguard-sweep/1";
  j["config"] = r.config;
  j["config_digest"] = sha256_hex(json(r.config).dump());
  j["seeds"] = r.config.seeds;
  json summary = json::array();
  for (const auto& s : r.summary)
    summary.push_back({{"level", s.level},
                       {"detector", s.detector},
                       {"test_set", s.test_set},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"f1", s.f1},
                       {"f1_std", s.f1_std},
                       {"n_seeds", s.n_seeds}});
  j["summary"] = summary;
  json cells = json::array();
  for (const auto& c : r.cells) {
    json row{{"level", c.level}, {"seed", c.seed}, {"detector", c.detector}, {"test_set", c.test_set}};
    row["scores"] = scores_to_json(c.scores);
    if (c.detector == "baseline") row["alpha"] = c.alpha;
    cells.push_back(row);
  }
  j["cells"] = cells;
  j["training"] = r.training;
  // Reference F1 ranges over 10-40% contamination.
  j["reference_f1_percent"] = {{"pul", {{"min", 98.50}, {"max", 99.34}}},
                               {"baseline", {{"min", 53.11}, {"max", 80.74}}}};
  return j;
}

inline void write_report_csv(std::ostream& out, const SweepReport& r) {
  out << "level,detector,test_set,precision,recall,f1,f1_std,n_seeds\n";
  for (const auto& s : r.summary)
    out << format_double(s.level) << ',' << s.detector << ',' << s.test_set << ',' << format_double(s.precision) << ','
        << format_double(s.recall) << ',' << format_double(s.f1) << ',' << format_double(s.f1_std) << ','
        << s.n_seeds << '\n';
}

}  // namespace sliceguard::eval
