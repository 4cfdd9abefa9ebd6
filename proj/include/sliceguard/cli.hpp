#pragma once

// Command-line front end: option parsing, layered configuration, write-once
// artifacts with run manifests, and the sub-commands themselves.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sliceguard/baseline.hpp"
#include "sliceguard/common.hpp"
#include "sliceguard/datasets.hpp"
#include "sliceguard/eval.hpp"
#include "sliceguard/features.hpp"
#include "sliceguard/pul_detector.hpp"
#include "sliceguard/selfcheck.hpp"
#include "sliceguard/sim_core.hpp"

#ifndef SLICEGUARD_VERSION
#define SLICEGUARD_VERSION "0.0.0"
#endif

namespace sliceguard::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Everything a command can be configured with. A config file is a JSON
// object with any subset of these keys.
struct ToolConfig {
  sim::NetworkConfig network;
  sim::AttackOptions attack;
  double window = 1.0;
  data::DatasetSpec dataset;
  nn::AutoencoderArch arch;
  nn::TrainConfig train;
  cluster::KMeansConfig kmeans;
  double variance_tau = 1e-6;
  double calibration_quantile = 0.95;
  baseline::ThresholdConfig baseline;
  struct Sweep {
    std::vector<double> levels{0.1, 0.2, 0.3, 0.4};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t test_per_class = 1000;
    eval::BaselineMode baseline_mode = eval::BaselineMode::Calibrate;
    std::size_t jobs = 1;
  } sweep;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ToolConfig::Sweep, levels, seeds, test_per_class, baseline_mode, jobs)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ToolConfig, network, attack, window, dataset, arch, train, kmeans,
                                                variance_tau, calibration_quantile, baseline, sweep)

namespace detail {

inline void reject_unknown(const json& got, const json& known, const std::string& path) {
  for (auto it = got.begin(); it != got.end(); ++it) {
    const std::string field = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) throw ConfigError(field, "unknown key");
    if (it->is_object() && known.at(it.key()).is_object()) reject_unknown(*it, known.at(it.key()), field);
  }
}

}  // namespace detail

// Defaults overlaid with the file's keys; unknown keys are rejected.
inline ToolConfig load_config(const std::optional<std::string>& path) {
  if (!path) return {};
  json doc;
  try {
    doc = json::parse(read_file(*path));
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("cannot parse ") + *path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config", "top level must be an object");
  json merged = ToolConfig{};
  detail::reject_unknown(doc, merged, "");
  merged.merge_patch(doc);
  try {
    return merged.get<ToolConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config", e.what());
  }
}

inline eval::SweepConfig sweep_config(const ToolConfig& t) {
  eval::SweepConfig s;
  s.levels = t.sweep.levels;
  s.seeds = t.sweep.seeds;
  s.total_records = t.dataset.total_records;
  s.test_per_class = t.sweep.test_per_class;
  s.labeled_positive_fraction = t.dataset.labeled_positive_fraction;
  s.rsa_tsa_split = t.dataset.rsa_tsa_split;
  s.network = t.network;
  s.attack = t.attack;
  s.arch = t.arch;
  s.train = t.train;
  s.kmeans = t.kmeans;
  s.variance_tau = t.variance_tau;
  s.baseline_mode = t.sweep.baseline_mode;
  s.alpha = t.baseline.alpha;
  s.calibration_quantile = t.calibration_quantile;
  return s;
}

class Logger {
 public:
  bool quiet = false;
  bool json_lines = false;
  std::ostream* out = &std::cerr;

  void info(const std::string& msg, const json& fields = json::object()) const {
    if (!quiet) emit("info", msg, fields);
  }
  void warn(const std::string& msg, const json& fields = json::object()) const { emit("warning", msg, fields); }
  void error(const std::string& msg, const json& fields = json::object()) const { emit("error", msg, fields); }

 private:
  void emit(const char* level, const std::string& msg, const json& fields) const {
    if (json_lines) {
      json j = fields;
      j["level"] = level;
      j["message"] = msg;
      *out << j.dump() << '\n';
    } else {
      *out << (std::string(level) == "info" ? "" : std::string(level) + ": ") << msg;
      for (auto it = fields.begin(); it != fields.end(); ++it) *out << ' ' << it.key() << '=' << it->dump();
      *out << '\n';
    }
  }
};

// ---------------------------------------------------------------------------
// Artifacts: outputs are never overwritten; each artifact command leaves
// `<output>.manifest.json` beside its primary output.

inline void ensure_absent(const fs::path& p) {
  if (fs::exists(p)) throw Error("refusing to overwrite existing file " + p.string());
}

// Primary output plus the sidecar and manifest names derived from it.
inline void ensure_fresh(const fs::path& p) {
  for (const char* suffix : {"", ".json", ".manifest.json"}) ensure_absent(fs::path(p.string() + suffix));
}

inline void write_new(const fs::path& p, const std::string& content) {
  ensure_absent(p);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  f << content;
  if (!f.flush()) throw Error("write failed for " + p.string());
}

inline fs::path sidecar(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

class Run {
 public:
  Run(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), t0_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& p) { inputs_.push_back({{"path", p.string()}, {"sha256", file_digest(p)}}); }
  void output(const fs::path& p, const std::string& content) {
    write_new(p, content);
    outputs_.push_back({{"path", p.string()}, {"sha256", sha256_hex(content)}});
  }

  json extra = json::object();

  void finish(const fs::path& manifest, const json& config, const json& seeds) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    json m;
    m["format"] = "sliceguard-manifest/1";
    m["command"] = command_;
    m["argv"] = argv_;
    m["config"] = config;
    m["seeds"] = seeds;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["tool_version"] = SLICEGUARD_VERSION;
    m["wall_clock_seconds"] = secs;
    if (!extra.empty()) m["result"] = extra;
    write_new(manifest, m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point t0_;
  json inputs_ = json::array(), outputs_ = json::array();
};

inline std::string to_text(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

inline data::Dataset load_dataset(const fs::path& csv) {
  const auto meta_path = sidecar(csv, ".json");
  if (!fs::exists(meta_path)) throw Error("dataset metadata " + meta_path.string() + " not found");
  std::ifstream in(csv);
  if (!in) throw Error("cannot open " + csv.string());
  return data::read_dataset(in, json::parse(read_file(meta_path)));
}

// Rows to classify: a dataset CSV (with its metadata sidecar) or a feature
// CSV written by `features`. Truth is known for both.
struct Rows {
  std::vector<features::FeatureVector> values;
  std::vector<detect::Verdict> truth;
};

inline Rows load_rows(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  std::string first;
  std::getline(in, first);
  Rows r;
  if (first.rfind("window_start,", 0) == 0) {
    in.seekg(0);
    const auto fm = features::read_feature_csv(in);
    for (const auto& row : fm.rows) {
      r.values.push_back(row.values);
      r.truth.push_back(features::is_attack(row.label) ? detect::Verdict::Attack : detect::Verdict::Benign);
    }
    return r;
  }
  const auto ds = load_dataset(p);
  return {ds.values(), ds.truth()};
}

inline std::string verdict_csv(const std::vector<detect::Verdict>& v, const std::vector<detect::Verdict>& truth,
                               const std::vector<double>* errors = nullptr) {
  std::ostringstream s;
  s << "row,verdict,truth" << (errors ? ",reconstruction_error" : "") << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) {
    s << i << ',' << detect::to_string(v[i]) << ',' << detect::to_string(truth[i]);
    if (errors) s << ',' << format_double((*errors)[i]);
    s << '\n';
  }
  return s.str();
}

inline std::vector<std::string> joined_argv(int argc, const char* const* argv) {
  return {argv, argv + argc};
}

// ---------------------------------------------------------------------------

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  bool quiet = false;
  bool json_logs = false;
};

// Parses and runs one command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Inter-slice switching attack simulator and PUL detector", "sliceguard"};
  app.set_version_flag("--version", SLICEGUARD_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for simulation, sampling and training");
  app.add_option("--config", g.config, "JSON config file (flags take precedence)");
  app.add_flag("--quiet", g.quiet, "Only report warnings and errors");
  app.add_flag("--json-logs", g.json_logs, "Emit log lines as JSON objects");

  Logger log;
  log.out = &err;
  const auto args = joined_argv(argc, argv);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate one emulation run and write its event trace");
  std::string scenario, sim_out;
  std::optional<double> duration, attack_start, burst, switchback;
  std::optional<std::uint32_t> ues, compromised, slices;
  sim_cmd->add_option("--scenario", scenario, "benign | rsa | tsa")->required()->check(
      CLI::IsMember({"benign", "rsa", "tsa"}));
  sim_cmd->add_option("--out", sim_out, "Trace file (JSON lines)")->required();
  sim_cmd->add_option("--duration", duration, "Emulation duration in seconds");
  sim_cmd->add_option("--attack-start", attack_start, "Attack start in seconds");
  sim_cmd->add_option("--ues", ues, "Connected UEs");
  sim_cmd->add_option("--compromised", compromised, "Compromised UEs");
  sim_cmd->add_option("--slices", slices, "Network slices");
  sim_cmd->add_option("--burst-interval", burst, "Seconds between attack bursts");
  sim_cmd->add_option("--switchback", switchback, "Probability a switched UE returns");

  // features
  auto* feat_cmd = app.add_subcommand("features", "Extract per-window features from a trace");
  std::string feat_trace, feat_out;
  std::optional<double> window, tau;
  feat_cmd->add_option("--trace", feat_trace, "Trace file")->required()->check(CLI::ExistingFile);
  feat_cmd->add_option("--window", window, "Window width in seconds");
  feat_cmd->add_option("--tau", tau, "Variance threshold for the feature selection sidecar");
  feat_cmd->add_option("--out", feat_out, "Feature CSV")->required();

  // dataset build | pca
  auto* ds_cmd = app.add_subcommand("dataset", "Build or inspect datasets");
  ds_cmd->require_subcommand(1);
  auto* ds_build = ds_cmd->add_subcommand("build", "Simulate pools and assemble a training dataset");
  std::optional<double> contamination, labeled, split;
  std::optional<std::size_t> total;
  std::string ds_out;
  ds_build->add_option("--contamination", contamination, "Attack share of the rows");
  ds_build->add_option("--total", total, "Total rows");
  ds_build->add_option("--labeled", labeled, "Share of all rows that are labeled benign");
  ds_build->add_option("--rsa-share", split, "RSA share of the attack rows");
  ds_build->add_option("--out", ds_out, "Dataset CSV (metadata goes to <out>.json)")->required();
  std::string pca_in, pca_out;
  auto add_pca = [&](CLI::App* c) {
    c->add_option("--in", pca_in, "Dataset CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--out", pca_out, "Projection CSV")->required();
  };
  auto* ds_pca = ds_cmd->add_subcommand("pca", "Project a dataset onto its first two principal components");
  add_pca(ds_pca);
  auto* pca_cmd = app.add_subcommand("pca", "Same as `dataset pca`");
  add_pca(pca_cmd);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder and fit the PUL detector");
  std::string train_data, train_out;
  std::optional<std::size_t> epochs, batch, patience;
  std::optional<double> lr, dropout;
  std::optional<nn::DropoutPlacement> placement;
  bool kfold = false;
  train_cmd->add_option("--data", train_data, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Detector JSON")->required();
  train_cmd->add_option("--epochs", epochs, "Maximum epochs");
  train_cmd->add_option("--batch", batch, "Batch size");
  train_cmd->add_option("--patience", patience, "Early-stopping patience");
  train_cmd->add_option("--lr", lr, "Adam learning rate");
  train_cmd->add_option("--dropout", dropout, "Dropout rate");
  train_cmd->add_option("--dropout-placement", placement, "outputs | decoder | recurrent")
      ->transform(CLI::CheckedTransformer(std::map<std::string, nn::DropoutPlacement>{
          {"outputs", nn::DropoutPlacement::Outputs},
          {"decoder", nn::DropoutPlacement::Decoder},
          {"recurrent", nn::DropoutPlacement::Recurrent}}));
  train_cmd->add_flag("--kfold-audit", kfold, "Also run the k-fold audit and record it in the manifest");

  // classify
  auto* cls_cmd = app.add_subcommand("classify", "Classify rows with a trained PUL detector");
  std::string cls_model, cls_data, cls_out;
  cls_cmd->add_option("--model", cls_model, "Detector JSON")->required()->check(CLI::ExistingFile);
  cls_cmd->add_option("--data", cls_data, "Dataset or feature CSV")->required()->check(CLI::ExistingFile);
  cls_cmd->add_option("--out", cls_out, "Verdict CSV")->required();

  // baseline classify
  auto* base_cmd = app.add_subcommand("baseline", "Reconstruction-error threshold detector");
  base_cmd->require_subcommand(1);
  auto* base_cls = base_cmd->add_subcommand("classify", "Classify rows by reconstruction error");
  std::string base_model, base_data, base_out;
  std::optional<double> alpha;
  bool calibrate = false;
  base_cls->add_option("--model", base_model, "Detector JSON")->required()->check(CLI::ExistingFile);
  base_cls->add_option("--data", base_data, "Dataset or feature CSV")->required()->check(CLI::ExistingFile);
  base_cls->add_option("--out", base_out, "Verdict CSV")->required();
  auto* alpha_opt = base_cls->add_option("--alpha", alpha, "Fixed threshold in normalized space");
  base_cls->add_flag("--calibrate", calibrate, "Use the threshold calibrated on the training rows")->excludes(alpha_opt);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Contamination sweep over both detectors");
  std::optional<std::vector<double>> levels;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::size_t> sweep_total, per_class, jobs;
  std::optional<eval::BaselineMode> mode;
  std::optional<std::size_t> sweep_epochs;
  std::optional<nn::DropoutPlacement> sweep_placement;
  std::string sweep_out;
  sweep_cmd->add_option("--levels", levels, "Contamination levels")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Sweep seeds (default: --seed, else 1,2,3)")->delimiter(',');
  sweep_cmd->add_option("--total", sweep_total, "Training rows per level");
  sweep_cmd->add_option("--test-per-class", per_class, "Test rows per class");
  sweep_cmd->add_option("--jobs", jobs, "Worker threads");
  sweep_cmd->add_option("--epochs", sweep_epochs, "Maximum epochs");
  sweep_cmd->add_option("--baseline-mode", mode, "calibrate | fixed")
      ->transform(CLI::CheckedTransformer(std::map<std::string, eval::BaselineMode>{
          {"calibrate", eval::BaselineMode::Calibrate}, {"fixed", eval::BaselineMode::Fixed}}));
  sweep_cmd->add_option("--dropout-placement", sweep_placement, "outputs | decoder | recurrent")
      ->transform(CLI::CheckedTransformer(std::map<std::string, nn::DropoutPlacement>{
          {"outputs", nn::DropoutPlacement::Outputs},
          {"decoder", nn::DropoutPlacement::Decoder},
          {"recurrent", nn::DropoutPlacement::Recurrent}}));
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();

  auto* check_cmd = app.add_subcommand("selfcheck", "Run the built-in oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << SLICEGUARD_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  log.quiet = g.quiet;
  log.json_lines = g.json_logs;

  try {
    ToolConfig cfg = load_config(g.config);
    if (g.seed) {
      cfg.dataset.seed = *g.seed;
      cfg.train.seed = *g.seed;
    }
    const std::uint64_t seed = g.seed.value_or(0);

    if (sim_cmd->parsed()) {
      if (duration) cfg.network.emulation_duration = *duration;
      if (attack_start) cfg.network.attack_start = *attack_start;
      if (ues) cfg.network.num_ues = *ues;
      if (compromised) cfg.network.num_compromised = *compromised;
      if (slices) cfg.network.num_slices = *slices;
      if (burst) cfg.attack.burst_interval = *burst;
      if (switchback) cfg.attack.switchback_prob = *switchback;
      cfg.network.validate();
      if (!(cfg.attack.burst_interval > 0)) throw ConfigError("burst_interval", "must be positive");
      if (!(cfg.attack.switchback_prob >= 0 && cfg.attack.switchback_prob <= 1))
        throw ConfigError("switchback_prob", "must lie in [0, 1]");
      ensure_fresh(sim_out);
      Run r("simulate", args);
      const auto trace = sim::simulate(sim::parse_scenario(scenario), cfg.network, seed, cfg.attack);
      r.output(sim_out, to_text([&](std::ostream& s) { sim::write_trace(s, trace); }));
      r.extra = {{"trace_digest", trace.digest()}, {"events", trace.events.size()}};
      r.finish(sidecar(sim_out, ".manifest.json"),
               {{"scenario", scenario}, {"network", cfg.network}, {"attack", cfg.attack}}, {{"run", seed}});
      log.info("wrote trace", {{"path", sim_out}, {"events", trace.events.size()}});
      return 0;
    }

    if (feat_cmd->parsed()) {
      if (window) cfg.window = *window;
      if (tau) cfg.variance_tau = *tau;
      if (!(cfg.window > 0)) throw ConfigError("window", "must be positive");
      if (!(cfg.variance_tau >= 0)) throw ConfigError("variance_tau", "must be non-negative");
      ensure_fresh(feat_out);
      Run r("features", args);
      r.input(feat_trace);
      std::ifstream in(feat_trace);
      const auto trace = sim::read_trace(in);
      const auto fm = features::compute_window_features(trace, cfg.window);
      if (fm.empty()) throw Error("trace has no events");
      const auto pre = detect::fit_preprocessing(
          [&] {
            std::vector<features::FeatureVector> v;
            for (const auto& row : fm.rows) v.push_back(row.values);
            return v;
          }(),
          cfg.variance_tau);
      json side{{"format", "sliceguard-features/1"},
                {"trace_digest", fm.trace_digest},
                {"window", cfg.window},
                {"variance_tau", cfg.variance_tau},
                {"selected", pre.selected},
                {"normalizer", pre.normalizer}};
      r.output(feat_out, to_text([&](std::ostream& s) { features::write_feature_csv(s, fm); }));
      r.output(sidecar(feat_out, ".json"), side.dump(2) + "\n");
      r.extra = {{"rows", fm.size()}, {"selected", pre.selected.size()}};
      r.finish(sidecar(feat_out, ".manifest.json"), {{"window", cfg.window}, {"variance_tau", cfg.variance_tau}},
               {{"run", trace.seed}});
      log.info("wrote features", {{"path", feat_out}, {"rows", fm.size()}});
      return 0;
    }

    if (ds_build->parsed()) {
      if (contamination) cfg.dataset.contamination = *contamination;
      if (total) cfg.dataset.total_records = *total;
      if (labeled) cfg.dataset.labeled_positive_fraction = *labeled;
      if (split) cfg.dataset.rsa_tsa_split = *split;
      cfg.dataset.validate();
      cfg.network.validate();
      ensure_fresh(ds_out);
      Run r("dataset build", args);
      const auto ds = data::build_training_dataset(cfg.dataset, cfg.network, cfg.attack);
      r.output(ds_out, to_text([&](std::ostream& s) { data::write_dataset_csv(s, ds); }));
      r.output(sidecar(ds_out, ".json"), data::dataset_metadata(ds).dump(2) + "\n");
      const auto c = ds.counts();
      r.extra = {{"benign", c.benign}, {"rsa", c.rsa}, {"tsa", c.tsa}, {"labeled", c.labeled}};
      json run_seeds = json::array();
      for (const auto& s : ds.sources) run_seeds.push_back(s.seed);
      r.finish(sidecar(ds_out, ".manifest.json"),
               {{"dataset", cfg.dataset}, {"network", cfg.network}, {"attack", cfg.attack}},
               {{"dataset", cfg.dataset.seed}, {"runs", run_seeds}});
      log.info("wrote dataset", {{"path", ds_out}, {"benign", c.benign}, {"rsa", c.rsa}, {"tsa", c.tsa}});
      return 0;
    }

    if (ds_pca->parsed() || pca_cmd->parsed()) {
      ensure_fresh(pca_out);
      Run r("dataset pca", args);
      r.input(pca_in);
      const auto ds = load_dataset(pca_in);
      const auto x = data::normalized_matrix(ds);
      const auto p = data::pca_project(x, 2);
      std::vector<int> lab;
      for (const auto& row : ds.rows) lab.push_back(row.truth() == detect::Verdict::Attack);
      const double sil = data::silhouette(p.coords, lab);
      std::ostringstream s;
      s << "pc1,pc2,truth,variant\n";
      for (std::size_t i = 0; i < ds.rows.size(); ++i)
        s << format_double(p.coords(static_cast<Eigen::Index>(i), 0)) << ','
          << format_double(p.coords(static_cast<Eigen::Index>(i), 1)) << ','
          << detect::to_string(ds.rows[i].truth()) << ',' << features::to_string(ds.rows[i].variant) << '\n';
      r.output(pca_out, s.str());
      r.extra = {{"silhouette", sil}, {"explained_variance_ratio", {p.explained(0), p.explained(1)}}};
      r.finish(sidecar(pca_out, ".manifest.json"), {{"dims", 2}}, json::object());
      log.info("wrote projection", {{"path", pca_out}, {"silhouette", sil}});
      return 0;
    }

    if (train_cmd->parsed()) {
      if (epochs) cfg.train.max_epochs = *epochs;
      if (batch) cfg.train.batch_size = *batch;
      if (patience) cfg.train.patience = *patience;
      if (lr) cfg.train.learning_rate = *lr;
      if (dropout) cfg.train.dropout = *dropout;
      if (placement) cfg.train.dropout_placement = *placement;
      cfg.train.validate();
      cfg.kmeans.validate();
      ensure_fresh(train_out);
      Run r("train", args);
      r.input(train_data);
      const auto ds = load_dataset(train_data);
      detect::PulOptions opt{cfg.arch, cfg.train, cfg.kmeans, cfg.variance_tau, cfg.calibration_quantile};
      log.info("training", {{"rows", ds.size()}, {"seed", cfg.train.seed}});
      const auto det = detect::fit_pul_detector(ds.values(), ds.labeled_mask(), opt);
      r.output(train_out, detect::detector_to_json(det).dump() + "\n");
      r.extra = {{"best_epoch", det.model.best_epoch},
                 {"epochs_run", det.model.history.size()},
                 {"best_val_loss", det.model.history.at(det.model.best_epoch - 1).val_loss},
                 {"selected_features", det.model.selected},
                 {"calibrated_alpha", det.calibrated_alpha}};
      if (kfold) {
        const auto rows = ds.values();
        const auto folds = nn::kfold_audit(detect::model_inputs(det.model, rows), det.model.arch(), cfg.train);
        json fj = json::array();
        for (const auto& f : folds) fj.push_back({{"fold", f.fold}, {"best_epoch", f.best_epoch}, {"val_loss", f.val_loss}});
        r.extra["kfold_audit"] = fj;
      }
      r.finish(sidecar(train_out, ".manifest.json"),
               {{"arch", det.model.arch()}, {"train", cfg.train}, {"kmeans", cfg.kmeans},
                {"variance_tau", cfg.variance_tau}, {"calibration_quantile", cfg.calibration_quantile}},
               {{"train", cfg.train.seed}, {"kmeans", cfg.kmeans.seed}});
      log.info("wrote detector", {{"path", train_out}, {"best_epoch", det.model.best_epoch}});
      return 0;
    }

    if (cls_cmd->parsed() || base_cls->parsed()) {
      const bool pul = cls_cmd->parsed();
      const std::string& model_path = pul ? cls_model : base_model;
      const std::string& data_path = pul ? cls_data : base_data;
      const std::string& out_path = pul ? cls_out : base_out;
      ensure_fresh(out_path);
      Run r(pul ? "classify" : "baseline classify", args);
      r.input(model_path);
      r.input(data_path);
      const auto det = detect::detector_from_json(json::parse(read_file(model_path)));
      const auto rows = load_rows(data_path);
      std::vector<detect::Verdict> v;
      std::string csv;
      json used = json::object();
      if (pul) {
        v = detect::predict(det, rows.values);
        csv = verdict_csv(v, rows.truth);
      } else {
        baseline::ThresholdConfig thr = cfg.baseline;
        if (alpha) thr.alpha = *alpha;
        if (calibrate) {
          if (!(det.calibrated_alpha > 0)) throw ConfigError("calibrate", "model carries no calibrated threshold");
          thr.alpha = det.calibrated_alpha;
        }
        thr.validate();
        const auto errs = baseline::reconstruction_errors(det.model, rows.values);
        v = baseline::classify(errs, thr);
        csv = verdict_csv(v, rows.truth, &errs);
        used = {{"alpha", thr.alpha}, {"calibrated", calibrate}};
      }
      const auto sc = eval::score(v, rows.truth);
      r.output(out_path, csv);
      r.extra = eval::scores_to_json(sc);
      r.finish(sidecar(out_path, ".manifest.json"), used, json::object());
      log.info("wrote verdicts", {{"path", out_path}, {"precision", sc.precision}, {"recall", sc.recall}, {"f1", sc.f1}});
      return 0;
    }

    if (sweep_cmd->parsed()) {
      if (levels) cfg.sweep.levels = *levels;
      if (seeds)
        cfg.sweep.seeds = *seeds;
      else if (g.seed)
        cfg.sweep.seeds = {*g.seed};
      if (sweep_total) cfg.dataset.total_records = *sweep_total;
      if (per_class) cfg.sweep.test_per_class = *per_class;
      if (jobs) cfg.sweep.jobs = *jobs;
      if (mode) cfg.sweep.baseline_mode = *mode;
      if (sweep_epochs) cfg.train.max_epochs = *sweep_epochs;
      if (sweep_placement) cfg.train.dropout_placement = *sweep_placement;
      const auto sc = sweep_config(cfg);
      sc.validate();
      const fs::path dir = sweep_out;
      for (const char* f : {"report.json", "report.csv", "manifest.json"}) ensure_absent(dir / f);
      Run r("sweep", args);
      const auto report = eval::run_sweep(sc, std::max<std::size_t>(1, cfg.sweep.jobs), [&](const std::string& msg) {
        log.info(msg);
      });
      r.output(dir / "report.json", eval::report_to_json(report).dump(2) + "\n");
      r.output(dir / "report.csv", to_text([&](std::ostream& s) { eval::write_report_csv(s, report); }));
      json means = json::object();
      for (double l : sc.levels)
        for (const auto& d : eval::kDetectors) means[format_double(l)][d] = report.mean_f1(l, d);
      r.extra = {{"mean_f1", means}};
      r.finish(dir / "manifest.json", sc, sc.seeds);
      log.info("wrote sweep report", {{"dir", sweep_out}});
      return 0;
    }

    if (check_cmd->parsed()) {
      bool all = true;
      for (const auto& s : selfcheck::run_all()) {
        all = all && s.passed;
        if (log.json_lines)
          out << json{{"suite", s.name}, {"passed", s.passed}, {"cases", s.cases}, {"failures", s.failures},
                      {"detail", s.detail}}
                     .dump()
              << '\n';
        else
          out << (s.passed ? "PASS " : "FAIL ") << s.name << " (" << s.cases << " cases, " << s.failures
              << " failures) " << s.detail << '\n';
      }
      return all ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    log.error(std::string("invalid config: ") + e.what(), {{"field", e.field()}});
    return 1;
  } catch (const std::exception& e) {
    log.error(e.what());
    return 1;
  }
  return 2;
}

}  // namespace sliceguard::cli
