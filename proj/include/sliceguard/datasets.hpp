#pragma once

// Training/test dataset assembly from per-run feature pools, PCA projection
// and the dataset file format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sliceguard/common.hpp"
#include "sliceguard/features.hpp"
#include "sliceguard/pul_detector.hpp"
#include "sliceguard/sim_core.hpp"

namespace sliceguard::data {

using json = nlohmann::json;
using detect::Verdict;
using features::FeatureVector;

struct DatasetSpec {
  std::size_t total_records = 8000;
  double contamination = 0.3;
  double rsa_tsa_split = 0.5;  // RSA share of the attack rows
  double labeled_positive_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (total_records == 0) throw ConfigError("total_records", "must be positive");
    if (!(contamination >= 0 && contamination < 1)) throw ConfigError("contamination", "must lie in [0, 1)");
    if (!(rsa_tsa_split >= 0 && rsa_tsa_split <= 1)) throw ConfigError("rsa_tsa_split", "must lie in [0, 1]");
    if (!(labeled_positive_fraction >= 0)) throw ConfigError("labeled_positive_fraction", "must be non-negative");
    if (labeled_positive_fraction > 1 - contamination + 1e-12)
      throw ConfigError("labeled_positive_fraction", "exceeds 1 - contamination (only benign rows can be labeled)");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetSpec, total_records, contamination, rsa_tsa_split,
                                                labeled_positive_fraction, seed)

struct Counts {
  std::size_t benign = 0, rsa = 0, tsa = 0, labeled = 0;
  std::size_t total() const { return benign + rsa + tsa; }
  bool operator==(const Counts&) const = default;
};

inline std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

inline Counts planned_counts(const DatasetSpec& spec) {
  spec.validate();
  Counts c;
  const std::size_t attack = round_count(spec.contamination * static_cast<double>(spec.total_records));
  c.benign = spec.total_records - attack;
  c.rsa = round_count(spec.rsa_tsa_split * static_cast<double>(attack));
  c.tsa = attack - c.rsa;
  c.labeled = std::min(c.benign, round_count(spec.labeled_positive_fraction * static_cast<double>(spec.total_records)));
  return c;
}

// Where rows came from; digests key provenance checks.
struct Source {
  std::string digest;
  sim::Scenario scenario = sim::Scenario::Benign;
  std::uint64_t seed = 0;
  bool operator==(const Source&) const = default;
};

inline void to_json(json& j, const Source& s) {
  j = json{{"digest", s.digest}, {"scenario", sim::to_string(s.scenario)}, {"seed", s.seed}};
}
inline void from_json(const json& j, Source& s) {
  s.digest = j.at("digest").get<std::string>();
  s.scenario = sim::parse_scenario(j.at("scenario").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
}

struct DatasetRow {
  FeatureVector values{};
  features::Label variant = features::Label::Benign;  // Benign, RSA or TSA
  bool labeled = false;
  std::string trace_digest;
  double window_start = 0.0;

  Verdict truth() const { return features::is_attack(variant) ? Verdict::Attack : Verdict::Benign; }
};

struct Dataset {
  std::string kind;  // "training", "test-rsa", "test-tsa"
  std::optional<DatasetSpec> spec;
  std::vector<Source> sources;
  std::vector<DatasetRow> rows;

  std::size_t size() const { return rows.size(); }

  Counts counts() const {
    Counts c;
    for (const auto& r : rows) {
      if (r.variant == features::Label::RSA)
        ++c.rsa;
      else if (r.variant == features::Label::TSA)
        ++c.tsa;
      else
        ++c.benign;
      if (r.labeled) ++c.labeled;
    }
    return c;
  }

  std::vector<FeatureVector> values() const {
    std::vector<FeatureVector> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.values);
    return v;
  }
  std::vector<Verdict> truth() const {
    std::vector<Verdict> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.truth());
    return v;
  }
  std::vector<bool> labeled_mask() const {
    std::vector<bool> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.labeled);
    return v;
  }
  std::set<std::string> digests() const {
    std::set<std::string> d;
    for (const auto& s : sources) d.insert(s.digest);
    for (const auto& r : rows) d.insert(r.trace_digest);
    return d;
  }
};

struct Pool {
  std::string name;
  std::vector<Source> sources;
  std::vector<DatasetRow> rows;
};

// Benign pools keep every benign-labeled window; attack pools keep only
// attack-window rows (pre-attack rows of attack runs are discarded).
inline void add_to_pool(Pool& pool, const features::FeatureMatrix& m, const Source& src, bool attack_rows) {
  pool.sources.push_back(src);
  for (const auto& r : m.rows) {
    if (features::is_attack(r.label) != attack_rows) continue;
    pool.rows.push_back({r.values, r.label, false, src.digest, r.window_start});
  }
}

inline Pool simulate_pool(const std::string& name, sim::Scenario scenario, const std::vector<std::uint64_t>& seeds,
                          const sim::NetworkConfig& cfg, const sim::AttackOptions& attack = {}) {
  Pool pool{name, {}, {}};
  for (auto seed : seeds) {
    const auto trace = sim::simulate(scenario, cfg, seed, attack);
    add_to_pool(pool, features::compute_window_features(trace), {trace.digest(), scenario, seed},
                scenario != sim::Scenario::Benign);
  }
  return pool;
}

namespace detail {

inline std::vector<DatasetRow> draw(const Pool& pool, std::size_t n, Rng& rng) {
  if (pool.rows.size() < n)
    throw Error("insufficient pool '" + pool.name + "': need " + std::to_string(n) + " rows, have " +
                std::to_string(pool.rows.size()));
  std::vector<std::size_t> idx(pool.rows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(idx.size() - i))]);
  std::vector<DatasetRow> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool.rows[idx[i]]);
  return out;
}

inline void merge_sources(std::vector<Source>& into, const Pool& pool) {
  for (const auto& s : pool.sources)
    if (std::find(into.begin(), into.end(), s) == into.end()) into.push_back(s);
}

}  // namespace detail

// Mixes benign and attack rows in the proportions of `spec`, marks a uniformly drawn subset
// of the benign rows as labeled, and shuffles.
inline Dataset assemble_training(const Pool& benign, const Pool& rsa, const Pool& tsa, const DatasetSpec& spec) {
  const auto c = planned_counts(spec);
  Rng rng(spec.seed);
  Rng draw_rng = rng.fork(1), label_rng = rng.fork(2), order_rng = rng.fork(3);
  auto b = detail::draw(benign, c.benign, draw_rng);
  auto r = detail::draw(rsa, c.rsa, draw_rng);
  auto t = detail::draw(tsa, c.tsa, draw_rng);
  std::vector<std::size_t> idx(b.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < c.labeled; ++i)
    std::swap(idx[i], idx[i + static_cast<std::size_t>(label_rng.below(idx.size() - i))]);
  for (std::size_t i = 0; i < c.labeled; ++i) b[idx[i]].labeled = true;

  Dataset ds;
  ds.kind = "training";
  ds.spec = spec;
  for (const auto* p : {&benign, &rsa, &tsa}) detail::merge_sources(ds.sources, *p);
  ds.rows = std::move(b);
  ds.rows.insert(ds.rows.end(), r.begin(), r.end());
  ds.rows.insert(ds.rows.end(), t.begin(), t.end());
  order_rng.shuffle(ds.rows);
  return ds;
}

inline Dataset assemble_test(const Pool& benign, const Pool& attack, sim::AttackVariant variant,
                             const std::set<std::string>& training_digests, std::size_t per_class = 10000,
                             std::uint64_t seed = 0) {
  for (const auto* p : {&benign, &attack}) {
    for (const auto& s : p->sources)
      if (training_digests.count(s.digest))
        throw Error("pool '" + p->name + "' overlaps training provenance (trace " + s.digest.substr(0, 12) + ")");
  }
  const auto want = variant == sim::AttackVariant::RSA ? features::Label::RSA : features::Label::TSA;
  for (const auto& r : attack.rows)
    if (r.variant != want) throw Error("pool '" + attack.name + "' holds rows of the wrong variant");
  Rng rng(seed);
  Rng draw_rng = rng.fork(1), order_rng = rng.fork(3);
  Dataset ds;
  ds.kind = variant == sim::AttackVariant::RSA ? "test-rsa" : "test-tsa";
  detail::merge_sources(ds.sources, benign);
  detail::merge_sources(ds.sources, attack);
  ds.rows = detail::draw(benign, per_class, draw_rng);
  auto a = detail::draw(attack, per_class, draw_rng);
  ds.rows.insert(ds.rows.end(), a.begin(), a.end());
  order_rng.shuffle(ds.rows);
  return ds;
}

// Simulates runs seed_base+0, +1, ... until the pool holds `need` rows.
inline Pool fill_pool(const std::string& name, sim::Scenario scenario, std::size_t need, const sim::NetworkConfig& cfg,
                      const sim::AttackOptions& attack, std::uint64_t seed_base, std::size_t max_runs = 256) {
  Pool pool{name, {}, {}};
  for (std::size_t k = 0; pool.rows.size() < need; ++k) {
    if (k == max_runs) throw Error("pool '" + name + "' still short after " + std::to_string(max_runs) + " runs");
    const auto seed = Rng::mix(seed_base + k);
    const auto trace = sim::simulate(scenario, cfg, seed, attack);
    add_to_pool(pool, features::compute_window_features(trace), {trace.digest(), scenario, seed},
                scenario != sim::Scenario::Benign);
  }
  return pool;
}

// Self-contained training set: pools are simulated from spec.seed.
inline Dataset build_training_dataset(const DatasetSpec& spec, const sim::NetworkConfig& cfg,
                                      const sim::AttackOptions& attack = {}) {
  const auto c = planned_counts(spec);
  cfg.validate();
  const auto base = [&](std::uint64_t k) { return Rng::mix(spec.seed * 8 + k) & 0xffffffffffffull; };
  const auto benign = fill_pool("benign", sim::Scenario::Benign, c.benign, cfg, attack, base(0));
  const auto rsa = fill_pool("rsa", sim::Scenario::RSA, c.rsa, cfg, attack, base(1));
  const auto tsa = fill_pool("tsa", sim::Scenario::TSA, c.tsa, cfg, attack, base(2));
  return assemble_training(benign, rsa, tsa, spec);
}

// ---------------------------------------------------------------------------
// PCA and silhouette.

struct PcaResult {
  Eigen::MatrixXd coords;      // n x dims
  Eigen::VectorXd explained;   // variance ratio per component
  Eigen::MatrixXd components;  // d x dims, unit columns
  Eigen::RowVectorXd mean;
};

// Components are ordered by decreasing variance; each is signed so that its
// largest-magnitude loading is positive.
inline PcaResult pca_project(const Eigen::MatrixXd& x, std::size_t dims = 2) {
  if (dims == 0 || static_cast<Eigen::Index>(dims) > x.cols()) throw Error("pca_project: dims out of range");
  if (x.rows() < static_cast<Eigen::Index>(dims) || x.rows() < 2) throw Error("pca_project: fewer rows than dims");
  PcaResult r;
  r.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - r.mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca_project: eigendecomposition failed");
  const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
  const double total = vals.sum();
  const auto d = x.cols();
  r.components.resize(d, static_cast<Eigen::Index>(dims));
  r.explained.resize(static_cast<Eigen::Index>(dims));
  for (std::size_t k = 0; k < dims; ++k) {
    const Eigen::Index src = d - 1 - static_cast<Eigen::Index>(k);  // eigenvalues ascend
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.col(static_cast<Eigen::Index>(k)) = v;
    r.explained(static_cast<Eigen::Index>(k)) = total > 0 ? vals(src) / total : 0.0;
  }
  r.coords = centered * r.components;
  return r;
}

// Mean silhouette coefficient for a labeling into two or more groups.
inline double silhouette(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (labels.size() != n) throw Error("silhouette: length mismatch");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw Error("silhouette: need at least two groups");
  std::map<int, std::size_t> slot;
  for (const auto& [l, _] : sizes) slot.emplace(l, slot.size());
  std::vector<double> count(sizes.size());
  for (const auto& [l, s] : sizes) count[slot[l]] = static_cast<double>(s);
  std::vector<std::size_t> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = slot[labels[i]];

  double sum = 0.0;
  std::vector<double> dist(sizes.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist.begin(), dist.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      dist[g[j]] += (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
    if (count[g[i]] <= 1) continue;  // singleton clusters score 0
    const double a = dist[g[i]] / (count[g[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < dist.size(); ++c)
      if (c != g[i]) b = std::min(b, dist[c] / count[c]);
    const double m = std::max(a, b);
    if (m > 0) sum += (b - a) / m;
  }
  return sum / static_cast<double>(n);
}

// Normalized feature matrix (min-max fit on the dataset itself) used for PCA.
inline Eigen::MatrixXd normalized_matrix(const Dataset& ds) {
  const auto x = features::to_matrix(ds.values());
  return features::apply_normalizer(x, features::fit_normalizer(x));
}

inline double pca_silhouette(const Dataset& ds) {
  const auto p = pca_project(normalized_matrix(ds), 2);
  std::vector<int> labels;
  labels.reserve(ds.size());
  for (const auto& r : ds.rows) labels.push_back(r.truth() == Verdict::Attack ? 1 : 0);
  return silhouette(p.coords, labels);
}

// ---------------------------------------------------------------------------
// Files: CSV rows plus a JSON metadata document (kind, spec, sources).
// Variants of attack rows are recovered through the source scenario.

inline void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  for (auto n : features::kFeatureNames) out << n << ',';
  out << "truth,labeled_mask,trace_digest,window_start\n";
  for (const auto& r : ds.rows) {
    for (double v : r.values) out << format_double(v) << ',';
    out << detect::to_string(r.truth()) << ',' << (r.labeled ? 1 : 0) << ',' << r.trace_digest << ','
        << format_double(r.window_start) << '\n';
  }
}

inline json dataset_metadata(const Dataset& ds) {
  json j;
  j["format"] = "sliceguard-dataset/1";
  j["kind"] = ds.kind;
  j["spec"] = ds.spec ? json(*ds.spec) : json(nullptr);
  j["sources"] = ds.sources;
  const auto c = ds.counts();
  j["counts"] = json{{"benign", c.benign}, {"rsa", c.rsa}, {"tsa", c.tsa}, {"labeled", c.labeled}, {"total", c.total()}};
  return j;
}

inline Dataset read_dataset(std::istream& csv, const json& meta) {
  if (meta.value("format", std::string{}) != "sliceguard-dataset/1") throw Error("dataset: unsupported metadata format");
  Dataset ds;
  ds.kind = meta.at("kind").get<std::string>();
  if (!meta.at("spec").is_null()) ds.spec = meta.at("spec").get<DatasetSpec>();
  ds.sources = meta.at("sources").get<std::vector<Source>>();
  std::map<std::string, sim::Scenario> scenario;
  for (const auto& s : ds.sources) scenario[s.digest] = s.scenario;

  std::string line;
  if (!std::getline(csv, line)) throw Error("dataset csv: missing header");
  const auto header = split(line, ',');
  constexpr std::size_t kCols = features::kNumFeatures + 4;
  if (header.size() != kCols) throw Error("dataset csv: unexpected header");
  for (std::size_t j = 0; j < features::kNumFeatures; ++j)
    if (header[j] != features::kFeatureNames[j]) throw Error("dataset csv: column " + std::to_string(j) + " misnamed");
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != kCols) throw Error("dataset csv: wrong cell count on line " + std::to_string(lineno));
    DatasetRow r;
    for (std::size_t j = 0; j < features::kNumFeatures; ++j) r.values[j] = parse_double(cells[j]);
    const auto truth = detect::parse_verdict(cells[features::kNumFeatures]);
    const auto lm = cells[features::kNumFeatures + 1];
    if (lm != "0" && lm != "1") throw Error("dataset csv: labeled_mask must be 0 or 1 on line " + std::to_string(lineno));
    r.labeled = lm == "1";
    r.trace_digest = std::string(cells[features::kNumFeatures + 2]);
    r.window_start = parse_double(cells[features::kNumFeatures + 3]);
    if (truth == Verdict::Attack) {
      auto it = scenario.find(r.trace_digest);
      if (it == scenario.end() || it->second == sim::Scenario::Benign)
        throw Error("dataset csv: attack row without an attack source on line " + std::to_string(lineno));
      r.variant = it->second == sim::Scenario::RSA ? features::Label::RSA : features::Label::TSA;
    }
    if (r.labeled && truth != Verdict::Benign) throw Error("dataset csv: labeled attack row on line " + std::to_string(lineno));
    ds.rows.push_back(std::move(r));
  }
  return ds;
}

}  // namespace sliceguard::data
