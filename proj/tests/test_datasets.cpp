#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sliceguard/datasets.hpp"

using namespace sliceguard;
using namespace sliceguard::data;
using features::Label;

namespace {

Pool synthetic_pool(const std::string& name, Label variant, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Pool p{name, {}, {}};
  const auto scenario = variant == Label::RSA   ? sim::Scenario::RSA
                        : variant == Label::TSA ? sim::Scenario::TSA
                                                : sim::Scenario::Benign;
  const std::string digest = name + "-" + std::to_string(seed);
  p.sources.push_back({digest, scenario, seed});
  for (std::size_t i = 0; i < n; ++i) {
    DatasetRow r;
    for (auto& v : r.values) v = rng.normal() + (variant == Label::Benign ? 0.0 : 4.0);
    r.variant = variant;
    r.trace_digest = digest;
    r.window_start = static_cast<double>(i);
    p.rows.push_back(r);
  }
  return p;
}

struct Pools {
  Pool benign, rsa, tsa;
};

const Pools& big_pools() {
  static const Pools p{synthetic_pool("benign", Label::Benign, 36000, 1), synthetic_pool("rsa", Label::RSA, 10000, 2),
                       synthetic_pool("tsa", Label::TSA, 10000, 3)};
  return p;
}

sim::NetworkConfig short_network() {
  sim::NetworkConfig c;
  c.emulation_duration = 300;
  c.attack_start = 150;
  return c;
}

}  // namespace

TEST(Counts, TableFourAtFullScale) {
  const std::size_t want[4][3] = {{36000, 2000, 2000}, {32000, 4000, 4000}, {28000, 6000, 6000}, {24000, 8000, 8000}};
  for (int i = 0; i < 4; ++i) {
    DatasetSpec s;
    s.total_records = 40000;
    s.contamination = 0.1 * (i + 1);
    const auto c = planned_counts(s);
    EXPECT_EQ(c.benign, want[i][0]);
    EXPECT_EQ(c.rsa, want[i][1]);
    EXPECT_EQ(c.tsa, want[i][2]);
    EXPECT_EQ(c.labeled, 4000u);
  }
}

TEST(Counts, SameProportionsAtDeskScale) {
  for (int i = 1; i <= 4; ++i) {
    DatasetSpec s;
    s.contamination = 0.1 * i;
    const auto c = planned_counts(s);
    EXPECT_EQ(c.total(), 8000u);
    EXPECT_EQ(c.rsa, static_cast<std::size_t>(400 * i));
    EXPECT_EQ(c.tsa, static_cast<std::size_t>(400 * i));
    EXPECT_EQ(c.labeled, 800u);
  }
}

TEST(TrainingSet, AssembledCountsAndLabels) {
  DatasetSpec s;
  s.total_records = 40000;
  s.contamination = 0.3;
  s.seed = 5;
  const auto& p = big_pools();
  const auto ds = assemble_training(p.benign, p.rsa, p.tsa, s);
  EXPECT_EQ(ds.counts(), (Counts{28000, 6000, 6000, 4000}));
  for (const auto& r : ds.rows)
    if (r.labeled) ASSERT_EQ(r.truth(), Verdict::Benign);
}

TEST(TrainingSet, ZeroContaminationStillLabels) {
  DatasetSpec s;
  s.contamination = 0.0;
  const auto& p = big_pools();
  const auto ds = assemble_training(p.benign, p.rsa, p.tsa, s);
  EXPECT_EQ(ds.counts(), (Counts{8000, 0, 0, 800}));
}

TEST(TrainingSet, ShortPoolIsNamed) {
  DatasetSpec s;
  s.contamination = 0.4;
  const auto small = synthetic_pool("tiny-tsa", Label::TSA, 100, 9);
  const auto& p = big_pools();
  try {
    assemble_training(p.benign, p.rsa, small, s);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("tiny-tsa"), std::string::npos);
  }
}

TEST(TrainingSet, SpecValidation) {
  DatasetSpec s;
  s.contamination = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s.contamination = 0.5;
  s.labeled_positive_fraction = 0.6;
  EXPECT_THROW(s.validate(), ConfigError);
  s.labeled_positive_fraction = 0.5;
  EXPECT_NO_THROW(s.validate());
}

TEST(TrainingSet, SeedControlsOrder) {
  DatasetSpec s;
  const auto& p = big_pools();
  const auto a = assemble_training(p.benign, p.rsa, p.tsa, s);
  const auto b = assemble_training(p.benign, p.rsa, p.tsa, s);
  s.seed = 1;
  const auto c = assemble_training(p.benign, p.rsa, p.tsa, s);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_NE(a.values(), c.values());
}

TEST(TrainingSet, LabeledSubsetIsUnbiased) {
  DatasetSpec s;
  s.total_records = 40000;
  s.seed = 17;
  const auto& p = big_pools();
  const auto ds = assemble_training(p.benign, p.rsa, p.tsa, s);
  for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
    double sum = 0, sq = 0, lsum = 0, n = 0, ln = 0;
    for (const auto& r : ds.rows) {
      if (r.truth() != Verdict::Benign) continue;
      sum += r.values[j], sq += r.values[j] * r.values[j], n += 1;
      if (r.labeled) lsum += r.values[j], ln += 1;
    }
    const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
    EXPECT_LT(std::abs(lsum / ln - mean), 3 * sd / std::sqrt(ln)) << features::kFeatureNames[j];
  }
}

TEST(TestSet, CompositionAndNoLabels) {
  const auto& p = big_pools();
  const auto ds = assemble_test(p.benign, p.rsa, sim::AttackVariant::RSA, {}, 10000);
  EXPECT_EQ(ds.counts(), (Counts{10000, 10000, 0, 0}));
  const auto small = assemble_test(p.benign, p.tsa, sim::AttackVariant::TSA, {}, 1000);
  EXPECT_EQ(small.counts(), (Counts{1000, 0, 1000, 0}));
  EXPECT_EQ(small.kind, "test-tsa");
}

TEST(TestSet, OverlapAndWrongVariantRejected) {
  const auto& p = big_pools();
  EXPECT_THROW(assemble_test(p.benign, p.rsa, sim::AttackVariant::RSA, {p.benign.sources[0].digest}, 10), Error);
  EXPECT_THROW(assemble_test(p.benign, p.rsa, sim::AttackVariant::TSA, {}, 10), Error);
}

TEST(Pools, AttackPoolsHoldOnlyAttackWindows) {
  const auto cfg = short_network();
  const auto pool = simulate_pool("rsa", sim::Scenario::RSA, {4}, cfg);
  ASSERT_FALSE(pool.rows.empty());
  for (const auto& r : pool.rows) {
    ASSERT_EQ(r.variant, Label::RSA);
    ASSERT_GE(r.window_start, cfg.attack_start);
  }
  const auto benign = simulate_pool("benign", sim::Scenario::Benign, {4}, cfg);
  EXPECT_EQ(benign.rows.size(), 300u);
}

TEST(Pca, RankTwoDataIsFullyExplained) {
  Rng rng(2);
  Eigen::MatrixXd basis = Eigen::MatrixXd::NullaryExpr(2, 17, [&] { return rng.normal(); });
  Eigen::RowVectorXd offset = Eigen::RowVectorXd::NullaryExpr(17, [&] { return rng.normal(); });
  Eigen::MatrixXd coef = Eigen::MatrixXd::NullaryExpr(300, 2, [&] { return rng.normal(); });
  const Eigen::MatrixXd x = (coef * basis).rowwise() + offset;
  const auto r = pca_project(x, 2);
  EXPECT_NEAR(r.explained.sum(), 1.0, 1e-6);
  EXPECT_EQ(r.coords.rows(), 300);
}

TEST(Pca, IsotropicCloudMatchesCovarianceEigenvalues) {
  Rng rng(3);
  const Eigen::Index n = 20000, d = 4;
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return rng.normal(); });
  // covariance by explicit sums, eigenvalues from the general solver
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) mean += x.row(i).transpose();
  mean /= static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) cov(a, b) += (x(i, a) - mean(a)) * (x(i, b) - mean(b));
  cov /= static_cast<double>(n - 1);
  Eigen::EigenSolver<Eigen::MatrixXd> es(cov);
  std::vector<double> ev;
  for (Eigen::Index k = 0; k < d; ++k) ev.push_back(es.eigenvalues()(k).real());
  std::sort(ev.rbegin(), ev.rend());
  const double total = ev[0] + ev[1] + ev[2] + ev[3];
  const auto r = pca_project(x, 2);
  EXPECT_NEAR(r.explained(0), ev[0] / total, 1e-9);
  EXPECT_NEAR(r.explained(1), ev[1] / total, 1e-9);
  EXPECT_NEAR(r.explained(0), 0.25, 0.02);
  EXPECT_NEAR(r.explained(1), 0.25, 0.02);
}

TEST(Pca, RejectsTooFewRows) {
  EXPECT_THROW(pca_project(Eigen::MatrixXd::Zero(1, 3), 2), Error);
  EXPECT_THROW(pca_project(Eigen::MatrixXd::Zero(5, 3), 4), Error);
}

TEST(Silhouette, HandExample) {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 10, 11;
  const double want = (9.5 / 10.5 + 8.5 / 9.5) / 2;
  EXPECT_NEAR(silhouette(x, {0, 0, 1, 1}), want, 1e-12);
  EXPECT_THROW(silhouette(x, {0, 0, 0, 0}), Error);
}

TEST(DatasetFile, RoundTripIsByteIdentical) {
  DatasetSpec s;
  s.total_records = 400;
  const auto ds = build_training_dataset(s, short_network());
  std::ostringstream csv;
  write_dataset_csv(csv, ds);
  const auto meta = dataset_metadata(ds).dump();
  std::istringstream in(csv.str());
  const auto back = read_dataset(in, nlohmann::json::parse(meta));
  std::ostringstream again;
  write_dataset_csv(again, back);
  EXPECT_EQ(again.str(), csv.str());
  EXPECT_EQ(dataset_metadata(back).dump(), meta);
  EXPECT_EQ(back.counts(), ds.counts());
}

TEST(DatasetFile, RejectsLabeledAttackRow) {
  DatasetSpec s;
  s.total_records = 400;
  const auto ds = build_training_dataset(s, short_network());
  std::ostringstream csv;
  write_dataset_csv(csv, ds);
  std::string text = csv.str();
  const auto pos = text.find(",Attack,0,");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, ",Attack,1,");
  std::istringstream in(text);
  EXPECT_THROW(read_dataset(in, dataset_metadata(ds)), Error);
}
