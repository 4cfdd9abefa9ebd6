#pragma once

// Lloyd's k-means with greedy k-means++ seeding and best-of-n restarts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sliceguard/common.hpp"

namespace sliceguard::cluster {

struct KMeansConfig {
  std::size_t k = 2;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
  double tol = 1e-4;
  std::uint64_t seed = 42;

  void validate() const {
    if (k == 0) throw ConfigError("kmeans.k", "must be positive");
    if (n_init == 0) throw ConfigError("kmeans.n_init", "must be positive");
    if (max_iter == 0) throw ConfigError("kmeans.max_iter", "must be positive");
    if (!(tol >= 0)) throw ConfigError("kmeans.tol", "must be non-negative");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(KMeansConfig, k, n_init, max_iter, tol, seed)

struct KMeansResult {
  Eigen::MatrixXd centroids;            // k x d
  std::vector<std::size_t> assignments;  // per row
  double inertia = 0.0;
  std::size_t iterations = 0;
  // Inertia after each assignment step of the returned run.
  std::vector<double> inertia_history;
};

// Index of the nearest centroid; exact ties go to the lower index.
inline std::size_t nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                    double* dist2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

inline std::vector<std::size_t> kmeans_predict(const Eigen::MatrixXd& centroids, const Eigen::MatrixXd& x) {
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = nearest_centroid(centroids, x.row(i));
  return out;
}

inline std::size_t count_distinct_rows(const Eigen::MatrixXd& x, std::size_t stop_at) {
  std::vector<Eigen::Index> reps;
  for (Eigen::Index i = 0; i < x.rows() && reps.size() < stop_at; ++i) {
    bool seen = false;
    for (auto r : reps)
      if (x.row(r) == x.row(i)) {
        seen = true;
        break;
      }
    if (!seen) reps.push_back(i);
  }
  return reps.size();
}

namespace detail {

// Greedy k-means++: each new centre is the best of 2 + ln(k) D^2-sampled candidates.
inline Eigen::MatrixXd kmeanspp(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
  const auto trials = static_cast<std::size_t>(2 + std::floor(std::log(static_cast<double>(k))));
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd closest = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  double potential = closest.sum();
  for (std::size_t c = 1; c < k; ++c) {
    Eigen::Index best_cand = 0;
    double best_pot = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_closest;
    for (std::size_t t = 0; t < trials; ++t) {
      Eigen::Index cand = n - 1;
      if (potential > 0) {
        double r = rng.uniform() * potential;
        for (Eigen::Index i = 0; i < n; ++i) {
          r -= closest(i);
          if (r < 0) {
            cand = i;
            break;
          }
        }
      } else {
        cand = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      }
      Eigen::VectorXd d = (x.rowwise() - x.row(cand)).rowwise().squaredNorm();
      d = d.cwiseMin(closest);
      const double pot = d.sum();
      if (pot < best_pot) {
        best_pot = pot;
        best_cand = cand;
        best_closest = std::move(d);
      }
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(best_cand);
    closest = std::move(best_closest);
    potential = best_pot;
  }
  return centers;
}

inline double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, std::vector<std::size_t>& labels,
                     Eigen::VectorXd& dist2) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double d = 0.0;
    labels[static_cast<std::size_t>(i)] = nearest_centroid(centers, x.row(i), &d);
    dist2(i) = d;
    inertia += d;
  }
  return inertia;
}

inline KMeansResult lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centers, const KMeansConfig& cfg, double tol) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<Eigen::Index>(cfg.k);
  KMeansResult res;
  res.assignments.assign(n, 0);
  Eigen::VectorXd dist2(x.rows());
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    res.inertia_history.push_back(assign(x, centers, res.assignments, dist2));
    res.iterations = it;
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<double> counts(cfg.k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      next.row(static_cast<Eigen::Index>(res.assignments[i])) += x.row(static_cast<Eigen::Index>(i));
      counts[res.assignments[i]] += 1.0;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= counts[static_cast<std::size_t>(c)];
      } else {
        // Empty cluster: move it onto the point farthest from its centre.
        Eigen::Index far = 0;
        dist2.maxCoeff(&far);
        next.row(c) = x.row(far);
        dist2(far) = 0.0;
      }
    }
    const double shift = (next - centers).squaredNorm();
    centers = std::move(next);
    if (shift <= tol) break;
  }
  res.inertia = assign(x, centers, res.assignments, dist2);
  res.inertia_history.push_back(res.inertia);
  res.centroids = std::move(centers);
  return res;
}

}  // namespace detail

// Convergence tolerance is scaled by the mean per-feature variance of the data.
inline KMeansResult kmeans_fit(const Eigen::MatrixXd& x, const KMeansConfig& cfg = {}) {
  cfg.validate();
  if (static_cast<std::size_t>(x.rows()) < cfg.k || count_distinct_rows(x, cfg.k) < cfg.k)
    throw Error("kmeans_fit: fewer than k distinct points");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_var = (x.rowwise() - mean).array().square().colwise().mean().mean();
  const double tol = cfg.tol * mean_var;
  Rng master(cfg.seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t run = 0; run < cfg.n_init; ++run) {
    Rng rng = master.fork(run);
    auto res = detail::lloyd(x, detail::kmeanspp(x, cfg.k, rng), cfg, tol);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

}  // namespace sliceguard::cluster
