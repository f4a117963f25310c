#ifndef TREEVIEW_META_FEATURES_HPP
#define TREEVIEW_META_FEATURES_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "treeview/activations.hpp"
#include "treeview/common.hpp"
#include "treeview/forest.hpp"

namespace treeview {

template <typename Scalar>
struct KMeansResult {
  MatrixX<Scalar> centroids;  // L x dim, one centroid per row
  std::vector<int> labels;
  Scalar inertia = 0;
  std::vector<Scalar> trace;  // inertia after every Lloyd iteration
};

struct KMeansOptions {
  std::size_t clusters = 1;
  std::size_t restarts = 10;
  std::size_t max_iter = 300;
  std::uint64_t seed = 0;
};

namespace detail {

template <typename Scalar, typename Derived, typename CDerived>
Scalar sq_dist(const Eigen::MatrixBase<Derived>& point, const Eigen::MatrixBase<CDerived>& centroid) {
  return (point - centroid.transpose()).squaredNorm();
}

template <typename Derived>
KMeansResult<typename Derived::Scalar> lloyd_run(const Eigen::MatrixBase<Derived>& points, std::size_t k,
                                                 std::size_t max_iter, Rng& rng) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index dim = points.rows();
  const auto t = static_cast<std::size_t>(points.cols());
  KMeansResult<Scalar> res;
  res.centroids.resize(static_cast<Eigen::Index>(k), dim);

  // k-means++ seeding
  std::vector<Scalar> d2(t, std::numeric_limits<Scalar>::infinity());
  std::vector<char> chosen(t, 0);
  std::size_t pick = rng.below(t);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      Scalar total = 0;
      for (Scalar v : d2) total += v;
      if (total > Scalar(0)) {
        const Scalar r = static_cast<Scalar>(rng.uniform()) * total;
        Scalar acc = 0;
        pick = t - 1;
        for (std::size_t i = 0; i < t; ++i) {
          acc += d2[i];
          if (r < acc && d2[i] > Scalar(0)) {
            pick = i;
            break;
          }
        }
      } else {
        pick = 0;
        while (pick + 1 < t && chosen[pick]) ++pick;
      }
    }
    chosen[pick] = 1;
    res.centroids.row(static_cast<Eigen::Index>(c)) = points.col(static_cast<Eigen::Index>(pick)).transpose();
    for (std::size_t i = 0; i < t; ++i) {
      d2[i] = std::min(d2[i], sq_dist<Scalar>(points.col(static_cast<Eigen::Index>(i)),
                                              res.centroids.row(static_cast<Eigen::Index>(c))));
    }
  }

  res.labels.assign(t, -1);
  std::vector<Scalar> dist(t);
  std::vector<std::size_t> count(k);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < t; ++i) {
      int best = 0;
      Scalar bd = std::numeric_limits<Scalar>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const Scalar dc = sq_dist<Scalar>(points.col(static_cast<Eigen::Index>(i)),
                                          res.centroids.row(static_cast<Eigen::Index>(c)));
        if (dc < bd) {
          bd = dc;
          best = static_cast<int>(c);
        }
      }
      changed |= res.labels[i] != best;
      res.labels[i] = best;
      dist[i] = bd;
      ++count[static_cast<std::size_t>(best)];
    }
    // empty clusters take the point farthest from its centroid
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = t;
      for (std::size_t i = 0; i < t; ++i) {
        if (count[static_cast<std::size_t>(res.labels[i])] > 1 && (far == t || dist[i] > dist[far])) far = i;
      }
      --count[static_cast<std::size_t>(res.labels[far])];
      res.labels[far] = static_cast<int>(c);
      dist[far] = 0;
      count[c] = 1;
      changed = true;
    }
    res.centroids.setZero();
    for (std::size_t i = 0; i < t; ++i) {
      res.centroids.row(res.labels[i]) += points.col(static_cast<Eigen::Index>(i)).transpose();
    }
    for (std::size_t c = 0; c < k; ++c) res.centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<Scalar>(count[c]);
    Scalar inertia = 0;
    for (std::size_t i = 0; i < t; ++i) {
      inertia += sq_dist<Scalar>(points.col(static_cast<Eigen::Index>(i)), res.centroids.row(res.labels[i]));
    }
    res.trace.push_back(inertia);
    if (!changed) break;
  }
  res.inertia = res.trace.back();
  return res;
}

}  // namespace detail

/// Lloyd's k-means on the columns of `points` (dim x T), k-means++ seeding,
/// best of `restarts` runs by inertia. Restart r is seeded with seed + r.
/// Distance ties go to the smaller centroid index.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points,
                                              const KMeansOptions& opts) {
  const auto t = static_cast<std::size_t>(points.cols());
  if (opts.clusters < 1 || opts.clusters > t) {
    throw ValidationError("number of clusters L=" + std::to_string(opts.clusters) + " must lie in [1, " +
                          std::to_string(t) + "]");
  }
  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  KMeansResult<typename Derived::Scalar> best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(opts.seed + r);
    auto run = detail::lloyd_run(points, opts.clusters, std::max<std::size_t>(1, opts.max_iter), rng);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

/// Sample clustering of one factor's activation block.
struct FactorClustering {
  std::size_t factor = 0;
  std::size_t num_clusters = 0;  // L
  MatrixXd centroids;            // L x N_i
  std::vector<int> train_labels;
  double inertia = 0.0;
  std::vector<std::string> sample_ids;

  void validate() const;
};

FactorClustering cluster_factor_samples(const ActivationMatrix& factor_block, std::size_t num_clusters,
                                        std::uint64_t seed, std::size_t restarts, std::size_t factor = 0);

/// K x T cluster labels; row i is factor i.
struct MetaFeatureMatrix {
  MatrixXi values;
  std::vector<std::string> sample_ids;

  std::size_t num_factors() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_samples() const { return static_cast<std::size_t>(values.cols()); }
  std::vector<int> column(std::size_t sample) const;
};

MetaFeatureMatrix build_meta_matrix(const std::vector<FactorClustering>& clusterings);

/// Input-space forest predicting one factor's cluster label.
struct FactorPredictor {
  std::size_t factor = 0;
  std::size_t num_labels = 0;
  RandomForest forest;

  int predict(std::span<const double> input_row) const { return forest.predict(input_row); }
  double oob_accuracy() const { return forest.oob_accuracy(); }
};

/// `inputs` is T x d with rows aligned to fc.train_labels.
FactorPredictor train_factor_predictor(const MatrixXd& inputs, const FactorClustering& fc,
                                       const ForestConfig& cfg);

std::vector<int> predict_meta_feature(const std::vector<FactorPredictor>& predictors,
                                      std::span<const double> input_row);

/// Normalized mean Gini decrease per input feature, or all zeros.
std::vector<double> importance(const FactorPredictor& predictor);

/// Nearest centroid by Euclidean distance, ties toward the smaller index.
int assign_by_centroid(std::span<const double> activation_column, const FactorClustering& fc);

}  // namespace treeview

#endif  // TREEVIEW_META_FEATURES_HPP
