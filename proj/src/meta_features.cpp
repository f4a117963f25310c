#include "treeview/meta_features.hpp"

namespace treeview {

void FactorClustering::validate() const {
  if (num_clusters == 0) throw ValidationError("clustering has L=0");
  if (static_cast<std::size_t>(centroids.rows()) != num_clusters) {
    throw ValidationError("clustering centroid count does not match L");
  }
  if (!centroids.allFinite()) throw ValidationError("clustering has non-finite centroids");
  if (!sample_ids.empty() && sample_ids.size() != train_labels.size()) {
    throw ValidationError("clustering sample id count does not match labels");
  }
  for (int l : train_labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_clusters) throw ValidationError("cluster label out of range");
  }
}

FactorClustering cluster_factor_samples(const ActivationMatrix& factor_block, std::size_t num_clusters,
                                        std::uint64_t seed, std::size_t restarts, std::size_t factor) {
  factor_block.validate();
  KMeansOptions opts;
  opts.clusters = num_clusters;
  opts.restarts = restarts;
  opts.seed = seed;
  auto res = kmeans(factor_block.values, opts);
  FactorClustering fc;
  fc.factor = factor;
  fc.num_clusters = num_clusters;
  fc.centroids = std::move(res.centroids);
  fc.train_labels = std::move(res.labels);
  fc.inertia = res.inertia;
  fc.sample_ids = factor_block.sample_ids;
  return fc;
}

std::vector<int> MetaFeatureMatrix::column(std::size_t sample) const {
  std::vector<int> out(num_factors());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(sample));
  }
  return out;
}

MetaFeatureMatrix build_meta_matrix(const std::vector<FactorClustering>& clusterings) {
  if (clusterings.empty()) throw ValidationError("no factor clusterings to aggregate");
  const std::size_t t = clusterings.front().train_labels.size();
  MetaFeatureMatrix m;
  m.sample_ids = clusterings.front().sample_ids;
  m.values.resize(static_cast<Eigen::Index>(clusterings.size()), static_cast<Eigen::Index>(t));
  for (std::size_t k = 0; k < clusterings.size(); ++k) {
    const auto& fc = clusterings[k];
    if (fc.train_labels.size() != t) {
      throw ValidationError("factor " + std::to_string(k) + " clusters " + std::to_string(fc.train_labels.size()) +
                            " samples, expected " + std::to_string(t));
    }
    if (fc.sample_ids != m.sample_ids) {
      throw ValidationError("factor " + std::to_string(k) + " has a different sample order");
    }
    for (std::size_t j = 0; j < t; ++j) {
      m.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = fc.train_labels[j];
    }
  }
  return m;
}

FactorPredictor train_factor_predictor(const MatrixXd& inputs, const FactorClustering& fc,
                                       const ForestConfig& cfg) {
  if (static_cast<std::size_t>(inputs.rows()) != fc.train_labels.size()) {
    throw ValidationError("predictor inputs have " + std::to_string(inputs.rows()) + " rows, clustering has " +
                          std::to_string(fc.train_labels.size()) + " samples");
  }
  FactorPredictor p;
  p.factor = fc.factor;
  p.num_labels = fc.num_clusters;
  p.forest = train_forest(inputs, fc.train_labels, fc.num_clusters, cfg);
  return p;
}

std::vector<int> predict_meta_feature(const std::vector<FactorPredictor>& predictors,
                                      std::span<const double> input_row) {
  std::vector<int> out;
  out.reserve(predictors.size());
  for (const auto& p : predictors) out.push_back(p.predict(input_row));
  return out;
}

std::vector<double> importance(const FactorPredictor& predictor) {
  return predictor.forest.importance();
}

int assign_by_centroid(std::span<const double> activation_column, const FactorClustering& fc) {
  if (static_cast<Eigen::Index>(activation_column.size()) != fc.centroids.cols()) {
    throw ValidationError("activation column has " + std::to_string(activation_column.size()) +
                          " entries, centroids have " + std::to_string(fc.centroids.cols()));
  }
  const Eigen::Map<const Eigen::RowVectorXd> x(activation_column.data(),
                                                static_cast<Eigen::Index>(activation_column.size()));
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < fc.centroids.rows(); ++c) {
    const double d = (fc.centroids.row(c) - x).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace treeview
