#ifndef TREEVIEW_FOREST_HPP
#define TREEVIEW_FOREST_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "treeview/common.hpp"

namespace treeview {

struct ForestConfig {
  std::size_t num_trees = 50;
  std::optional<std::size_t> max_depth;  // nullopt = unlimited
  std::size_t min_leaf = 1;
  std::optional<std::size_t> features_per_split;  // nullopt = ceil(sqrt(d))
  std::uint64_t seed = 0;
};

/// Axis-aligned node. Internal nodes send `x[feature] <= threshold` left.
/// `counts` is the class histogram of the (bootstrap) samples reaching it.
struct ForestNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> counts;

  bool is_leaf() const { return feature < 0; }
};

struct ClassificationTree {
  std::vector<ForestNode> nodes;  // nodes[0] is the root

  int predict(std::span<const double> row) const;
  std::size_t depth() const;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::size_t num_features, std::size_t num_classes, std::vector<ClassificationTree> trees,
               double oob_accuracy);

  std::size_t num_features() const { return num_features_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<ClassificationTree>& trees() const { return trees_; }
  double oob_accuracy() const { return oob_accuracy_; }

  /// Majority vote across trees; ties go to the smaller label.
  int predict(std::span<const double> row) const;
  std::vector<int> predict(const MatrixXd& rows) const;

  /// Mean decrease in Gini impurity per feature, normalized to sum 1
  /// (all zero when no tree splits).
  std::vector<double> importance() const;

  void validate() const;

 private:
  std::size_t num_features_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<ClassificationTree> trees_;
  double oob_accuracy_ = 0.0;
};

/// Bagged Gini trees with `features_per_split` random candidates per node.
/// `features` is T x d, labels in [0, num_classes).
RandomForest train_forest(const MatrixXd& features, std::span<const int> labels,
                          std::size_t num_classes, const ForestConfig& cfg);

}  // namespace treeview

#endif  // TREEVIEW_FOREST_HPP
