#ifndef TREEVIEW_SURROGATE_HPP
#define TREEVIEW_SURROGATE_HPP

#include <optional>
#include <span>
#include <vector>

#include "treeview/common.hpp"
#include "treeview/data.hpp"
#include "treeview/meta_features.hpp"
#include "treeview/mlp.hpp"

namespace treeview {

struct TreeConfig {
  std::optional<std::size_t> max_depth;  // nullopt = unlimited
  std::size_t min_leaf = 1;
  /// Compared against (n_node / n_root) * local Gini decrease.
  double min_impurity_decrease = 0.0;
};

/// Internal nodes test `meta[factor] == value`; leaves carry leaf_class.
struct SurrogateNode {
  int factor = -1;
  int value = 0;
  int eq_child = -1;
  int ne_child = -1;
  int leaf_class = -1;
  std::vector<double> histogram;  // training class counts reaching the node

  bool is_leaf() const { return factor < 0; }
};

struct SurrogatePrediction {
  int label = 0;
  std::vector<double> posterior;
};

struct PathStep {
  int node = 0;
  int factor = -1;  // -1 at the leaf
  int value = 0;
  bool took_equal = false;
  std::vector<double> histogram;
};

/// Root-to-leaf trace; steps.back() is the leaf.
struct DecisionPath {
  std::vector<PathStep> steps;

  std::size_t size() const { return steps.size(); }
};

class DecisionTreeSurrogate {
 public:
  DecisionTreeSurrogate() = default;
  DecisionTreeSurrogate(std::size_t num_factors, std::size_t num_classes, std::vector<SurrogateNode> nodes);

  std::size_t num_factors() const { return num_factors_; }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<SurrogateNode>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t depth() const;

  /// Values never seen in training follow the "unequal" branch.
  SurrogatePrediction predict(std::span<const int> meta) const;
  DecisionPath path(std::span<const int> meta) const;

  /// Structural checks: child links, histogram conservation, leaf argmax.
  void validate() const;

 private:
  std::size_t num_factors_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<SurrogateNode> nodes_;
};

struct SplitChoice {
  int factor = -1;
  int value = 0;
  double decrease = 0.0;  // local: G(node) - weighted child Gini
};

/// Best one-vs-rest split over the given sample columns; factor == -1 when no
/// split leaves min_leaf samples on both sides. Ties go to smaller (factor, value).
SplitChoice best_split(const MatrixXi& meta, std::span<const int> labels, std::span<const std::size_t> samples,
                       std::size_t num_classes, std::size_t min_leaf);

/// Greedy CART over categorical meta-features. `meta` is K x T.
DecisionTreeSurrogate fit_surrogate(const MetaFeatureMatrix& meta, std::span<const int> labels,
                                    std::size_t num_classes, const TreeConfig& cfg);

SurrogatePrediction surrogate_predict(const DecisionTreeSurrogate& tree, std::span<const int> meta);
DecisionPath decision_path(const DecisionTreeSurrogate& tree, std::span<const int> meta);

struct EvaluationReport {
  std::size_t num_samples = 0;
  double network_accuracy = 0.0;
  double surrogate_accuracy = 0.0;
  double fidelity = 0.0;
  std::vector<int> network_predictions;
  std::vector<int> surrogate_predictions;
};

/// `data` holds raw (unstandardized) features; the network sees them through
/// `scaler`, the factor predictors see them as-is.
EvaluationReport evaluate(const DecisionTreeSurrogate& tree, const std::vector<FactorPredictor>& predictors,
                          const MlpModel& model, const ScalerParams& scaler, const Dataset& data);

}  // namespace treeview

#endif  // TREEVIEW_SURROGATE_HPP
