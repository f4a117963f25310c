#include "treeview/surrogate.hpp"

#include <algorithm>
#include <numeric>

namespace treeview {

namespace {

double total(const std::vector<double>& h) { return std::accumulate(h.begin(), h.end(), 0.0); }

struct Grower {
  const MatrixXi& meta;
  std::span<const int> labels;
  std::size_t num_classes;
  const TreeConfig& cfg;
  double n_root;
  std::vector<SurrogateNode> nodes;

  int grow(const std::vector<std::size_t>& samples, std::size_t depth) {
    const int id = static_cast<int>(nodes.size());
    SurrogateNode node;
    node.histogram.assign(num_classes, 0.0);
    for (std::size_t s : samples) node.histogram[static_cast<std::size_t>(labels[s])] += 1.0;
    node.leaf_class = static_cast<int>(argmax_first(node.histogram));
    nodes.push_back(node);

    const auto nonzero = std::count_if(node.histogram.begin(), node.histogram.end(), [](double c) { return c > 0; });
    if (nonzero <= 1 || (cfg.max_depth && depth >= *cfg.max_depth) || samples.size() < 2 * cfg.min_leaf) return id;
    const SplitChoice split = best_split(meta, labels, samples, num_classes, cfg.min_leaf);
    if (split.factor < 0) return id;
    const double weighted = static_cast<double>(samples.size()) / n_root * split.decrease;
    if (weighted < cfg.min_impurity_decrease - 1e-12) return id;

    std::vector<std::size_t> eq, ne;
    for (std::size_t s : samples) {
      (meta(split.factor, static_cast<Eigen::Index>(s)) == split.value ? eq : ne).push_back(s);
    }
    const int e = grow(eq, depth + 1);
    const int n = grow(ne, depth + 1);
    auto& self = nodes[static_cast<std::size_t>(id)];
    self.factor = split.factor;
    self.value = split.value;
    self.eq_child = e;
    self.ne_child = n;
    self.leaf_class = -1;
    return id;
  }
};

}  // namespace

SplitChoice best_split(const MatrixXi& meta, std::span<const int> labels, std::span<const std::size_t> samples,
                       std::size_t num_classes, std::size_t min_leaf) {
  SplitChoice best;
  const double n = static_cast<double>(samples.size());
  if (samples.empty()) return best;
  std::vector<double> parent(num_classes, 0.0);
  for (std::size_t s : samples) parent[static_cast<std::size_t>(labels[s])] += 1.0;
  double parent_sq = 0.0;
  for (double c : parent) parent_sq += c * c;

  double best_score = -1.0;
  std::vector<double> eq(num_classes);
  for (Eigen::Index k = 0; k < meta.rows(); ++k) {
    int max_value = -1;
    for (std::size_t s : samples) max_value = std::max(max_value, meta(k, static_cast<Eigen::Index>(s)));
    for (int v = 0; v <= max_value; ++v) {
      std::fill(eq.begin(), eq.end(), 0.0);
      double ne_count = 0.0;
      for (std::size_t s : samples) {
        if (meta(k, static_cast<Eigen::Index>(s)) == v) {
          eq[static_cast<std::size_t>(labels[s])] += 1.0;
        } else {
          ne_count += 1.0;
        }
      }
      const double eq_count = n - ne_count;
      if (eq_count < static_cast<double>(min_leaf) || ne_count < static_cast<double>(min_leaf)) continue;
      double sq_eq = 0.0, sq_ne = 0.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        sq_eq += eq[c] * eq[c];
        const double r = parent[c] - eq[c];
        sq_ne += r * r;
      }
      const double score = sq_eq / eq_count + sq_ne / ne_count;
      if (score > best_score + 1e-12 * n) {
        best_score = score;
        best.factor = static_cast<int>(k);
        best.value = v;
        best.decrease = score / n - parent_sq / (n * n);
      }
    }
  }
  return best;
}

DecisionTreeSurrogate::DecisionTreeSurrogate(std::size_t num_factors, std::size_t num_classes,
                                             std::vector<SurrogateNode> nodes)
    : num_factors_(num_factors), num_classes_(num_classes), nodes_(std::move(nodes)) {
  validate();
}

void DecisionTreeSurrogate::validate() const {
  if (nodes_.empty()) throw ValidationError("surrogate tree has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.histogram.size() != num_classes_) throw ValidationError("surrogate histogram has wrong length");
    if (n.is_leaf()) {
      if (n.leaf_class != static_cast<int>(argmax_first(n.histogram))) {
        throw ValidationError("surrogate leaf " + std::to_string(i) + " does not predict its histogram argmax");
      }
      continue;
    }
    if (static_cast<std::size_t>(n.factor) >= num_factors_) {
      throw ValidationError("surrogate node tests missing factor " + std::to_string(n.factor));
    }
    const auto ok = [&](int c) { return c > static_cast<int>(i) && static_cast<std::size_t>(c) < nodes_.size(); };
    if (!ok(n.eq_child) || !ok(n.ne_child)) throw ValidationError("surrogate node has invalid children");
    const auto& a = nodes_[static_cast<std::size_t>(n.eq_child)].histogram;
    const auto& b = nodes_[static_cast<std::size_t>(n.ne_child)].histogram;
    for (std::size_t c = 0; c < num_classes_; ++c) {
      if (a[c] + b[c] != n.histogram[c]) {
        throw ValidationError("surrogate node " + std::to_string(i) + " histogram is not the sum of its children");
      }
    }
  }
}

std::size_t DecisionTreeSurrogate::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes_[i].eq_child)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].ne_child)] = d[i] + 1;
    }
  }
  return best;
}

DecisionPath DecisionTreeSurrogate::path(std::span<const int> meta) const {
  if (meta.size() != num_factors_) {
    throw ValidationError("meta-feature has " + std::to_string(meta.size()) + " entries, tree expects " +
                          std::to_string(num_factors_));
  }
  DecisionPath p;
  std::size_t i = 0;
  while (true) {
    const auto& n = nodes_[i];
    PathStep step;
    step.node = static_cast<int>(i);
    step.histogram = n.histogram;
    if (n.is_leaf()) {
      p.steps.push_back(std::move(step));
      return p;
    }
    step.factor = n.factor;
    step.value = n.value;
    step.took_equal = meta[static_cast<std::size_t>(n.factor)] == n.value;
    p.steps.push_back(std::move(step));
    i = static_cast<std::size_t>(p.steps.back().took_equal ? n.eq_child : n.ne_child);
  }
}

SurrogatePrediction DecisionTreeSurrogate::predict(std::span<const int> meta) const {
  const auto p = path(meta);
  const auto& leaf = nodes_[static_cast<std::size_t>(p.steps.back().node)];
  SurrogatePrediction out;
  out.label = leaf.leaf_class;
  const double n = total(leaf.histogram);
  out.posterior = leaf.histogram;
  for (double& v : out.posterior) v = n > 0 ? v / n : 1.0 / static_cast<double>(num_classes_);
  return out;
}

DecisionTreeSurrogate fit_surrogate(const MetaFeatureMatrix& meta, std::span<const int> labels,
                                    std::size_t num_classes, const TreeConfig& cfg) {
  const std::size_t t = meta.num_samples();
  if (t == 0) throw ValidationError("cannot fit a surrogate on an empty training set");
  if (labels.size() != t) throw ValidationError("surrogate labels do not align with meta-features");
  if (cfg.min_leaf < 1) throw ValidationError("min_leaf must be >= 1");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ValidationError("surrogate label out of range");
  }
  Grower g{meta.values, labels, num_classes, cfg, static_cast<double>(t), {}};
  std::vector<std::size_t> all(t);
  std::iota(all.begin(), all.end(), std::size_t{0});
  g.grow(all, 0);
  return DecisionTreeSurrogate(meta.num_factors(), num_classes, std::move(g.nodes));
}

SurrogatePrediction surrogate_predict(const DecisionTreeSurrogate& tree, std::span<const int> meta) {
  return tree.predict(meta);
}

DecisionPath decision_path(const DecisionTreeSurrogate& tree, std::span<const int> meta) {
  return tree.path(meta);
}

EvaluationReport evaluate(const DecisionTreeSurrogate& tree, const std::vector<FactorPredictor>& predictors,
                          const MlpModel& model, const ScalerParams& scaler, const Dataset& data) {
  if (predictors.size() != tree.num_factors()) {
    throw ValidationError("tree expects " + std::to_string(tree.num_factors()) + " factors, got " +
                          std::to_string(predictors.size()) + " predictors");
  }
  if (data.dim() != model.input_dim()) throw ValidationError("dataset width does not match model input");
  if (model.num_classes() != tree.num_classes()) throw ValidationError("model and tree disagree on class count");
  EvaluationReport r;
  r.num_samples = data.size();
  r.network_predictions = predict(model, scaler.apply(data.features));
  std::vector<double> row(data.dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    r.surrogate_predictions.push_back(tree.predict(predict_meta_feature(predictors, row)).label);
  }
  r.network_accuracy = accuracy(r.network_predictions, data.labels);
  r.surrogate_accuracy = accuracy(r.surrogate_predictions, data.labels);
  r.fidelity = accuracy(r.surrogate_predictions, r.network_predictions);
  return r;
}

}  // namespace treeview
