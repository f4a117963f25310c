#include "treeview/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treeview {

namespace {

int argmax_counts(const std::vector<double>& counts) {
  return static_cast<int>(argmax_first(counts));
}

struct TreeBuilder {
  const MatrixXd& x;
  std::span<const int> y;
  std::size_t num_classes;
  const ForestConfig& cfg;
  std::size_t mtry;
  Rng& rng;
  ClassificationTree tree;
  std::vector<std::size_t> features;

  std::vector<double> histogram(const std::vector<std::size_t>& idx) const {
    std::vector<double> h(num_classes, 0.0);
    for (std::size_t i : idx) h[static_cast<std::size_t>(y[i])] += 1.0;
    return h;
  }

  int grow(std::vector<std::size_t> idx, std::size_t depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(id)].counts = histogram(idx);
    const auto& counts = tree.nodes[static_cast<std::size_t>(id)].counts;
    const double n = static_cast<double>(idx.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    if (pure || idx.size() < 2 * cfg.min_leaf || (cfg.max_depth && depth >= *cfg.max_depth)) return id;

    // partial Fisher-Yates draws mtry distinct candidate features
    for (std::size_t k = 0; k < mtry; ++k) std::swap(features[k], features[k + rng.below(features.size() - k)]);

    double best_score = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted = idx;
    std::vector<double> left(num_classes), right(num_classes);
    for (std::size_t k = 0; k < mtry; ++k) {
      const auto f = static_cast<Eigen::Index>(features[k]);
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f);
      });
      std::fill(left.begin(), left.end(), 0.0);
      right = counts;
      double sum_l = 0.0, sum_r = 0.0;
      for (double c : right) sum_r += c * c;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto c = static_cast<std::size_t>(y[sorted[i]]);
        sum_l += 2.0 * left[c] + 1.0;
        sum_r -= 2.0 * right[c] - 1.0;
        left[c] += 1.0;
        right[c] -= 1.0;
        const double lo = x(static_cast<Eigen::Index>(sorted[i]), f);
        const double hi = x(static_cast<Eigen::Index>(sorted[i + 1]), f);
        const std::size_t nl = i + 1, nr = sorted.size() - nl;
        if (!(lo < hi) || nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
        // maximizing sum_l/nl + sum_r/nr minimizes the weighted child Gini
        const double score = sum_l / static_cast<double>(nl) + sum_r / static_cast<double>(nr);
        if (score > best_score + 1e-12 * n) {
          best_score = score;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (lo + hi);
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) {
      (x(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? li : ri).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(std::move(li), depth + 1);
    const int r = grow(std::move(ri), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

int ClassificationTree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return argmax_counts(nodes[i].counts);
}

std::size_t ClassificationTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

RandomForest::RandomForest(std::size_t num_features, std::size_t num_classes,
                           std::vector<ClassificationTree> trees, double oob_accuracy)
    : num_features_(num_features),
      num_classes_(num_classes),
      trees_(std::move(trees)),
      oob_accuracy_(oob_accuracy) {
  validate();
}

void RandomForest::validate() const {
  if (trees_.empty()) throw ValidationError("forest has no trees");
  for (const auto& t : trees_) {
    if (t.nodes.empty()) throw ValidationError("forest tree has no nodes");
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.counts.size() != num_classes_) throw ValidationError("forest node histogram has wrong length");
      if (n.is_leaf()) continue;
      if (static_cast<std::size_t>(n.feature) >= num_features_) {
        throw ValidationError("forest node splits on missing feature " + std::to_string(n.feature));
      }
      const auto valid_child = [&](int c) {
        return c > static_cast<int>(i) && static_cast<std::size_t>(c) < t.nodes.size();
      };
      if (!valid_child(n.left) || !valid_child(n.right)) throw ValidationError("forest node has invalid children");
    }
  }
}

int RandomForest::predict(std::span<const double> row) const {
  if (row.size() != num_features_) {
    throw ValidationError("forest expects " + std::to_string(num_features_) + " features, got " +
                          std::to_string(row.size()));
  }
  std::vector<double> votes(num_classes_, 0.0);
  for (const auto& t : trees_) votes[static_cast<std::size_t>(t.predict(row))] += 1.0;
  return argmax_counts(votes);
}

std::vector<int> RandomForest::predict(const MatrixXd& rows) const {
  std::vector<int> out;
  std::vector<double> buf(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) buf[static_cast<std::size_t>(j)] = rows(i, j);
    out.push_back(predict(buf));
  }
  return out;
}

std::vector<double> RandomForest::importance() const {
  std::vector<double> imp(num_features_, 0.0);
  for (const auto& t : trees_) {
    const auto total = [](const std::vector<double>& h) { return std::accumulate(h.begin(), h.end(), 0.0); };
    const double n_root = total(t.nodes[0].counts);
    if (n_root <= 0.0) continue;
    for (const auto& node : t.nodes) {
      if (node.is_leaf()) continue;
      const auto& l = t.nodes[static_cast<std::size_t>(node.left)].counts;
      const auto& r = t.nodes[static_cast<std::size_t>(node.right)].counts;
      const double n = total(node.counts), nl = total(l), nr = total(r);
      const double decrease = gini(node.counts, n) - (nl / n) * gini(l, nl) - (nr / n) * gini(r, nr);
      imp[static_cast<std::size_t>(node.feature)] += (n / n_root) * decrease;
    }
  }
  for (double& v : imp) v = std::max(0.0, v / static_cast<double>(trees_.size()));
  const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (sum > 0.0) {
    for (double& v : imp) v /= sum;
  } else {
    std::fill(imp.begin(), imp.end(), 0.0);
  }
  return imp;
}

RandomForest train_forest(const MatrixXd& features, std::span<const int> labels, std::size_t num_classes,
                          const ForestConfig& cfg) {
  const auto t = static_cast<std::size_t>(features.rows());
  const auto d = static_cast<std::size_t>(features.cols());
  if (labels.size() != t) throw ValidationError("forest: label count does not match feature rows");
  if (t == 0) throw ValidationError("forest: empty training set");
  if (d == 0) throw ValidationError("forest: no input features");
  if (cfg.num_trees < 1) throw ValidationError("forest needs num_trees >= 1");
  if (cfg.min_leaf < 1) throw ValidationError("forest needs min_leaf >= 1");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw ValidationError("forest: label out of range");
  }
  std::size_t mtry = cfg.features_per_split.value_or(
      static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))));
  mtry = std::clamp<std::size_t>(mtry, 1, d);

  Rng rng(cfg.seed);
  std::vector<ClassificationTree> trees;
  std::vector<std::vector<double>> oob_votes(t, std::vector<double>(num_classes, 0.0));
  std::vector<char> in_bag(t);
  std::vector<double> row(d);
  for (std::size_t b = 0; b < cfg.num_trees; ++b) {
    std::vector<std::size_t> idx(t);
    std::fill(in_bag.begin(), in_bag.end(), 0);
    for (auto& i : idx) {
      i = rng.below(t);
      in_bag[i] = 1;
    }
    std::sort(idx.begin(), idx.end());
    TreeBuilder builder{features, labels, num_classes, cfg, mtry, rng, {}, {}};
    builder.features.resize(d);
    std::iota(builder.features.begin(), builder.features.end(), std::size_t{0});
    builder.grow(std::move(idx), 0);
    for (std::size_t i = 0; i < t; ++i) {
      if (in_bag[i]) continue;
      for (std::size_t j = 0; j < d; ++j) row[j] = features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      oob_votes[i][static_cast<std::size_t>(builder.tree.predict(row))] += 1.0;
    }
    trees.push_back(std::move(builder.tree));
  }

  std::size_t voted = 0, correct = 0;
  for (std::size_t i = 0; i < t; ++i) {
    if (std::accumulate(oob_votes[i].begin(), oob_votes[i].end(), 0.0) == 0.0) continue;
    ++voted;
    correct += argmax_counts(oob_votes[i]) == labels[i];
  }
  const double oob = voted ? static_cast<double>(correct) / static_cast<double>(voted) : 0.0;
  return RandomForest(d, num_classes, std::move(trees), oob);
}

}  // namespace treeview
