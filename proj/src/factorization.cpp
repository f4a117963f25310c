#include "treeview/factorization.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace treeview {

NeuronDistanceMatrix neuron_distance(const ActivationMatrix& am) {
  am.validate();
  if (am.num_samples() < 2) throw ValidationError("neuron_distance needs T >= 2 samples");
  return {correlation_distance(am.values), am.neuron_ids};
}

std::vector<std::size_t> FactorPartition::members(std::size_t factor) const {
  if (factor >= num_factors) {
    throw ValidationError("factor index " + std::to_string(factor) + " out of range (K=" +
                          std::to_string(num_factors) + ")");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == factor) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FactorPartition::sizes() const {
  std::vector<std::size_t> out(num_factors, 0);
  for (std::size_t a : assignment) ++out.at(a);
  return out;
}

void FactorPartition::validate() const {
  if (num_factors == 0) throw ValidationError("partition has no factors");
  if (assignment.size() != neuron_ids.size()) throw ValidationError("partition assignment length mismatch");
  for (std::size_t a : assignment) {
    if (a >= num_factors) throw ValidationError("partition assigns a neuron to a missing factor");
  }
  for (std::size_t s : sizes()) {
    if (s == 0) throw ValidationError("partition has an empty factor");
  }
}

std::vector<Merge> average_linkage(const MatrixXd& distances) {
  const auto n = static_cast<std::size_t>(distances.rows());
  // Sum of pairwise distances between active clusters; the average is
  // re-derived from sums so that equal linkages compare equal.
  MatrixXd sums = distances;
  std::vector<double> size(n, 1.0);
  std::vector<char> active(n, 1);
  std::vector<Merge> merges;
  merges.reserve(n ? n - 1 : 0);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        const double avg = sums(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) / (size[a] * size[b]);
        if (!std::isfinite(best) || avg < best - 1e-12 * std::max(1.0, best)) {
          best = avg;
          ba = a;
          bb = b;
        }
      }
    }
    merges.push_back({ba, bb, best});
    active[bb] = 0;
    for (std::size_t x = 0; x < n; ++x) {
      if (!active[x] || x == ba) continue;
      const auto ia = static_cast<Eigen::Index>(ba), ib = static_cast<Eigen::Index>(bb),
                 ix = static_cast<Eigen::Index>(x);
      sums(ia, ix) += sums(ib, ix);
      sums(ix, ia) = sums(ia, ix);
    }
    size[ba] += size[bb];
  }
  return merges;
}

std::vector<std::size_t> cut_dendrogram(std::size_t n, const std::vector<Merge>& merges, std::size_t k) {
  if (k < 1 || k > n) {
    throw ValidationError("K=" + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> root(n);
  for (std::size_t i = 0; i < n; ++i) root[i] = i;
  auto find = [&](std::size_t x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  for (std::size_t s = 0; s < n - k; ++s) root[find(merges.at(s).absorbed)] = find(merges[s].keep);
  // relabel by smallest member, which is scanned first
  std::map<std::size_t, std::size_t> relabel;
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [it, _] = relabel.try_emplace(find(i), relabel.size());
    labels[i] = it->second;
  }
  return labels;
}

FactorPartition cluster_neurons(const NeuronDistanceMatrix& dm, std::size_t k) {
  const std::size_t n = dm.size();
  if (k < 1 || k > n) {
    throw ValidationError("number of factors K=" + std::to_string(k) + " must lie in [1, " +
                          std::to_string(n) + "]");
  }
  FactorPartition fp;
  fp.num_factors = k;
  fp.neuron_ids = dm.neuron_ids;
  fp.assignment = cut_dendrogram(n, average_linkage(dm.values), k);
  return fp;
}

double silhouette_score(const MatrixXd& distances, const std::vector<std::size_t>& labels) {
  const std::size_t n = labels.size();
  if (n == 0) return 0.0;
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> count(k, 0.0);
  for (std::size_t l : labels) count[l] += 1.0;
  double total = 0.0;
  std::vector<double> sum(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (count[labels[i]] <= 1.0) continue;
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum[labels[j]] += distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const double a = sum[labels[i]] / (count[labels[i]] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != labels[i] && count[c] > 0.0) b = std::min(b, sum[c] / count[c]);
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

std::size_t select_num_factors(const NeuronDistanceMatrix& dm, std::size_t k_min, std::size_t k_max) {
  const std::size_t n = dm.size();
  if (k_min > k_max) {
    throw ValidationError("empty factor range [" + std::to_string(k_min) + ", " + std::to_string(k_max) + "]");
  }
  if (k_min < 2 || k_max + 1 > n) {
    throw ValidationError("factor range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                          "] must lie within [2, N-1] with N=" + std::to_string(n));
  }
  const auto merges = average_linkage(dm.values);
  std::size_t best_k = k_min;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const double s = silhouette_score(dm.values, cut_dendrogram(n, merges, k));
    if (s > best + 1e-12) {
      best = s;
      best_k = k;
    }
  }
  return best_k;
}

ActivationMatrix factor_activations(const ActivationMatrix& am, const FactorPartition& fp,
                                    std::size_t factor) {
  if (fp.assignment.size() != am.num_neurons()) {
    throw ValidationError("partition covers " + std::to_string(fp.assignment.size()) +
                          " neurons, activation matrix has " + std::to_string(am.num_neurons()));
  }
  const auto rows = fp.members(factor);
  ActivationMatrix out;
  out.sample_ids = am.sample_ids;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), am.values.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = am.values.row(static_cast<Eigen::Index>(rows[r]));
    out.neuron_ids.push_back(am.neuron_ids[rows[r]]);
  }
  return out;
}

}  // namespace treeview
