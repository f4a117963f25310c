#ifndef TREEVIEW_FACTORIZATION_HPP
#define TREEVIEW_FACTORIZATION_HPP

#include <cmath>
#include <vector>

#include "treeview/activations.hpp"
#include "treeview/common.hpp"
#include "treeview/mlp.hpp"

namespace treeview {

/// 1 - Pearson correlation between the rows of `rows`, clamped to [0, 2].
///
/// Rows whose centered norm vanishes (dead units) correlate 0 with every
/// other row, giving distance 1; the diagonal is always 0. The result is
/// exactly symmetric.
template <typename Derived>
MatrixX<typename Derived::Scalar> correlation_distance(const Eigen::MatrixBase<Derived>& rows) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = rows.rows();
  const Eigen::Index t = rows.cols();
  MatrixX<Scalar> z = rows.colwise() - rows.rowwise().mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar norm = z.row(i).norm();
    const Scalar scale = std::max(Scalar(1), std::abs(rows.row(i).mean()));
    if (norm <= Scalar(1e-12) * scale * std::sqrt(static_cast<Scalar>(t))) {
      z.row(i).setZero();
    } else {
      z.row(i) /= norm;
    }
  }
  const MatrixX<Scalar> corr = z * z.transpose();
  MatrixX<Scalar> d(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    d(a, a) = Scalar(0);
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const Scalar v = std::clamp(Scalar(1) - corr(a, b), Scalar(0), Scalar(2));
      d(a, b) = v;
      d(b, a) = v;
    }
  }
  return d;
}

struct NeuronDistanceMatrix {
  MatrixXd values;
  std::vector<NeuronId> neuron_ids;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

NeuronDistanceMatrix neuron_distance(const ActivationMatrix& am);

/// Disjoint cover of the N neurons by K non-empty factors. Factor indices are
/// ordered by the smallest neuron index each factor contains.
struct FactorPartition {
  std::size_t num_factors = 0;
  std::vector<std::size_t> assignment;  // neuron index -> factor index
  std::vector<NeuronId> neuron_ids;
  LayerSelector source;

  /// Neuron indices (rows of the activation matrix) in factor i, ascending.
  std::vector<std::size_t> members(std::size_t factor) const;
  std::vector<std::size_t> sizes() const;
  void validate() const;
};

/// One agglomeration step: clusters `keep` and `absorbed` (keep < absorbed,
/// both identified by their smallest neuron index) merge into `keep`.
struct Merge {
  std::size_t keep = 0;
  std::size_t absorbed = 0;
  double distance = 0.0;
};

/// Full average-linkage merge sequence over a precomputed distance matrix.
/// Ties in linkage distance go to the lexicographically smallest id pair.
std::vector<Merge> average_linkage(const MatrixXd& distances);

/// Labels after applying the first N-K merges, relabelled 0..K-1 by the
/// smallest member index.
std::vector<std::size_t> cut_dendrogram(std::size_t n, const std::vector<Merge>& merges, std::size_t k);

FactorPartition cluster_neurons(const NeuronDistanceMatrix& dm, std::size_t k);

/// Mean silhouette under precomputed distances; singleton clusters score 0.
double silhouette_score(const MatrixXd& distances, const std::vector<std::size_t>& labels);

/// K in [k_min, k_max] with the best mean silhouette; ties toward smaller K.
std::size_t select_num_factors(const NeuronDistanceMatrix& dm, std::size_t k_min, std::size_t k_max);

ActivationMatrix factor_activations(const ActivationMatrix& am, const FactorPartition& fp,
                                    std::size_t factor);

}  // namespace treeview

#endif  // TREEVIEW_FACTORIZATION_HPP
