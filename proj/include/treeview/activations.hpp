#ifndef TREEVIEW_ACTIVATIONS_HPP
#define TREEVIEW_ACTIVATIONS_HPP

#include <compare>
#include <filesystem>
#include <string>
#include <vector>

#include "treeview/common.hpp"

namespace treeview {

/// Hidden unit address `layer:unit`, layer counted from the first hidden layer.
struct NeuronId {
  std::size_t layer = 0;
  std::size_t unit = 0;

  auto operator<=>(const NeuronId&) const = default;
  std::string str() const;
  static NeuronId parse(const std::string& text);
};

/// N hidden units x T samples; column j belongs to sample_ids[j].
struct ActivationMatrix {
  MatrixXd values;
  std::vector<NeuronId> neuron_ids;
  std::vector<std::string> sample_ids;

  std::size_t num_neurons() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_samples() const { return static_cast<std::size_t>(values.cols()); }
  void validate() const;
};

/// Text format:
///   treeview-activations v1 N=<n> T=<t>
///   <layer:unit>,...            (N ids)
///   <sample id>,...             (T ids)
///   N rows of T comma-separated reals
void export_activations(const ActivationMatrix& am, const std::filesystem::path& path);
ActivationMatrix import_activations(const std::filesystem::path& path);

}  // namespace treeview

#endif  // TREEVIEW_ACTIVATIONS_HPP
