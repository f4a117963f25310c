#ifndef TREEVIEW_DATA_HPP
#define TREEVIEW_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "treeview/common.hpp"

namespace treeview {

struct DatasetSchema {
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;

  std::size_t num_features() const { return feature_names.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  /// Throws ValidationError on duplicate names or fewer than two classes.
  void validate() const;
};

/// T samples x d features, one row per sample.
struct Dataset {
  MatrixXd features;
  std::vector<int> labels;
  DatasetSchema schema;
  std::vector<std::string> sample_ids;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  void validate() const;
  /// Rows selected by index, in the given order.
  Dataset subset(const std::vector<std::size_t>& rows) const;
  /// Index of `sample_id`, or nullopt.
  std::optional<std::size_t> find(const std::string& sample_id) const;
};

struct ScalerParams {
  VectorXd means;
  VectorXd stds;

  MatrixXd apply(const MatrixXd& features) const;
  MatrixXd invert(const MatrixXd& standardized) const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct CsvOptions {
  /// Column name (requires header) or zero-based index.
  std::variant<std::string, std::size_t> label_column = std::size_t{0};
  bool header = true;
  /// Optional column holding sample ids; row numbers are used otherwise.
  std::optional<std::string> id_column;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);

std::pair<Dataset, ScalerParams> standardize(const Dataset& dataset);
ScalerParams fit_scaler(const MatrixXd& features);

struct SplitResult {
  Dataset train;
  Dataset test;
};

/// Disjoint train/test cover; both halves keep file order.
SplitResult split(const Dataset& dataset, const SplitSpec& spec);

}  // namespace treeview

#endif  // TREEVIEW_DATA_HPP
