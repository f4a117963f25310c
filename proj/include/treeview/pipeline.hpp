#ifndef TREEVIEW_PIPELINE_HPP
#define TREEVIEW_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "treeview/data.hpp"
#include "treeview/factorization.hpp"
#include "treeview/meta_features.hpp"
#include "treeview/mlp.hpp"
#include "treeview/surrogate.hpp"
#include "treeview/treeview.hpp"

namespace treeview {

inline constexpr int kArtifactVersion = 1;

struct PipelineConfig {
  std::filesystem::path dataset_path;
  CsvOptions csv;
  double train_fraction = 0.8;
  bool stratified = true;
  std::vector<std::size_t> hidden_layers{128, 64, 64};
  TrainConfig train;  // seed is derived, not read
  LayerSelector layers;
  std::optional<std::size_t> num_factors;  // nullopt = pick by silhouette
  std::size_t k_min = 2;
  std::size_t k_max = 12;
  std::optional<std::size_t> clusters_per_factor;  // nullopt = num_classes
  std::size_t kmeans_restarts = 10;
  ForestConfig forest;  // seed is derived per factor
  TreeConfig tree{std::nullopt, 5, 0.0};
  RenderConfig render;
  std::uint64_t seed = 0;

  /// Relative dataset paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Typed view of an artifact document. Fields past `stage` are empty.
struct PipelineArtifact {
  int stage = 0;
  PipelineConfig config;
  DatasetSchema schema;
  ScalerParams scaler;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  MlpModel model;
  TrainReport train_report;
  double network_train_accuracy = 0.0;
  double network_test_accuracy = 0.0;
  std::string activations_file;  // relative to the artifact's directory

  // stage 2
  FactorPartition partition;
  std::vector<FactorClustering> clusterings;
  MetaFeatureMatrix meta;
  std::vector<FactorPredictor> predictors;
  std::vector<std::vector<double>> importances;

  // stage 3
  DecisionTreeSurrogate tree;
  nlohmann::json evaluation;

  nlohmann::json to_json() const;
  static PipelineArtifact from_json(const nlohmann::json& j);
  static PipelineArtifact load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Cross-checks d, K, L_i, N and num_classes; throws ValidationError.
  void validate() const;
  ExplanationArtifacts explanation_view() const;
};

std::filesystem::path activations_path(const std::filesystem::path& artifact_path);

/// Stage 1: split, standardize, train the network, export train activations.
PipelineArtifact run_train(const PipelineConfig& cfg, const std::filesystem::path& artifact_path,
                           std::ostream& log);
/// Stage 2: factors, sample clusterings, meta-features, factor predictors.
PipelineArtifact run_factorize(const std::filesystem::path& artifact_path,
                               const std::optional<PipelineConfig>& override_cfg, std::ostream& log);
/// Stage 3: surrogate tree and held-out evaluation report.
PipelineArtifact run_surrogate(const std::filesystem::path& artifact_path,
                               const std::optional<PipelineConfig>& override_cfg, std::ostream& log);

enum class SplitPart { Train, Test, All };

/// Evaluation report JSON for one part of the split, with per-factor
/// predictor/centroid agreement diagnostics.
nlohmann::json evaluation_report(const PipelineArtifact& artifact, const Dataset& raw, SplitPart part);

/// Reloads the configured dataset and checks it against the artifact schema.
Dataset load_pipeline_dataset(const PipelineArtifact& artifact);
Dataset select_part(const PipelineArtifact& artifact, const Dataset& raw, SplitPart part);

/// TreeView for one dataset sample (raw features, true label known).
TreeViewLayout explain_sample(const PipelineArtifact& artifact, const Dataset& raw, const std::string& sample_id);
/// TreeView for an arbitrary raw feature vector.
TreeViewLayout explain_features(const PipelineArtifact& artifact, std::span<const double> features,
                                std::optional<int> true_label = std::nullopt);

}  // namespace treeview

#endif  // TREEVIEW_PIPELINE_HPP
