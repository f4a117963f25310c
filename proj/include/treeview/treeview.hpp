#ifndef TREEVIEW_TREEVIEW_HPP
#define TREEVIEW_TREEVIEW_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "treeview/meta_features.hpp"
#include "treeview/surrogate.hpp"

namespace treeview {

/// Class `class_id` is rejected by the test at path row `row`: its share of
/// the class histogram one step further down falls below threshold.
/// `factor` is the factor tested at `row`.
struct RejectionEvent {
  int class_id = 0;
  std::size_t row = 0;
  int factor = -1;

  bool operator==(const RejectionEvent&) const = default;
};

/// Class z is rejected at the first step t >= 1 whose histogram share is
/// below `threshold` (or whose count is zero); the event is recorded at row
/// t - 1. The leaf argmax class is exempt.
std::vector<RejectionEvent> compute_rejections(const DecisionPath& path, double threshold);

enum class CellStatus { Alive, RejectedHere, RejectedEarlier };

struct RankedFeature {
  std::size_t index = 0;
  std::string name;
  double importance = 0.0;
};

struct LayoutRow {
  int node = 0;
  int factor = -1;  // factor tested at this row; -1 on the leaf row
  int value = 0;
  bool took_equal = false;
  std::vector<CellStatus> status;     // one per class
  std::vector<double> probability;    // row histogram share per class
  std::vector<RankedFeature> top_features;
};

struct LayoutFooter {
  int predicted_class = 0;  // surrogate prediction
  std::optional<int> true_class;
  std::optional<int> network_class;

  std::optional<bool> correct() const {
    if (!true_class) return std::nullopt;
    return *true_class == predicted_class;
  }
};

struct TreeViewLayout {
  std::string sample_id;
  std::vector<std::string> class_names;
  std::vector<int> meta_feature;
  std::vector<LayoutRow> rows;
  std::vector<RejectionEvent> rejections;
  LayoutFooter footer;

  std::size_t num_classes() const { return class_names.size(); }
};

struct RenderConfig {
  int cell_size = 48;
  std::size_t top_features = 3;
  double rejection_threshold = 0.05;
  std::string fill_color = "#1f77b4";
  std::string reject_color = "#d62728";
  std::string earlier_color = "#bbbbbb";
};

/// Everything needed to explain a sample. Importances are indexed by factor.
struct ExplanationArtifacts {
  const std::vector<FactorPredictor>& predictors;
  const DecisionTreeSurrogate& tree;
  const std::vector<std::vector<double>>& importances;
  const std::vector<std::string>& feature_names;
  const std::vector<std::string>& class_names;
};

TreeViewLayout trace_explanation(std::span<const double> input_row, std::optional<int> true_label,
                                 const ExplanationArtifacts& artifacts, const RenderConfig& cfg);

/// Same as trace_explanation after the meta-feature has been computed.
TreeViewLayout layout_from_meta(std::span<const int> meta, std::optional<int> true_label,
                                const ExplanationArtifacts& artifacts, const RenderConfig& cfg);

std::string render_svg(const TreeViewLayout& layout, const RenderConfig& cfg);
std::string render_text(const TreeViewLayout& layout);

nlohmann::json layout_to_json(const TreeViewLayout& layout);
TreeViewLayout layout_from_json(const nlohmann::json& j);

/// Number of code points in a UTF-8 string.
std::size_t display_width(std::string_view utf8);

}  // namespace treeview

#endif  // TREEVIEW_TREEVIEW_HPP
