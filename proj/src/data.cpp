#include "treeview/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

namespace treeview {

void DatasetSchema::validate() const {
  if (std::set<std::string>(feature_names.begin(), feature_names.end()).size() !=
      feature_names.size()) {
    throw ValidationError("duplicate feature names");
  }
  if (std::set<std::string>(class_names.begin(), class_names.end()).size() != class_names.size()) {
    throw ValidationError("duplicate class names");
  }
  if (class_names.size() < 2) {
    throw ValidationError("dataset needs at least 2 classes, found " +
                          std::to_string(class_names.size()));
  }
}

void Dataset::validate() const {
  schema.validate();
  const auto t = static_cast<Eigen::Index>(labels.size());
  if (features.rows() != t || sample_ids.size() != labels.size()) {
    throw ValidationError("dataset row count mismatch");
  }
  if (dim() != schema.num_features()) {
    throw ValidationError("feature matrix has " + std::to_string(dim()) + " columns, schema has " +
                          std::to_string(schema.num_features()));
  }
  if (!features.allFinite()) throw ValidationError("dataset contains NaN or Inf");
  const int c = static_cast<int>(schema.num_classes());
  for (int y : labels) {
    if (y < 0 || y >= c) throw ValidationError("label out of range: " + std::to_string(y));
  }
  if (std::set<std::string>(sample_ids.begin(), sample_ids.end()).size() != sample_ids.size()) {
    throw ValidationError("duplicate sample ids");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.schema = schema;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.sample_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    out.sample_ids.push_back(sample_ids[rows[i]]);
  }
  return out;
}

std::optional<std::size_t> Dataset::find(const std::string& sample_id) const {
  const auto it = std::find(sample_ids.begin(), sample_ids.end(), sample_id);
  if (it == sample_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - sample_ids.begin());
}

MatrixXd ScalerParams::apply(const MatrixXd& features) const {
  if (features.cols() != means.size()) {
    throw ValidationError("scaler expects " + std::to_string(means.size()) + " features, got " +
                          std::to_string(features.cols()));
  }
  return (features.rowwise() - means.transpose()).array().rowwise() / stds.transpose().array();
}

MatrixXd ScalerParams::invert(const MatrixXd& standardized) const {
  return (standardized.array().rowwise() * stds.transpose().array()).matrix().rowwise() +
         means.transpose();
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file: " + path.string());

  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, ',');
    for (auto& c : cells) c = std::string(trim(c));
    if (options.header && header.empty() && line_numbers.empty() && rows.empty()) {
      if (line_no == 1 && !cells.empty() && cells[0].size() >= 3 &&
          static_cast<unsigned char>(cells[0][0]) == 0xEF) {
        cells[0].erase(0, 3);  // UTF-8 BOM
      }
      header = std::move(cells);
      continue;
    }
    rows.push_back(std::move(cells));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw ValidationError("empty dataset: " + path.string());

  const std::size_t ncols = options.header ? header.size() : rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != ncols) {
      throw ValidationError("ragged row at line " + std::to_string(line_numbers[r]) + ": expected " +
                            std::to_string(ncols) + " columns, found " +
                            std::to_string(rows[r].size()));
    }
  }

  auto resolve = [&](const std::variant<std::string, std::size_t>& col) -> std::size_t {
    if (const auto* idx = std::get_if<std::size_t>(&col)) {
      if (*idx >= ncols) throw ValidationError("unknown column index " + std::to_string(*idx));
      return *idx;
    }
    const auto& name = std::get<std::string>(col);
    if (!options.header) throw ValidationError("column '" + name + "' named but file has no header");
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("unknown column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = resolve(options.label_column);
  std::optional<std::size_t> id_col;
  if (options.id_column) id_col = resolve(*options.id_column);
  if (id_col && *id_col == label_col) throw ValidationError("id column equals label column");

  std::vector<std::size_t> feature_cols;
  Dataset ds;
  for (std::size_t c = 0; c < ncols; ++c) {
    if (c == label_col || (id_col && c == *id_col)) continue;
    feature_cols.push_back(c);
    ds.schema.feature_names.push_back(options.header ? header[c] : "f" + std::to_string(c));
  }

  const auto t = static_cast<Eigen::Index>(rows.size());
  ds.features.resize(t, static_cast<Eigen::Index>(feature_cols.size()));
  std::unordered_map<std::string, int> class_ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      double v = 0.0;
      const auto& cell = cells[feature_cols[j]];
      if (!parse_double(cell, v) || !std::isfinite(v)) {
        throw ValidationError("non-numeric value '" + cell + "' at line " +
                              std::to_string(line_numbers[r]) + ", column " +
                              std::to_string(feature_cols[j] + 1));
      }
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v;
    }
    const auto& label = cells[label_col];
    auto [it, inserted] = class_ids.try_emplace(label, static_cast<int>(class_ids.size()));
    if (inserted) ds.schema.class_names.push_back(label);
    ds.labels.push_back(it->second);
    ds.sample_ids.push_back(id_col ? cells[*id_col] : std::to_string(r));
  }
  ds.validate();
  return ds;
}

ScalerParams fit_scaler(const MatrixXd& features) {
  ScalerParams p;
  const double t = static_cast<double>(features.rows());
  p.means = features.colwise().mean().transpose();
  p.stds.resize(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double var = (features.col(j).array() - p.means(j)).square().sum() / t;
    const double sd = std::sqrt(var);
    p.stds(j) = sd > 0.0 ? sd : 1.0;
  }
  return p;
}

std::pair<Dataset, ScalerParams> standardize(const Dataset& dataset) {
  if (dataset.size() == 0) throw ValidationError("cannot standardize an empty dataset");
  ScalerParams p = fit_scaler(dataset.features);
  Dataset out = dataset;
  out.features = p.apply(dataset.features);
  return {std::move(out), std::move(p)};
}

SplitResult split(const Dataset& dataset, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0,1)");
  }
  const std::size_t t = dataset.size();
  if (t < 2) throw ValidationError("need at least 2 samples to split");
  Rng rng(spec.seed);
  std::vector<char> in_train(t, 0);

  auto take = [&](std::vector<std::size_t> idx) {
    rng.shuffle(idx);
    const auto want = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(idx.size())));
    const std::size_t n = std::clamp<std::size_t>(want, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n; ++i) in_train[idx[i]] = 1;
  };

  if (spec.stratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < t; ++i) by_class[dataset.labels[i]].push_back(i);
    for (auto& [cls, idx] : by_class) {
      if (idx.size() < 2) {
        throw ValidationError("class '" + dataset.schema.class_names[static_cast<std::size_t>(cls)] +
                              "' has fewer than 2 samples; cannot stratify");
      }
      take(idx);
    }
  } else {
    std::vector<std::size_t> idx(t);
    for (std::size_t i = 0; i < t; ++i) idx[i] = i;
    take(idx);
  }

  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < t; ++i) (in_train[i] ? train_rows : test_rows).push_back(i);
  return {dataset.subset(train_rows), dataset.subset(test_rows)};
}

}  // namespace treeview
