#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "treeview/common.hpp"

namespace treeview::testing {

// Three Gaussian-ish classes in 4 features, 40 rows each, with a header.
inline std::filesystem::path write_blobs_csv(const std::filesystem::path& path, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::ofstream out(path);
  out << "alpha,beta,gamma,delta,kind\n";
  const char* names[] = {"north", "south", "east"};
  const double centers[3][4] = {{0, 0, 5, 1}, {4, 1, 0, 1}, {0, 5, 1, 4}};
  for (int i = 0; i < 120; ++i) {
    const int c = i % 3;
    for (int j = 0; j < 4; ++j) out << format_double(centers[c][j] + rng.uniform(-1.2, 1.2)) << ',';
    out << names[c] << '\n';
  }
  return path;
}

inline nlohmann::json small_config(const std::string& dataset) {
  auto j = nlohmann::json::parse(R"({
    "dataset": {"path": "", "label_column": "kind"},
    "network": {"hidden_layers": [8, 6], "epochs": 40, "batch_size": 16, "learning_rate": 0.05,
                "momentum": 0.9, "dropout_rate": 0.1},
    "factors": {"layers": "all", "num_factors": null, "k_min": 2, "k_max": 6},
    "clusters": {"per_factor": null, "restarts": 4},
    "forest": {"num_trees": 8},
    "surrogate": {"min_leaf": 2},
    "seed": 3
  })");
  j["dataset"]["path"] = dataset;
  return j;
}

}  // namespace treeview::testing
