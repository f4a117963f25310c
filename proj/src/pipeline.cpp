#include "treeview/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>

namespace treeview {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---- model -----------------------------------------------------------------

json model_to_json(const MlpModel& m) {
  json j;
  j["input_dim"] = m.input_dim();
  j["layers"] = json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto& w = m.weights(l);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    j["layers"].push_back({{"width", m.layer_specs()[l].width},
                           {"activation", m.layer_specs()[l].activation == Activation::Softmax ? "softmax" : "rectifier"},
                           {"weights", flat},
                           {"biases", std::vector<double>(m.biases(l).data(), m.biases(l).data() + m.biases(l).size())}});
  }
  return j;
}

MlpModel model_from_json(const json& j) {
  const auto input_dim = j.at("input_dim").get<std::size_t>();
  std::vector<LayerSpec> specs;
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
  std::size_t fan_in = input_dim;
  for (const auto& jl : j.at("layers")) {
    LayerSpec s;
    s.width = jl.at("width").get<std::size_t>();
    const auto act = jl.at("activation").get<std::string>();
    if (act == "softmax") {
      s.activation = Activation::Softmax;
    } else if (act == "rectifier") {
      s.activation = Activation::Rectifier;
    } else {
      throw ValidationError("unknown activation '" + act + "'");
    }
    const auto flat = jl.at("weights").get<std::vector<double>>();
    const auto b = jl.at("biases").get<std::vector<double>>();
    if (flat.size() != s.width * fan_in || b.size() != s.width) {
      throw ValidationError("model layer " + std::to_string(specs.size()) + " parameter count mismatch");
    }
    MatrixXd w(static_cast<Eigen::Index>(s.width), static_cast<Eigen::Index>(fan_in));
    for (std::size_t r = 0; r < s.width; ++r) {
      for (std::size_t c = 0; c < fan_in; ++c) {
        w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * fan_in + c];
      }
    }
    weights.push_back(std::move(w));
    biases.push_back(Eigen::Map<const VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
    specs.push_back(s);
    fan_in = s.width;
  }
  return MlpModel(input_dim, std::move(specs), std::move(weights), std::move(biases));
}

// ---- forests -----------------------------------------------------------------

json forest_node_to_json(const ClassificationTree& t, std::size_t i) {
  const auto& n = t.nodes[i];
  json j;
  j["votes"] = n.counts;
  if (!n.is_leaf()) {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = forest_node_to_json(t, static_cast<std::size_t>(n.left));
    j["right"] = forest_node_to_json(t, static_cast<std::size_t>(n.right));
  }
  return j;
}

int forest_node_from_json(const json& j, ClassificationTree& t) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.push_back({});
  t.nodes.back().counts = j.at("votes").get<std::vector<double>>();
  if (j.contains("feature")) {
    const int feature = j.at("feature").get<int>();
    const double threshold = j.at("threshold").get<double>();
    const int l = forest_node_from_json(j.at("left"), t);
    const int r = forest_node_from_json(j.at("right"), t);
    auto& n = t.nodes[static_cast<std::size_t>(id)];
    n.feature = feature;
    n.threshold = threshold;
    n.left = l;
    n.right = r;
  }
  return id;
}

json predictor_to_json(const FactorPredictor& p) {
  json j;
  j["factor"] = p.factor;
  j["num_labels"] = p.num_labels;
  j["num_features"] = p.forest.num_features();
  j["oob_accuracy"] = p.forest.oob_accuracy();
  j["trees"] = json::array();
  for (const auto& t : p.forest.trees()) j["trees"].push_back(forest_node_to_json(t, 0));
  return j;
}

FactorPredictor predictor_from_json(const json& j) {
  FactorPredictor p;
  p.factor = j.at("factor").get<std::size_t>();
  p.num_labels = j.at("num_labels").get<std::size_t>();
  std::vector<ClassificationTree> trees;
  for (const auto& jt : j.at("trees")) {
    ClassificationTree t;
    forest_node_from_json(jt, t);
    trees.push_back(std::move(t));
  }
  p.forest = RandomForest(j.at("num_features").get<std::size_t>(), p.num_labels, std::move(trees),
                          j.at("oob_accuracy").get<double>());
  return p;
}

// ---- surrogate ---------------------------------------------------------------

json surrogate_node_to_json(const DecisionTreeSurrogate& t, std::size_t i) {
  const auto& n = t.nodes()[i];
  json j;
  j["histogram"] = n.histogram;
  if (n.is_leaf()) {
    j["leaf_class"] = n.leaf_class;
  } else {
    j["factor"] = n.factor;
    j["value"] = n.value;
    j["eq_child"] = surrogate_node_to_json(t, static_cast<std::size_t>(n.eq_child));
    j["ne_child"] = surrogate_node_to_json(t, static_cast<std::size_t>(n.ne_child));
  }
  return j;
}

int surrogate_node_from_json(const json& j, std::vector<SurrogateNode>& nodes) {
  const int id = static_cast<int>(nodes.size());
  nodes.push_back({});
  nodes.back().histogram = j.at("histogram").get<std::vector<double>>();
  if (j.contains("leaf_class")) {
    nodes.back().leaf_class = j.at("leaf_class").get<int>();
    return id;
  }
  const int factor = j.at("factor").get<int>();
  const int value = j.at("value").get<int>();
  const int e = surrogate_node_from_json(j.at("eq_child"), nodes);
  const int n = surrogate_node_from_json(j.at("ne_child"), nodes);
  auto& node = nodes[static_cast<std::size_t>(id)];
  node.factor = factor;
  node.value = value;
  node.eq_child = e;
  node.ne_child = n;
  return id;
}

// ---- matrices ----------------------------------------------------------------

json rows_to_json(const MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    j.push_back(row);
  }
  return j;
}

MatrixXd rows_from_json(const json& j, Eigen::Index cols) {
  MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  Eigen::Index r = 0;
  for (const auto& jr : j) {
    const auto row = jr.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ValidationError("matrix row has wrong length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    ++r;
  }
  return m;
}

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }
VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void print_factor_summary(const PipelineArtifact& a, std::ostream& log) {
  const auto sizes = a.partition.sizes();
  log << "K = " << a.partition.num_factors << " factors over N = " << a.partition.neuron_ids.size()
      << " hidden units\n";
  log << "factor  N_i  L  inertia  oob_accuracy\n";
  for (std::size_t i = 0; i < a.partition.num_factors; ++i) {
    log << std::setw(6) << i << std::setw(5) << sizes[i] << std::setw(3) << a.clusterings[i].num_clusters << "  "
        << std::fixed << std::setprecision(2) << std::setw(7) << a.clusterings[i].inertia << "  " << std::setprecision(4)
        << a.predictors[i].oob_accuracy() << '\n';
  }
  log.unsetf(std::ios::floatfield);
  log << std::setprecision(6);
}

}  // namespace

// ---- config ------------------------------------------------------------------

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  try {
    PipelineConfig c;
    const auto& jd = j.at("dataset");
    fs::path p = jd.at("path").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    c.dataset_path = p.lexically_normal();
    if (jd.contains("label_column")) {
      const auto& lc = jd.at("label_column");
      if (lc.is_number_unsigned()) {
        c.csv.label_column = lc.get<std::size_t>();
      } else {
        c.csv.label_column = lc.get<std::string>();
      }
    }
    c.csv.header = jd.value("header", true);
    c.csv.id_column = optional_field<std::string>(jd, "id_column");

    if (j.contains("split")) {
      const auto& js = j.at("split");
      c.train_fraction = js.value("train_fraction", c.train_fraction);
      c.stratified = js.value("stratified", c.stratified);
    }
    if (j.contains("network")) {
      const auto& jn = j.at("network");
      c.hidden_layers = jn.value("hidden_layers", c.hidden_layers);
      c.train.epochs = jn.value("epochs", c.train.epochs);
      c.train.batch_size = jn.value("batch_size", c.train.batch_size);
      c.train.learning_rate = jn.value("learning_rate", c.train.learning_rate);
      c.train.momentum = jn.value("momentum", c.train.momentum);
      c.train.dropout_rate = jn.value("dropout_rate", c.train.dropout_rate);
    }
    if (j.contains("factors")) {
      const auto& jf = j.at("factors");
      if (jf.contains("layers")) {
        const auto& jl = jf.at("layers");
        if (jl.is_array()) {
          c.layers.layers = jl.get<std::vector<std::size_t>>();
        } else {
          c.layers = LayerSelector::parse(jl.get<std::string>());
        }
      }
      c.num_factors = optional_field<std::size_t>(jf, "num_factors");
      c.k_min = jf.value("k_min", c.k_min);
      c.k_max = jf.value("k_max", c.k_max);
    }
    if (j.contains("clusters")) {
      const auto& jc = j.at("clusters");
      c.clusters_per_factor = optional_field<std::size_t>(jc, "per_factor");
      c.kmeans_restarts = jc.value("restarts", c.kmeans_restarts);
    }
    if (j.contains("forest")) {
      const auto& jf = j.at("forest");
      c.forest.num_trees = jf.value("num_trees", c.forest.num_trees);
      c.forest.max_depth = optional_field<std::size_t>(jf, "max_depth");
      c.forest.min_leaf = jf.value("min_leaf", c.forest.min_leaf);
      c.forest.features_per_split = optional_field<std::size_t>(jf, "features_per_split");
    }
    if (j.contains("surrogate")) {
      const auto& jt = j.at("surrogate");
      c.tree.max_depth = optional_field<std::size_t>(jt, "max_depth");
      c.tree.min_leaf = jt.value("min_leaf", c.tree.min_leaf);
      c.tree.min_impurity_decrease = jt.value("min_impurity_decrease", c.tree.min_impurity_decrease);
    }
    if (j.contains("render")) {
      const auto& jr = j.at("render");
      c.render.cell_size = jr.value("cell_size", c.render.cell_size);
      c.render.top_features = jr.value("top_features", c.render.top_features);
      c.render.rejection_threshold = jr.value("rejection_threshold", c.render.rejection_threshold);
    }
    c.seed = j.value("seed", c.seed);

    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ValidationError("split.train_fraction must lie in (0,1)");
    if (c.hidden_layers.empty()) throw ValidationError("network.hidden_layers must name at least one layer");
    if (c.render.top_features < 1) throw ValidationError("render.top_features must be >= 1");
    if (!(c.render.rejection_threshold >= 0.0 && c.render.rejection_threshold < 1.0)) {
      throw ValidationError("render.rejection_threshold must lie in [0,1)");
    }
    if (c.tree.min_leaf < 1) throw ValidationError("surrogate.min_leaf must be >= 1");
    if (c.forest.num_trees < 1) throw ValidationError("forest.num_trees must be >= 1");
    if (c.num_factors && *c.num_factors < 1) throw ValidationError("factors.num_factors must be >= 1");
    if (c.clusters_per_factor && *c.clusters_per_factor < 1) throw ValidationError("clusters.per_factor must be >= 1");
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json PipelineConfig::to_json() const {
  json j;
  json jd;
  jd["path"] = dataset_path.string();
  if (const auto* idx = std::get_if<std::size_t>(&csv.label_column)) {
    jd["label_column"] = *idx;
  } else {
    jd["label_column"] = std::get<std::string>(csv.label_column);
  }
  jd["header"] = csv.header;
  jd["id_column"] = optional_json(csv.id_column);
  j["dataset"] = jd;
  j["split"] = {{"train_fraction", train_fraction}, {"stratified", stratified}};
  j["network"] = {{"hidden_layers", hidden_layers},     {"epochs", train.epochs},
                  {"batch_size", train.batch_size},     {"learning_rate", train.learning_rate},
                  {"momentum", train.momentum},         {"dropout_rate", train.dropout_rate}};
  j["factors"] = {{"layers", layers.str()}, {"num_factors", optional_json(num_factors)}, {"k_min", k_min}, {"k_max", k_max}};
  j["clusters"] = {{"per_factor", optional_json(clusters_per_factor)}, {"restarts", kmeans_restarts}};
  j["forest"] = {{"num_trees", forest.num_trees},
                 {"max_depth", optional_json(forest.max_depth)},
                 {"min_leaf", forest.min_leaf},
                 {"features_per_split", optional_json(forest.features_per_split)}};
  j["surrogate"] = {{"max_depth", optional_json(tree.max_depth)},
                    {"min_leaf", tree.min_leaf},
                    {"min_impurity_decrease", tree.min_impurity_decrease}};
  j["render"] = {{"cell_size", render.cell_size},
                 {"top_features", render.top_features},
                 {"rejection_threshold", render.rejection_threshold}};
  j["seed"] = seed;
  return j;
}

// ---- artifact ------------------------------------------------------------------

json PipelineArtifact::to_json() const {
  json j;
  j["format"] = "treeview-artifact";
  j["version"] = kArtifactVersion;
  j["stage"] = stage;
  j["config"] = config.to_json();
  j["schema"] = {{"feature_names", schema.feature_names}, {"class_names", schema.class_names}};
  j["scaler"] = {{"means", to_vec(scaler.means)}, {"stds", to_vec(scaler.stds)}};
  j["split"] = {{"train_ids", train_ids}, {"test_ids", test_ids}};
  j["model"] = model_to_json(model);
  std::vector<double> loss, acc;
  for (const auto& e : train_report.epochs) {
    loss.push_back(e.loss);
    acc.push_back(e.accuracy);
  }
  j["train_report"] = {{"loss", loss}, {"accuracy", acc}};
  j["network"] = {{"train_accuracy", network_train_accuracy}, {"test_accuracy", network_test_accuracy}};
  j["activations"] = {{"file", activations_file}, {"layers", config.layers.str()}};
  if (stage >= 2) {
    json jp;
    jp["K"] = partition.num_factors;
    jp["layers"] = partition.source.str();
    jp["neuron_order"] = json::array();
    for (const auto& id : partition.neuron_ids) jp["neuron_order"].push_back(id.str());
    jp["factors"] = json::array();
    for (std::size_t i = 0; i < partition.num_factors; ++i) {
      json members = json::array();
      for (std::size_t r : partition.members(i)) members.push_back(partition.neuron_ids[r].str());
      jp["factors"].push_back(members);
    }
    j["partition"] = jp;
    j["clusterings"] = json::array();
    for (const auto& fc : clusterings) {
      j["clusterings"].push_back({{"factor", fc.factor},
                                  {"L", fc.num_clusters},
                                  {"centroids", rows_to_json(fc.centroids)},
                                  {"train_labels", fc.train_labels},
                                  {"inertia", fc.inertia}});
    }
    json jm = json::array();
    for (std::size_t k = 0; k < meta.num_factors(); ++k) {
      std::vector<int> row(meta.num_samples());
      for (std::size_t s = 0; s < row.size(); ++s) {
        row[s] = meta.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s));
      }
      jm.push_back(row);
    }
    j["meta_features"] = jm;
    j["predictors"] = json::array();
    for (const auto& p : predictors) j["predictors"].push_back(predictor_to_json(p));
    j["importances"] = importances;
  }
  if (stage >= 3) {
    j["surrogate"] = {{"num_factors", tree.num_factors()},
                      {"num_classes", tree.num_classes()},
                      {"root", surrogate_node_to_json(tree, 0)}};
    j["evaluation"] = evaluation;
  }
  return j;
}

PipelineArtifact PipelineArtifact::from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "treeview-artifact") throw ValidationError("not a treeview artifact");
    const int version = j.at("version").get<int>();
    if (version != kArtifactVersion) {
      throw ValidationError("artifact version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kArtifactVersion) + ")");
    }
    PipelineArtifact a;
    a.stage = j.at("stage").get<int>();
    a.config = PipelineConfig::from_json(j.at("config"), fs::path());
    a.schema.feature_names = j.at("schema").at("feature_names").get<std::vector<std::string>>();
    a.schema.class_names = j.at("schema").at("class_names").get<std::vector<std::string>>();
    a.scaler.means = from_vec(j.at("scaler").at("means").get<std::vector<double>>());
    a.scaler.stds = from_vec(j.at("scaler").at("stds").get<std::vector<double>>());
    a.train_ids = j.at("split").at("train_ids").get<std::vector<std::string>>();
    a.test_ids = j.at("split").at("test_ids").get<std::vector<std::string>>();
    a.model = model_from_json(j.at("model"));
    const auto loss = j.at("train_report").at("loss").get<std::vector<double>>();
    const auto acc = j.at("train_report").at("accuracy").get<std::vector<double>>();
    for (std::size_t e = 0; e < loss.size() && e < acc.size(); ++e) a.train_report.epochs.push_back({loss[e], acc[e]});
    a.network_train_accuracy = j.at("network").at("train_accuracy").get<double>();
    a.network_test_accuracy = j.at("network").at("test_accuracy").get<double>();
    a.activations_file = j.at("activations").at("file").get<std::string>();

    if (a.stage >= 2) {
      const auto& jp = j.at("partition");
      a.partition.num_factors = jp.at("K").get<std::size_t>();
      a.partition.source = LayerSelector::parse(jp.at("layers").get<std::string>());
      for (const auto& s : jp.at("neuron_order")) a.partition.neuron_ids.push_back(NeuronId::parse(s.get<std::string>()));
      a.partition.assignment.assign(a.partition.neuron_ids.size(), a.partition.num_factors);
      const auto& factors = jp.at("factors");
      if (factors.size() != a.partition.num_factors) throw ValidationError("partition lists the wrong number of factors");
      for (std::size_t i = 0; i < factors.size(); ++i) {
        for (const auto& s : factors[i]) {
          const auto id = NeuronId::parse(s.get<std::string>());
          const auto it = std::find(a.partition.neuron_ids.begin(), a.partition.neuron_ids.end(), id);
          if (it == a.partition.neuron_ids.end()) throw ValidationError("partition names unknown neuron " + id.str());
          a.partition.assignment[static_cast<std::size_t>(it - a.partition.neuron_ids.begin())] = i;
        }
      }
      a.partition.validate();
      const auto sizes = a.partition.sizes();
      for (const auto& jc : j.at("clusterings")) {
        FactorClustering fc;
        fc.factor = jc.at("factor").get<std::size_t>();
        fc.num_clusters = jc.at("L").get<std::size_t>();
        if (fc.factor >= sizes.size()) throw ValidationError("clustering for a missing factor");
        fc.centroids = rows_from_json(jc.at("centroids"), static_cast<Eigen::Index>(sizes[fc.factor]));
        fc.train_labels = jc.at("train_labels").get<std::vector<int>>();
        fc.inertia = jc.at("inertia").get<double>();
        fc.sample_ids = a.train_ids;
        a.clusterings.push_back(std::move(fc));
      }
      const auto& jm = j.at("meta_features");
      a.meta.sample_ids = a.train_ids;
      a.meta.values.resize(static_cast<Eigen::Index>(jm.size()), static_cast<Eigen::Index>(a.train_ids.size()));
      for (std::size_t k = 0; k < jm.size(); ++k) {
        const auto row = jm[k].get<std::vector<int>>();
        if (row.size() != a.train_ids.size()) throw ValidationError("meta-feature row has wrong length");
        for (std::size_t s = 0; s < row.size(); ++s) {
          a.meta.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s)) = row[s];
        }
      }
      for (const auto& jpred : j.at("predictors")) a.predictors.push_back(predictor_from_json(jpred));
      a.importances = j.at("importances").get<std::vector<std::vector<double>>>();
    }
    if (a.stage >= 3) {
      const auto& js = j.at("surrogate");
      std::vector<SurrogateNode> nodes;
      surrogate_node_from_json(js.at("root"), nodes);
      a.tree = DecisionTreeSurrogate(js.at("num_factors").get<std::size_t>(), js.at("num_classes").get<std::size_t>(),
                                     std::move(nodes));
      a.evaluation = j.at("evaluation");
    }
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed artifact: ") + e.what());
  }
}

PipelineArtifact PipelineArtifact::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open artifact: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("artifact " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void PipelineArtifact::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write artifact: " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw RuntimeFailure("failed writing artifact: " + path.string());
}

void PipelineArtifact::validate() const {
  if (stage < 1 || stage > 3) throw ValidationError("artifact stage " + std::to_string(stage) + " is invalid");
  schema.validate();
  const std::size_t d = schema.num_features();
  const std::size_t c = schema.num_classes();
  if (static_cast<std::size_t>(scaler.means.size()) != d || static_cast<std::size_t>(scaler.stds.size()) != d) {
    throw ValidationError("scaler covers " + std::to_string(scaler.means.size()) + " features, schema has " +
                          std::to_string(d));
  }
  if (model.input_dim() != d) throw ValidationError("model input_dim does not match the feature count");
  if (model.num_classes() != c) throw ValidationError("model output width does not match the class count");
  if (train_ids.empty() || test_ids.empty()) throw ValidationError("artifact split is empty");
  if (stage < 2) return;

  const std::size_t k = partition.num_factors;
  if (clusterings.size() != k || predictors.size() != k || importances.size() != k || meta.num_factors() != k) {
    throw ValidationError("artifact disagrees on the number of factors K=" + std::to_string(k));
  }
  if (meta.num_samples() != train_ids.size()) throw ValidationError("meta-feature matrix does not cover the train split");
  const auto sizes = partition.sizes();
  for (std::size_t i = 0; i < k; ++i) {
    const auto& fc = clusterings[i];
    fc.validate();
    if (fc.factor != i || predictors[i].factor != i) throw ValidationError("factor " + std::to_string(i) + " is out of order");
    if (static_cast<std::size_t>(fc.centroids.cols()) != sizes[i]) throw ValidationError("centroid width mismatch for factor " + std::to_string(i));
    if (fc.train_labels.size() != train_ids.size()) throw ValidationError("clustering does not cover the train split");
    if (predictors[i].num_labels != fc.num_clusters) {
      throw ValidationError("factor " + std::to_string(i) + ": predictor has " + std::to_string(predictors[i].num_labels) +
                            " labels, clustering has L=" + std::to_string(fc.num_clusters));
    }
    if (predictors[i].forest.num_features() != d) throw ValidationError("predictor input width mismatch");
    if (importances[i].size() != d) throw ValidationError("importance vector width mismatch");
    for (std::size_t s = 0; s < train_ids.size(); ++s) {
      if (meta.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) != fc.train_labels[s]) {
        throw ValidationError("meta-feature matrix disagrees with clustering " + std::to_string(i));
      }
    }
  }
  if (stage < 3) return;
  if (tree.num_factors() != k) throw ValidationError("surrogate expects a different number of factors");
  if (tree.num_classes() != c) throw ValidationError("surrogate has a different class count");
}

ExplanationArtifacts PipelineArtifact::explanation_view() const {
  if (stage < 3) throw ValidationError("artifact is at stage " + std::to_string(stage) + "; run surrogate first");
  return {predictors, tree, importances, schema.feature_names, schema.class_names};
}

fs::path activations_path(const fs::path& artifact_path) {
  fs::path p = artifact_path;
  p.replace_extension(".activations.txt");
  return p;
}

// ---- stages --------------------------------------------------------------------

Dataset load_pipeline_dataset(const PipelineArtifact& artifact) {
  Dataset ds = load_csv(artifact.config.dataset_path, artifact.config.csv);
  if (ds.schema.feature_names != artifact.schema.feature_names || ds.schema.class_names != artifact.schema.class_names) {
    throw ValidationError("dataset " + artifact.config.dataset_path.string() + " does not match the artifact schema");
  }
  return ds;
}

Dataset select_part(const PipelineArtifact& artifact, const Dataset& raw, SplitPart part) {
  std::vector<std::size_t> rows;
  auto add = [&](const std::vector<std::string>& ids) {
    for (const auto& id : ids) {
      const auto idx = raw.find(id);
      if (!idx) throw ValidationError("sample '" + id + "' from the artifact split is missing from the dataset");
      rows.push_back(*idx);
    }
  };
  if (part == SplitPart::Train || part == SplitPart::All) add(artifact.train_ids);
  if (part == SplitPart::Test || part == SplitPart::All) add(artifact.test_ids);
  return raw.subset(rows);
}

PipelineArtifact run_train(const PipelineConfig& cfg, const fs::path& artifact_path, std::ostream& log) {
  const Dataset raw = load_csv(cfg.dataset_path, cfg.csv);
  log << "dataset " << cfg.dataset_path.filename().string() << ": T=" << raw.size() << " d=" << raw.dim()
      << " classes=" << raw.schema.num_classes() << '\n';
  SplitSpec spec{cfg.train_fraction, derive_seed(cfg.seed, "split"), cfg.stratified};
  const auto [train_raw, test_raw] = split(raw, spec);

  PipelineArtifact a;
  a.stage = 1;
  a.config = cfg;
  a.schema = raw.schema;
  a.scaler = fit_scaler(train_raw.features);
  a.train_ids = train_raw.sample_ids;
  a.test_ids = test_raw.sample_ids;
  Dataset train_std = train_raw;
  train_std.features = a.scaler.apply(train_raw.features);

  a.model = init_model(raw.dim(), make_layer_specs(cfg.hidden_layers, raw.schema.num_classes()),
                       derive_seed(cfg.seed, "init"));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  a.train_report = train(a.model, train_std, tc);
  for (std::size_t e = 0; e < a.train_report.epochs.size(); ++e) {
    log << "epoch " << e + 1 << " loss " << format_double(a.train_report.epochs[e].loss) << " train_acc "
        << a.train_report.epochs[e].accuracy << '\n';
  }
  a.network_train_accuracy = accuracy(predict(a.model, train_std.features), train_raw.labels);
  a.network_test_accuracy = accuracy(predict(a.model, a.scaler.apply(test_raw.features)), test_raw.labels);
  log << "network train accuracy " << a.network_train_accuracy << '\n';
  log << "network test accuracy " << a.network_test_accuracy << '\n';

  const fs::path act = activations_path(artifact_path);
  a.activations_file = act.filename().string();
  if (act.has_parent_path()) fs::create_directories(act.parent_path());
  export_activations(extract_activations(a.model, train_std, cfg.layers), act);
  a.save(artifact_path);
  return a;
}

PipelineArtifact run_factorize(const fs::path& artifact_path, const std::optional<PipelineConfig>& override_cfg,
                               std::ostream& log) {
  PipelineArtifact a = PipelineArtifact::load(artifact_path);
  if (override_cfg) a.config = *override_cfg;
  const PipelineConfig& cfg = a.config;

  const ActivationMatrix am = import_activations(artifact_path.parent_path() / a.activations_file);
  am.validate();
  if (am.sample_ids != a.train_ids) {
    throw ValidationError("activation file samples do not match the artifact's train split");
  }
  const Dataset raw = load_pipeline_dataset(a);
  const Dataset train_raw = select_part(a, raw, SplitPart::Train);

  const std::size_t n = am.num_neurons();
  if (n == 0) throw ValidationError("activation file has no neurons");
  const NeuronDistanceMatrix dm = neuron_distance(am);
  std::size_t k = 1;
  if (cfg.num_factors) {
    k = *cfg.num_factors;
  } else if (n >= 3) {
    const std::size_t hi = std::min(cfg.k_max, n - 1);
    const std::size_t lo = std::min(cfg.k_min, hi);
    k = select_num_factors(dm, std::max<std::size_t>(2, lo), hi);
  }
  a.partition = cluster_neurons(dm, k);
  a.partition.source = cfg.layers;

  const std::size_t l = std::min(cfg.clusters_per_factor.value_or(a.schema.num_classes()), am.num_samples());
  a.clusterings.clear();
  a.predictors.clear();
  a.importances.clear();
  for (std::size_t i = 0; i < k; ++i) {
    const ActivationMatrix block = factor_activations(am, a.partition, i);
    a.clusterings.push_back(
        cluster_factor_samples(block, l, derive_seed(cfg.seed, "kmeans:" + std::to_string(i)), cfg.kmeans_restarts, i));
    ForestConfig fcfg = cfg.forest;
    fcfg.seed = derive_seed(cfg.seed, "forest:" + std::to_string(i));
    a.predictors.push_back(train_factor_predictor(train_raw.features, a.clusterings.back(), fcfg));
    a.importances.push_back(importance(a.predictors.back()));
  }
  a.meta = build_meta_matrix(a.clusterings);
  a.stage = 2;
  a.tree = {};
  a.evaluation = nullptr;
  a.validate();
  print_factor_summary(a, log);
  a.save(artifact_path);
  return a;
}

json evaluation_report(const PipelineArtifact& a, const Dataset& raw, SplitPart part) {
  const Dataset data = select_part(a, raw, part);
  const EvaluationReport r = evaluate(a.tree, a.predictors, a.model, a.scaler, data);
  json j;
  j["split"] = part == SplitPart::Train ? "train" : part == SplitPart::Test ? "test" : "all";
  j["num_samples"] = r.num_samples;
  j["network_accuracy"] = r.network_accuracy;
  j["surrogate_accuracy"] = r.surrogate_accuracy;
  j["fidelity"] = r.fidelity;

  // predictor vs activation-space clustering agreement per factor
  const ActivationMatrix am = extract_activations(a.model, a.scaler.apply(data.features), data.sample_ids, a.partition.source);
  if (am.neuron_ids != a.partition.neuron_ids) {
    j["centroid_agreement"] = nullptr;
  } else {
    std::vector<double> agreement;
    std::vector<double> row(data.dim());
    for (std::size_t k = 0; k < a.partition.num_factors; ++k) {
      const ActivationMatrix block = factor_activations(am, a.partition, k);
      std::size_t hits = 0;
      std::vector<double> col(block.num_neurons());
      for (std::size_t s = 0; s < data.size(); ++s) {
        for (std::size_t jn = 0; jn < col.size(); ++jn) {
          col[jn] = block.values(static_cast<Eigen::Index>(jn), static_cast<Eigen::Index>(s));
        }
        for (std::size_t f = 0; f < row.size(); ++f) {
          row[f] = data.features(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(f));
        }
        hits += assign_by_centroid(col, a.clusterings[k]) == a.predictors[k].predict(row);
      }
      agreement.push_back(data.size() ? static_cast<double>(hits) / static_cast<double>(data.size()) : 0.0);
    }
    j["centroid_agreement"] = agreement;
  }
  return j;
}

PipelineArtifact run_surrogate(const fs::path& artifact_path, const std::optional<PipelineConfig>& override_cfg,
                               std::ostream& log) {
  PipelineArtifact a = PipelineArtifact::load(artifact_path);
  if (a.stage < 2) throw ValidationError("artifact is at stage " + std::to_string(a.stage) + "; run factorize first");
  if (override_cfg) a.config = *override_cfg;
  const Dataset raw = load_pipeline_dataset(a);
  const Dataset train_raw = select_part(a, raw, SplitPart::Train);
  a.tree = fit_surrogate(a.meta, train_raw.labels, a.schema.num_classes(), a.config.tree);
  a.stage = 3;
  a.evaluation = json::object();
  a.evaluation["train"] = evaluation_report(a, raw, SplitPart::Train);
  a.evaluation["test"] = evaluation_report(a, raw, SplitPart::Test);
  a.evaluation["tree"] = {{"nodes", a.tree.node_count()}, {"depth", a.tree.depth()}};
  a.validate();
  const auto& t = a.evaluation["test"];
  log << "surrogate tree: " << a.tree.node_count() << " nodes, depth " << a.tree.depth() << '\n';
  log << "test network accuracy " << t["network_accuracy"].get<double>() << '\n';
  log << "test surrogate accuracy " << t["surrogate_accuracy"].get<double>() << '\n';
  log << "test fidelity " << t["fidelity"].get<double>() << '\n';
  a.save(artifact_path);
  return a;
}

TreeViewLayout explain_sample(const PipelineArtifact& a, const Dataset& raw, const std::string& sample_id) {
  const auto idx = raw.find(sample_id);
  if (!idx) throw ValidationError("unknown sample id '" + sample_id + "'");
  std::vector<double> row(raw.dim());
  for (std::size_t j = 0; j < row.size(); ++j) {
    row[j] = raw.features(static_cast<Eigen::Index>(*idx), static_cast<Eigen::Index>(j));
  }
  TreeViewLayout layout = explain_features(a, row, raw.labels[*idx]);
  layout.sample_id = sample_id;
  return layout;
}

TreeViewLayout explain_features(const PipelineArtifact& a, std::span<const double> features,
                                std::optional<int> true_label) {
  if (features.size() != a.schema.num_features()) {
    throw ValidationError("expected " + std::to_string(a.schema.num_features()) + " features, got " +
                          std::to_string(features.size()));
  }
  TreeViewLayout layout = trace_explanation(features, true_label, a.explanation_view(), a.config.render);
  MatrixXd x(1, static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = features[j];
  layout.footer.network_class = predict(a.model, a.scaler.apply(x)).front();
  layout.sample_id = "input";
  return layout;
}

}  // namespace treeview
