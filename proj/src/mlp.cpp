#include "treeview/mlp.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace treeview {

std::vector<LayerSpec> make_layer_specs(const std::vector<std::size_t>& hidden, std::size_t num_classes) {
  std::vector<LayerSpec> specs;
  for (std::size_t w : hidden) specs.push_back({w, Activation::Rectifier});
  specs.push_back({num_classes, Activation::Softmax});
  return specs;
}

MatrixXd predict_proba(const MlpModel& model, const MatrixXd& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim()) {
    throw ValidationError("feature width " + std::to_string(features.cols()) +
                          " does not match model input_dim " + std::to_string(model.input_dim()));
  }
  const MatrixXd inputs = features.transpose();
  return forward(model, inputs).outputs.back().transpose();
}

std::vector<int> predict(const MlpModel& model, const MatrixXd& features) {
  const MatrixXd p = predict_proba(model, features);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(i, c) > p(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ValidationError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

TrainReport train(MlpModel& model, const Dataset& data, const TrainConfig& cfg) {
  if (static_cast<std::size_t>(data.features.cols()) != model.input_dim()) {
    throw ValidationError("training data width does not match model input_dim");
  }
  const std::size_t t = data.size();
  const int c = static_cast<int>(model.num_classes());
  for (int y : data.labels) {
    if (y < 0 || y >= c) throw ValidationError("label " + std::to_string(y) + " outside model classes");
  }
  if (cfg.epochs > 0 && (cfg.batch_size == 0 || cfg.batch_size > t)) {
    throw ValidationError("batch_size must lie in [1, T]");
  }
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw ValidationError("dropout_rate must lie in [0,1)");
  }

  Rng rng(cfg.seed);
  const MatrixXd all_inputs = data.features.transpose();
  std::vector<MatrixXd> velocity_w, velocity_b;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    velocity_w.push_back(MatrixXd::Zero(model.weights(l).rows(), model.weights(l).cols()));
    velocity_b.push_back(VectorXd::Zero(model.biases(l).size()));
  }

  TrainReport report;
  std::vector<std::size_t> order(t);
  for (std::size_t i = 0; i < t; ++i) order[i] = i;
  Gradients<double> grad;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < t; start += cfg.batch_size) {
      const std::size_t end = std::min(t, start + cfg.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      MatrixXd x(all_inputs.rows(), b);
      std::vector<int> y(static_cast<std::size_t>(b));
      for (Eigen::Index j = 0; j < b; ++j) {
        const std::size_t idx = order[start + static_cast<std::size_t>(j)];
        x.col(j) = all_inputs.col(static_cast<Eigen::Index>(idx));
        y[static_cast<std::size_t>(j)] = data.labels[idx];
      }
      std::vector<MatrixXd> masks;
      if (cfg.dropout_rate > 0.0) {
        for (std::size_t l = 0; l < model.num_hidden(); ++l) {
          masks.push_back(dropout_mask<double>(model.weights(l).rows(), b, cfg.dropout_rate, rng));
        }
      }
      const double loss = loss_and_gradient(model, x, y, &grad, masks.empty() ? nullptr : &masks);
      if (!std::isfinite(loss)) {
        throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches));
      }
      for (std::size_t l = 0; l < model.num_layers(); ++l) {
        velocity_w[l] = cfg.momentum * velocity_w[l] - cfg.learning_rate * grad.weights[l];
        velocity_b[l] = cfg.momentum * velocity_b[l] - cfg.learning_rate * grad.biases[l];
        model.weights(l) += velocity_w[l];
        model.biases(l) += velocity_b[l];
      }
      loss_sum += loss;
      ++batches;
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(batches);
    stats.accuracy = accuracy(predict(model, data.features), data.labels);
    report.epochs.push_back(stats);
  }
  return report;
}

LayerSelector LayerSelector::parse(const std::string& text) {
  const auto t = trim(text);
  if (t == "all" || t.empty()) return all();
  LayerSelector sel;
  for (const auto& tok : split_line(t, ',')) {
    const auto part = trim(tok);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || part.empty()) {
      throw ValidationError("malformed layer selector '" + text + "'");
    }
    sel.layers.push_back(v);
  }
  return sel;
}

std::string LayerSelector::str() const {
  if (layers.empty()) return "all";
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) s += (i ? "," : "") + std::to_string(layers[i]);
  return s;
}

std::vector<std::size_t> LayerSelector::resolve(const MlpModel& model) const {
  std::vector<std::size_t> out;
  if (layers.empty()) {
    for (std::size_t l = 0; l < model.num_hidden(); ++l) out.push_back(l);
    if (out.empty()) throw ValidationError("model has no hidden layers");
    return out;
  }
  std::set<std::size_t> seen;
  for (std::size_t l : layers) {
    if (l == model.num_hidden()) {
      throw ValidationError("layer " + std::to_string(l) + " is the output layer, not a hidden layer");
    }
    if (l > model.num_hidden()) throw ValidationError("layer " + std::to_string(l) + " does not exist");
    if (seen.insert(l).second) out.push_back(l);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ActivationMatrix extract_activations(const MlpModel& model, const MatrixXd& features,
                                     const std::vector<std::string>& sample_ids,
                                     const LayerSelector& selector) {
  if (static_cast<std::size_t>(features.rows()) != sample_ids.size()) {
    throw ValidationError("sample id count does not match feature rows");
  }
  const auto layers = selector.resolve(model);
  const MatrixXd inputs = features.transpose();
  const auto fp = forward(model, inputs);
  Eigen::Index n = 0;
  for (std::size_t l : layers) n += fp.outputs[l].rows();
  ActivationMatrix am;
  am.values.resize(n, inputs.cols());
  am.sample_ids = sample_ids;
  Eigen::Index row = 0;
  for (std::size_t l : layers) {
    const auto& h = fp.outputs[l];
    am.values.middleRows(row, h.rows()) = h;
    for (Eigen::Index u = 0; u < h.rows(); ++u) am.neuron_ids.push_back({l, static_cast<std::size_t>(u)});
    row += h.rows();
  }
  return am;
}

ActivationMatrix extract_activations(const MlpModel& model, const Dataset& data,
                                     const LayerSelector& selector) {
  return extract_activations(model, data.features, data.sample_ids, selector);
}

}  // namespace treeview
