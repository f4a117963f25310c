#ifndef TREEVIEW_MLP_HPP
#define TREEVIEW_MLP_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treeview/activations.hpp"
#include "treeview/common.hpp"
#include "treeview/data.hpp"

namespace treeview {

enum class Activation { Rectifier, Softmax };

struct LayerSpec {
  std::size_t width = 0;
  Activation activation = Activation::Rectifier;
};

/// Hidden rectifier layers followed by a softmax head of width `num_classes`.
std::vector<LayerSpec> make_layer_specs(const std::vector<std::size_t>& hidden, std::size_t num_classes);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.0;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
};

struct EpochStats {
  double loss = 0.0;      // mean mini-batch cross-entropy, dropout active
  double accuracy = 0.0;  // training-set accuracy after the epoch, dropout off
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

/// Fully connected network. Layer l maps width_{l-1} -> width_l with
/// weights (width_l x width_{l-1}); the hidden stack produces the
/// representation, the softmax head maps it to class probabilities.
/// Samples travel as columns.
template <typename Scalar>
class MlpT {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  MlpT() = default;
  MlpT(std::size_t input_dim, std::vector<LayerSpec> specs, std::vector<Matrix> weights,
       std::vector<Vector> biases)
      : input_dim_(input_dim),
        specs_(std::move(specs)),
        weights_(std::move(weights)),
        biases_(std::move(biases)) {
    validate();
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_layers() const { return specs_.size(); }
  std::size_t num_hidden() const { return specs_.empty() ? 0 : specs_.size() - 1; }
  std::size_t num_classes() const { return specs_.empty() ? 0 : specs_.back().width; }
  const std::vector<LayerSpec>& layer_specs() const { return specs_; }

  const Matrix& weights(std::size_t l) const { return weights_.at(l); }
  const Vector& biases(std::size_t l) const { return biases_.at(l); }
  Matrix& weights(std::size_t l) { return weights_.at(l); }
  Vector& biases(std::size_t l) { return biases_.at(l); }

  void validate() const {
    if (specs_.empty() || specs_.back().activation != Activation::Softmax) {
      throw ValidationError("network must end in a softmax layer");
    }
    if (weights_.size() != specs_.size() || biases_.size() != specs_.size()) {
      throw ValidationError("parameter count does not match layer count");
    }
    std::size_t fan_in = input_dim_;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      if (specs_[l].width == 0) throw ValidationError("layer " + std::to_string(l) + " has zero width");
      if (l + 1 < specs_.size() && specs_[l].activation == Activation::Softmax) {
        throw ValidationError("softmax is only allowed on the final layer");
      }
      if (static_cast<std::size_t>(weights_[l].rows()) != specs_[l].width ||
          static_cast<std::size_t>(weights_[l].cols()) != fan_in ||
          static_cast<std::size_t>(biases_[l].size()) != specs_[l].width) {
        throw ValidationError("layer " + std::to_string(l) + " parameter shape mismatch");
      }
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
        throw ValidationError("layer " + std::to_string(l) + " has non-finite parameters");
      }
      fan_in = specs_[l].width;
    }
  }

  template <typename Other>
  MlpT<Other> cast() const {
    std::vector<MatrixX<Other>> w;
    std::vector<VectorX<Other>> b;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
      w.push_back(weights_[l].template cast<Other>());
      b.push_back(biases_[l].template cast<Other>());
    }
    return MlpT<Other>(input_dim_, specs_, std::move(w), std::move(b));
  }

 private:
  std::size_t input_dim_ = 0;
  std::vector<LayerSpec> specs_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

using MlpModel = MlpT<double>;

/// Glorot-uniform weights, zero biases.
template <typename Scalar = double>
MlpT<Scalar> init_model(std::size_t input_dim, std::vector<LayerSpec> specs, std::uint64_t seed) {
  if (input_dim == 0) throw ValidationError("input_dim must be >= 1");
  if (specs.empty()) throw ValidationError("at least one layer is required");
  Rng rng(seed);
  std::vector<MatrixX<Scalar>> w;
  std::vector<VectorX<Scalar>> b;
  std::size_t fan_in = input_dim;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const std::size_t fan_out = specs[l].width;
    if (fan_out == 0) throw ValidationError("layer " + std::to_string(l) + " has zero width");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    MatrixX<Scalar> m(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    w.push_back(std::move(m));
    b.push_back(VectorX<Scalar>::Zero(static_cast<Eigen::Index>(fan_out)));
    fan_in = fan_out;
  }
  return MlpT<Scalar>(input_dim, std::move(specs), std::move(w), std::move(b));
}

/// Column-wise softmax, shifted by the column max.
template <typename Derived>
auto softmax_columns(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> p = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else 1/(1-rate).
template <typename Scalar>
MatrixX<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  MatrixX<Scalar> m(rows, cols);
  const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform() < rate ? Scalar(0) : keep;
  }
  return m;
}

template <typename Scalar>
struct ForwardPass {
  std::vector<MatrixX<Scalar>> pre;      // affine outputs per layer
  std::vector<MatrixX<Scalar>> outputs;  // post-activation (and post-mask) per layer; last = probabilities
};

/// Forward pass over columns of `inputs`. `masks`, when given, holds one mask
/// per hidden layer and is multiplied into that layer's rectified output.
template <typename Scalar>
ForwardPass<Scalar> forward(const MlpT<Scalar>& model, const MatrixX<Scalar>& inputs,
                            const std::vector<MatrixX<Scalar>>* masks = nullptr) {
  if (static_cast<std::size_t>(inputs.rows()) != model.input_dim()) {
    throw ValidationError("input has " + std::to_string(inputs.rows()) + " features, model expects " +
                          std::to_string(model.input_dim()));
  }
  ForwardPass<Scalar> fp;
  const MatrixX<Scalar>* prev = &inputs;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    fp.pre.push_back((model.weights(l) * *prev).colwise() + model.biases(l));
    if (l + 1 < model.num_layers()) {
      MatrixX<Scalar> h = fp.pre.back().cwiseMax(Scalar(0));
      if (masks) h = h.cwiseProduct((*masks)[l]);
      fp.outputs.push_back(std::move(h));
    } else {
      fp.outputs.push_back(softmax_columns(fp.pre.back()));
    }
    prev = &fp.outputs.back();
  }
  return fp;
}

template <typename Scalar>
struct Gradients {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;
};

/// Mean cross-entropy over the columns of `inputs`; fills `grad` when non-null.
template <typename Scalar>
Scalar loss_and_gradient(const MlpT<Scalar>& model, const MatrixX<Scalar>& inputs,
                         std::span<const int> labels, Gradients<Scalar>* grad,
                         const std::vector<MatrixX<Scalar>>* masks = nullptr) {
  const auto batch = inputs.cols();
  if (static_cast<std::size_t>(batch) != labels.size()) throw ValidationError("label count mismatch");
  const auto fp = forward(model, inputs, masks);
  const MatrixX<Scalar>& logits = fp.pre.back();
  const MatrixX<Scalar>& probs = fp.outputs.back();

  Scalar loss = 0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const Scalar mx = logits.col(j).maxCoeff();
    const Scalar lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    loss += lse - logits(labels[static_cast<std::size_t>(j)], j);
  }
  loss /= static_cast<Scalar>(batch);
  if (!grad) return loss;

  const std::size_t nl = model.num_layers();
  grad->weights.resize(nl);
  grad->biases.resize(nl);
  MatrixX<Scalar> delta = probs;
  for (Eigen::Index j = 0; j < batch; ++j) delta(labels[static_cast<std::size_t>(j)], j) -= Scalar(1);
  delta /= static_cast<Scalar>(batch);

  for (std::size_t l = nl; l-- > 0;) {
    const MatrixX<Scalar>& below = l == 0 ? inputs : fp.outputs[l - 1];
    grad->weights[l] = delta * below.transpose();
    grad->biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    MatrixX<Scalar> up = model.weights(l).transpose() * delta;
    const MatrixX<Scalar>& pre = fp.pre[l - 1];
    for (Eigen::Index c = 0; c < up.cols(); ++c) {
      for (Eigen::Index r = 0; r < up.rows(); ++r) {
        Scalar d = pre(r, c) > Scalar(0) ? up(r, c) : Scalar(0);
        if (masks) d *= (*masks)[l - 1](r, c);
        up(r, c) = d;
      }
    }
    delta = std::move(up);
  }
  return loss;
}

/// Row-per-sample class probabilities, dropout disabled.
MatrixXd predict_proba(const MlpModel& model, const MatrixXd& features);
std::vector<int> predict(const MlpModel& model, const MatrixXd& features);
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mini-batch gradient descent on cross-entropy with optional momentum and
/// inverted dropout on hidden outputs.
TrainReport train(MlpModel& model, const Dataset& data, const TrainConfig& cfg);

/// Zero-based hidden layer indices; empty selects every hidden layer.
struct LayerSelector {
  std::vector<std::size_t> layers;

  static LayerSelector all() { return {}; }
  /// "all" or a comma-separated index list such as "0,2".
  static LayerSelector parse(const std::string& text);
  std::string str() const;
  std::vector<std::size_t> resolve(const MlpModel& model) const;
};

/// Post-rectifier hidden outputs, rows concatenated in layer order.
ActivationMatrix extract_activations(const MlpModel& model, const Dataset& data,
                                     const LayerSelector& selector = LayerSelector::all());
ActivationMatrix extract_activations(const MlpModel& model, const MatrixXd& features,
                                     const std::vector<std::string>& sample_ids,
                                     const LayerSelector& selector = LayerSelector::all());

}  // namespace treeview

#endif  // TREEVIEW_MLP_HPP
