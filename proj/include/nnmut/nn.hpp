#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nnmut/dataset.hpp"

namespace nnmut {

enum class Activation { relu, tanh, sigmoid, identity, softmax };

std::string_view to_string(Activation activation);
Activation activation_from_string(std::string_view name);

/// Dense layer computing act(W x + b). W is out x in, row-major.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> biases;
  Activation activation = Activation::identity;

  Layer() = default;
  Layer(std::size_t in_dim, std::size_t out_dim, Activation act)
      : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), biases(out_dim, 0.0), activation(act) {}

  [[nodiscard]] double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
  [[nodiscard]] double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
  [[nodiscard]] std::span<double> incoming(std::size_t neuron) { return {weights.data() + neuron * in, in}; }
  [[nodiscard]] std::span<const double> incoming(std::size_t neuron) const {
    return {weights.data() + neuron * in, in};
  }

  bool operator==(const Layer&) const = default;
};

/// Feedforward classifier. The last layer is always a softmax output layer;
/// every other layer is a hidden layer with a pointwise activation.
class Network {
 public:
  Network() = default;
  /// Validates shapes, activations and finiteness; throws DataError.
  Network(std::size_t input_dim, std::size_t class_count, std::vector<Layer> layers);

  [[nodiscard]] std::size_t input_dim() const { return input_dim_; }
  [[nodiscard]] std::size_t class_count() const { return class_count_; }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
  [[nodiscard]] std::size_t hidden_layer_count() const { return layers_.empty() ? 0 : layers_.size() - 1; }
  [[nodiscard]] std::size_t weight_count() const;
  [[nodiscard]] std::size_t parameter_count() const;

  /// In-place parameter access for shape-preserving edits (mutation
  /// operators, SGD). Callers must not change any layer's shape.
  [[nodiscard]] std::vector<Layer>& mutable_layers() { return layers_; }

  [[nodiscard]] bool same_architecture(const Network& other) const;
  /// Throws DataError if any invariant is violated.
  void validate() const;

  bool operator==(const Network&) const = default;

 private:
  std::size_t input_dim_ = 0;
  std::size_t class_count_ = 0;
  std::vector<Layer> layers_;
};

struct LabeledSample {
  std::span<const double> input;
  std::size_t label = 0;
};

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> biases;
};

using Gradients = std::vector<LayerGradient>;

/// Class probabilities; sums to one.
std::vector<double> forward(const Network& network, std::span<const double> input);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

/// argmax of forward(). Kill and LCR decisions compare these labels, so the
/// lowest-index tie-break is part of the contract.
std::size_t predict_label(const Network& network, std::span<const double> input);

/// Mean cross-entropy over the batch.
double loss(const Network& network, std::span<const LabeledSample> batch);

/// Gradient of mean cross-entropy with respect to every weight and bias.
Gradients gradient(const Network& network, std::span<const LabeledSample> batch);

/// Gradient of the single-sample cross-entropy with respect to the input.
std::vector<double> input_gradient(const Network& network, std::span<const double> input, std::size_t label);

struct TrainingSpec {
  std::vector<std::size_t> hidden_sizes;
  std::vector<Activation> activations;
  double learning_rate = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double init_scale = 0.5;

  /// Throws ConfigError.
  void validate() const;

  bool operator==(const TrainingSpec&) const = default;
};

/// Seeded initialization: weights and biases uniform in [-init_scale, init_scale].
Network initialize(const TrainingSpec& spec, std::size_t input_dim, std::size_t class_count);

/// Mini-batch SGD on the train split. Each epoch visits the train rows in one
/// seeded shuffled order. A pure function of (spec, data).
Network train(const TrainingSpec& spec, const Dataset& data);

/// Fraction of rows in `split` whose predicted label matches the ground truth.
double accuracy(const Network& network, const Dataset& data, Split split);

}  // namespace nnmut
