#include "nnmut/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnmut/error.hpp"
#include "nnmut/rng.hpp"

namespace nnmut {

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  if (name == "softmax") return Activation::softmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Network::Network(std::size_t input_dim, std::size_t class_count, std::vector<Layer> layers)
    : input_dim_(input_dim), class_count_(class_count), layers_(std::move(layers)) {
  validate();
}

void Network::validate() const {
  if (input_dim_ == 0) throw DataError("network input_dim must be positive");
  if (class_count_ < 2) throw DataError("network class_count must be at least 2");
  if (layers_.empty()) throw DataError("network has no layers");
  std::size_t width = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    const auto where = "layer " + std::to_string(i) + ": ";
    if (layer.in != width) throw DataError(where + "input width does not match previous layer");
    if (layer.out == 0) throw DataError(where + "zero output width");
    if (layer.weights.size() != layer.in * layer.out) throw DataError(where + "weight matrix size mismatch");
    if (layer.biases.size() != layer.out) throw DataError(where + "bias vector size mismatch");
    const bool last = i + 1 == layers_.size();
    if (last && layer.activation != Activation::softmax) throw DataError(where + "output layer must be softmax");
    if (!last && layer.activation == Activation::softmax)
      throw DataError(where + "softmax is only allowed on the output layer");
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.biases.begin(), layer.biases.end(), finite))
      throw DataError(where + "non-finite parameter");
    width = layer.out;
  }
  if (width != class_count_) throw DataError("output width does not match class_count");
}

std::size_t Network::weight_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size();
  return n;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.biases.size();
  return n;
}

bool Network::same_architecture(const Network& other) const {
  if (input_dim_ != other.input_dim_ || class_count_ != other.class_count_) return false;
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.in != b.in || a.out != b.out || a.activation != b.activation) return false;
  }
  return true;
}

namespace {

double activate(Activation act, double z) {
  switch (act) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::identity:
    case Activation::softmax: return z;
  }
  return z;
}

// Derivative expressed through the pre-activation z and activation a.
double activate_derivative(Activation act, double z, double a) {
  switch (act) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - a * a;
    case Activation::sigmoid: return a * (1.0 - a);
    case Activation::identity:
    case Activation::softmax: return 1.0;
  }
  return 1.0;
}

void softmax_inplace(std::vector<double>& z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// Activations of every layer; acts[0] is the input, acts.back() the logits.
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
};

Trace run(const Network& network, std::span<const double> input) {
  if (input.size() != network.input_dim())
    throw DataError("input has " + std::to_string(input.size()) + " features, network expects " +
                    std::to_string(network.input_dim()));
  Trace trace;
  const auto& layers = network.layers();
  trace.acts.emplace_back(input.begin(), input.end());
  for (const auto& layer : layers) {
    const auto& x = trace.acts.back();
    std::vector<double> z(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
      double s = layer.biases[r];
      const double* row = layer.weights.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) s += row[c] * x[c];
      z[r] = s;
    }
    std::vector<double> a(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) a[r] = activate(layer.activation, z[r]);
    trace.pre.push_back(std::move(z));
    trace.acts.push_back(std::move(a));
  }
  return trace;
}

double log_sum_exp(std::span<const double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

// dL/dz for the output layer followed by backpropagation. Returns the
// gradient with respect to the network input; accumulates parameter
// gradients scaled by `scale` when `grads` is non-null.
std::vector<double> backprop(const Network& network, const Trace& trace, std::size_t label, double scale,
                             Gradients* grads) {
  const auto& layers = network.layers();
  std::vector<double> delta = trace.acts.back();
  softmax_inplace(delta);
  delta[label] -= 1.0;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const auto& x = trace.acts[li];
    if (grads != nullptr) {
      auto& g = (*grads)[li];
      for (std::size_t r = 0; r < layer.out; ++r) {
        const double d = delta[r] * scale;
        g.biases[r] += d;
        double* grow = g.weights.data() + r * layer.in;
        for (std::size_t c = 0; c < layer.in; ++c) grow[c] += d * x[c];
      }
    }
    std::vector<double> upstream(layer.in, 0.0);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const double* row = layer.weights.data() + r * layer.in;
      for (std::size_t c = 0; c < layer.in; ++c) upstream[c] += row[c] * delta[r];
    }
    if (li > 0) {
      const auto& below = layers[li - 1];
      for (std::size_t c = 0; c < layer.in; ++c)
        upstream[c] *= activate_derivative(below.activation, trace.pre[li - 1][c], trace.acts[li][c]);
    }
    delta = std::move(upstream);
  }
  return delta;
}

void check_label(const Network& network, std::size_t label) {
  if (label >= network.class_count())
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(network.class_count()) +
                    ")");
}

}  // namespace

std::vector<double> forward(const Network& network, std::span<const double> input) {
  auto trace = run(network, input);
  auto out = std::move(trace.acts.back());
  softmax_inplace(out);
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t predict_label(const Network& network, std::span<const double> input) {
  return argmax(forward(network, input));
}

double loss(const Network& network, std::span<const LabeledSample> batch) {
  if (batch.empty()) throw DataError("empty batch");
  double total = 0.0;
  for (const auto& sample : batch) {
    check_label(network, sample.label);
    const auto trace = run(network, sample.input);
    const auto& logits = trace.acts.back();
    total += log_sum_exp(logits) - logits[sample.label];
  }
  return total / static_cast<double>(batch.size());
}

Gradients gradient(const Network& network, std::span<const LabeledSample> batch) {
  if (batch.empty()) throw DataError("empty batch");
  Gradients grads;
  for (const auto& layer : network.layers())
    grads.push_back({std::vector<double>(layer.weights.size(), 0.0), std::vector<double>(layer.out, 0.0)});
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    check_label(network, sample.label);
    const auto trace = run(network, sample.input);
    backprop(network, trace, sample.label, scale, &grads);
  }
  return grads;
}

std::vector<double> input_gradient(const Network& network, std::span<const double> input, std::size_t label) {
  check_label(network, label);
  const auto trace = run(network, input);
  return backprop(network, trace, label, 1.0, nullptr);
}

void TrainingSpec::validate() const {
  if (activations.size() != hidden_sizes.size())
    throw ConfigError("training spec: activations length must equal hidden_sizes length");
  for (auto h : hidden_sizes)
    if (h == 0) throw ConfigError("training spec: hidden sizes must be positive");
  for (auto a : activations)
    if (a == Activation::softmax) throw ConfigError("training spec: softmax is not a hidden activation");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("training spec: learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("training spec: batch_size must be positive");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale))
    throw ConfigError("training spec: init_scale must be positive");
}

Network initialize(const TrainingSpec& spec, std::size_t input_dim, std::size_t class_count) {
  spec.validate();
  auto rng = Rng(spec.seed).split("init");
  std::vector<Layer> layers;
  std::size_t width = input_dim;
  for (std::size_t i = 0; i <= spec.hidden_sizes.size(); ++i) {
    const bool last = i == spec.hidden_sizes.size();
    const std::size_t out = last ? class_count : spec.hidden_sizes[i];
    Layer layer(width, out, last ? Activation::softmax : spec.activations[i]);
    for (auto& w : layer.weights) w = rng.uniform(-spec.init_scale, spec.init_scale);
    for (auto& b : layer.biases) b = rng.uniform(-spec.init_scale, spec.init_scale);
    layers.push_back(std::move(layer));
    width = out;
  }
  return Network(input_dim, class_count, std::move(layers));
}

Network train(const TrainingSpec& spec, const Dataset& data) {
  spec.validate();
  const auto rows = data.indices(Split::train);
  if (rows.empty()) throw DataError("train split is empty");
  auto network = initialize(spec, data.dim, data.class_count);
  const auto epoch_rng = Rng(spec.seed).split("epoch");

  std::vector<LabeledSample> batch;
  batch.reserve(spec.batch_size);
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    auto rng = epoch_rng.split(epoch);
    const auto order = rng.permutation(rows.size());
    for (std::size_t start = 0; start < order.size(); start += spec.batch_size) {
      batch.clear();
      const auto stop = std::min(order.size(), start + spec.batch_size);
      for (std::size_t k = start; k < stop; ++k) {
        const auto idx = rows[order[k]];
        batch.push_back({data.row(idx), data.labels[idx]});
      }
      const auto grads = gradient(network, batch);
      auto& layers = network.mutable_layers();
      for (std::size_t li = 0; li < layers.size(); ++li) {
        for (std::size_t j = 0; j < layers[li].weights.size(); ++j)
          layers[li].weights[j] -= spec.learning_rate * grads[li].weights[j];
        for (std::size_t j = 0; j < layers[li].biases.size(); ++j)
          layers[li].biases[j] -= spec.learning_rate * grads[li].biases[j];
      }
    }
  }
  network.validate();
  return network;
}

double accuracy(const Network& network, const Dataset& data, Split split) {
  const auto rows = data.indices(split);
  if (rows.empty()) throw DataError("split '" + std::string(to_string(split)) + "' is empty");
  std::size_t correct = 0;
  for (auto idx : rows)
    if (predict_label(network, data.row(idx)) == data.labels[idx]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace nnmut
