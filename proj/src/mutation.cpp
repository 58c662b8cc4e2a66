#include "nnmut/mutation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <utility>

#include "nnmut/parallel.hpp"
#include "nnmut/rng.hpp"

namespace nnmut {

std::string_view to_string(ModelOperator op) {
  switch (op) {
    case ModelOperator::GF: return "GF";
    case ModelOperator::WS: return "WS";
    case ModelOperator::NS: return "NS";
    case ModelOperator::NAI: return "NAI";
  }
  return "unknown";
}

ModelOperator model_operator_from_string(std::string_view name) {
  for (auto op : kAllModelOperators)
    if (to_string(op) == name) return op;
  throw ConfigError("unknown model mutation operator '" + std::string(name) + "'");
}

std::string_view to_string(MutationLevel level) { return level == MutationLevel::weight ? "weight" : "neuron"; }

MutationLevel mutation_level_from_string(std::string_view name) {
  if (name == "weight") return MutationLevel::weight;
  if (name == "neuron") return MutationLevel::neuron;
  throw ConfigError("unknown mutation level '" + std::string(name) + "'");
}

MutationLevel level_of(ModelOperator op) {
  return op == ModelOperator::GF ? MutationLevel::weight : MutationLevel::neuron;
}

void ModelMutationSpec::validate() const {
  if (level != level_of(kind))
    throw ConfigError(std::string(to_string(kind)) + " operates at " + std::string(to_string(level_of(kind))) +
                      " level");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (kind == ModelOperator::GF && (!(sigma > 0.0) || !std::isfinite(sigma)))
    throw ConfigError("GF sigma must be positive");
}

namespace {

std::size_t selection_size(double gamma, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-9));
}

struct NeuronRef {
  std::size_t layer;
  std::size_t neuron;
};

std::vector<NeuronRef> hidden_neurons(const Network& network) {
  std::vector<NeuronRef> out;
  const auto& layers = network.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    for (std::size_t n = 0; n < layers[l].out; ++n) out.push_back({l, n});
  return out;
}

double layer_stddev(const Layer& layer) {
  const auto n = static_cast<double>(layer.weights.size());
  double mean = 0.0;
  for (double w : layer.weights) mean += w;
  mean /= n;
  double var = 0.0;
  for (double w : layer.weights) var += (w - mean) * (w - mean);
  return std::sqrt(var / n);
}

[[noreturn]] void empty_mutation() { throw ConfigError("empty mutation: gamma selects zero elements"); }

void gaussian_fuzz(Network& net, const ModelMutationSpec& spec) {
  auto& layers = net.mutable_layers();
  const auto total = net.weight_count();
  const auto k = selection_size(spec.gamma, total);
  if (k == 0) empty_mutation();

  std::vector<double> scale;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& layer : layers) {
    const double s = layer_stddev(layer);
    scale.push_back(s > 0.0 ? s : 1.0);
    offsets.push_back(offset);
    offset += layer.weights.size();
  }
  const Rng base(spec.seed);
  const auto picked = base.split("gf-select").sample_without_replacement(total, k);
  auto noise = base.split("gf-noise");
  for (auto flat : picked) {
    const auto l = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    layers[l].weights[flat - offsets[l]] += spec.sigma * scale[l] * noise.normal();
  }
}

std::vector<NeuronRef> pick_neurons(const Network& net, const ModelMutationSpec& spec, std::string_view stream) {
  const auto neurons = hidden_neurons(net);
  if (neurons.empty())
    throw ConfigError(std::string(to_string(spec.kind)) + " needs at least one hidden neuron");
  const auto k = selection_size(spec.gamma, neurons.size());
  if (k == 0) empty_mutation();
  std::vector<NeuronRef> out;
  for (auto i : Rng(spec.seed).split(stream).sample_without_replacement(neurons.size(), k))
    out.push_back(neurons[i]);
  return out;
}

void weight_shuffle(Network& net, const ModelMutationSpec& spec) {
  auto& layers = net.mutable_layers();
  const auto shuffle_rng = Rng(spec.seed).split("ws-perm");
  for (const auto& [l, n] : pick_neurons(net, spec, "ws-select")) {
    auto row = layers[l].incoming(n);
    std::vector<double> original(row.begin(), row.end());
    const auto perm = shuffle_rng.split(l).split(n).permutation(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = original[perm[c]];
  }
}

void neuron_switch(Network& net, const ModelMutationSpec& spec) {
  auto& layers = net.mutable_layers();
  const auto neurons = hidden_neurons(net);
  const Rng base(spec.seed);
  std::vector<std::pair<NeuronRef, NeuronRef>> pairs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto width = layers[l].out;
    if (width < 2) continue;
    const auto perm = base.split("ns-layer").split(l).permutation(width);
    for (std::size_t j = 0; j + 1 < width; j += 2) pairs.push_back({{l, perm[j]}, {l, perm[j + 1]}});
  }
  if (pairs.empty()) throw ConfigError("NS needs a hidden layer with at least two neurons");
  const auto k = std::min(selection_size(spec.gamma / 2.0, neurons.size()), pairs.size());
  if (k == 0) empty_mutation();
  for (auto i : base.split("ns-select").sample_without_replacement(pairs.size(), k)) {
    const auto& [a, b] = pairs[i];
    auto& layer = layers[a.layer];
    std::swap_ranges(layer.incoming(a.neuron).begin(), layer.incoming(a.neuron).end(),
                     layer.incoming(b.neuron).begin());
    std::swap(layer.biases[a.neuron], layer.biases[b.neuron]);
  }
}

void activation_inverse(Network& net, const ModelMutationSpec& spec) {
  auto& layers = net.mutable_layers();
  for (const auto& [l, n] : pick_neurons(net, spec, "nai-select")) {
    for (auto& w : layers[l].incoming(n)) w = -w;
    layers[l].biases[n] = -layers[l].biases[n];
  }
}

}  // namespace

Network apply_model_operator(const Network& network, const ModelMutationSpec& spec) {
  spec.validate();
  Network out = network;
  switch (spec.kind) {
    case ModelOperator::GF: gaussian_fuzz(out, spec); break;
    case ModelOperator::WS: weight_shuffle(out, spec); break;
    case ModelOperator::NS: neuron_switch(out, spec); break;
    case ModelOperator::NAI: activation_inverse(out, spec); break;
  }
  return out;
}

std::string_view to_string(ProgramMutationKind kind) {
  switch (kind) {
    case ProgramMutationKind::layer_removal: return "layer_removal";
    case ProgramMutationKind::layer_addition: return "layer_addition";
    case ProgramMutationKind::activation_change: return "activation_change";
    case ProgramMutationKind::init_skew: return "init_skew";
    case ProgramMutationKind::learning_rate_scale: return "learning_rate_scale";
  }
  return "unknown";
}

ProgramMutationKind program_mutation_kind_from_string(std::string_view name) {
  for (auto kind : kAllProgramMutationKinds)
    if (to_string(kind) == name) return kind;
  throw ConfigError("unknown program mutation '" + std::string(name) + "'");
}

TrainingSpec apply_program_operator(const TrainingSpec& spec, const ProgramMutationSpec& mutation) {
  spec.validate();
  TrainingSpec out = spec;
  const auto hidden = spec.hidden_sizes.size();
  auto check_index = [&](std::size_t limit) {
    if (mutation.layer_index >= limit)
      throw ConfigError(std::string(to_string(mutation.kind)) + ": layer index " +
                        std::to_string(mutation.layer_index) + " out of range");
  };
  auto check_factor = [&] {
    if (!(mutation.factor > 0.0) || !std::isfinite(mutation.factor))
      throw ConfigError(std::string(to_string(mutation.kind)) + ": scale factor must be positive");
  };
  switch (mutation.kind) {
    case ProgramMutationKind::layer_removal:
      if (hidden == 0) throw ConfigError("layer_removal: training spec has no hidden layers");
      check_index(hidden);
      out.hidden_sizes.erase(out.hidden_sizes.begin() + static_cast<std::ptrdiff_t>(mutation.layer_index));
      out.activations.erase(out.activations.begin() + static_cast<std::ptrdiff_t>(mutation.layer_index));
      break;
    case ProgramMutationKind::layer_addition:
      check_index(hidden + 1);
      if (mutation.width == 0) throw ConfigError("layer_addition: width must be positive");
      if (mutation.activation == Activation::softmax)
        throw ConfigError("layer_addition: softmax is not a hidden activation");
      out.hidden_sizes.insert(out.hidden_sizes.begin() + static_cast<std::ptrdiff_t>(mutation.layer_index),
                              mutation.width);
      out.activations.insert(out.activations.begin() + static_cast<std::ptrdiff_t>(mutation.layer_index),
                             mutation.activation);
      break;
    case ProgramMutationKind::activation_change:
      check_index(hidden);
      if (mutation.activation == Activation::softmax)
        throw ConfigError("activation_change: softmax is not a hidden activation");
      out.activations[mutation.layer_index] = mutation.activation;
      break;
    case ProgramMutationKind::init_skew:
      check_factor();
      out.init_scale *= mutation.factor;
      break;
    case ProgramMutationKind::learning_rate_scale:
      check_factor();
      out.learning_rate *= mutation.factor;
      break;
  }
  out.validate();
  return out;
}

std::string_view to_string(MutantOrigin origin) {
  switch (origin) {
    case MutantOrigin::model_level: return "model_level";
    case MutantOrigin::source_level_data: return "source_level_data";
    case MutantOrigin::source_level_program: return "source_level_program";
  }
  return "unknown";
}

MutantOrigin mutant_origin_from_string(std::string_view name) {
  if (name == "model_level") return MutantOrigin::model_level;
  if (name == "source_level_data") return MutantOrigin::source_level_data;
  if (name == "source_level_program") return MutantOrigin::source_level_program;
  throw DataError("unknown mutant origin '" + std::string(name) + "'");
}

std::string operator_name(const OperatorSpec& op) {
  return std::visit([](const auto& spec) { return std::string(to_string(spec.kind)); }, op);
}

MutantRecord build_source_mutant(const TrainingSpec& base_spec, const Dataset& data, const SourceMutation& mutation,
                                 const SourceMutantOptions& options) {
  MutantRecord record;
  record.id = options.id;
  if (const auto* program = std::get_if<ProgramMutationSpec>(&mutation)) {
    record.origin = MutantOrigin::source_level_program;
    record.op = *program;
    record.network = train(apply_program_operator(base_spec, *program), data);
  } else {
    const auto& spec = std::get<DataMutationSpec>(mutation);
    record.origin = MutantOrigin::source_level_data;
    record.op = spec;
    record.network = train(base_spec, mutate_data(data, spec));
  }
  record.accuracy = accuracy(record.network, data, options.gate_split);
  record.retained = !options.baseline_accuracy ||
                    record.accuracy >= options.quality_ratio * *options.baseline_accuracy;
  return record;
}

void PoolConfig::validate() const {
  if (op_mix.empty()) throw ConfigError("pool op_mix is empty");
  for (const auto& spec : op_mix) spec.validate();
  if (count == 0) throw ConfigError("pool count must be at least 1");
  if (!(quality_ratio > 0.0 && quality_ratio <= 1.0)) throw ConfigError("quality ratio must lie in (0, 1]");
  if (budget() < count) throw ConfigError("attempt budget is smaller than count");
}

PoolBudgetExhausted::PoolBudgetExhausted(PoolResult partial)
    : Error(ErrorCode::budget, "attempt budget exhausted after " + std::to_string(partial.stats.attempts) +
                                   " candidates with " + std::to_string(partial.pool.size()) + " retained"),
      partial_(std::move(partial)) {}

namespace {

struct Candidate {
  ModelMutationSpec spec;
  Network network;
  double accuracy = 0.0;
};

Candidate make_candidate(const Network& network, const Dataset& data, const PoolConfig& config, std::size_t i) {
  Candidate c;
  c.spec = config.op_mix[i % config.op_mix.size()];
  c.spec.seed = config.base_seed + i;
  c.network = apply_model_operator(network, c.spec);
  c.accuracy = accuracy(c.network, data, config.gate_split);
  return c;
}

PoolResult start_pool(const Network& network, const Dataset& data, const PoolConfig& config) {
  config.validate();
  PoolResult result;
  result.stats.original_accuracy = accuracy(network, data, config.gate_split);
  if (!(result.stats.original_accuracy > 0.0))
    throw DataError("original model has zero accuracy on the gate split");
  result.stats.threshold = config.quality_ratio * result.stats.original_accuracy;
  for (const auto& spec : config.op_mix) result.stats.per_operator[std::string(to_string(spec.kind))];
  return result;
}

// Returns true once the pool is full.
bool admit(PoolResult& result, const PoolConfig& config, std::size_t id, Candidate&& c) {
  auto& stats = result.stats;
  auto& op = stats.per_operator[std::string(to_string(c.spec.kind))];
  ++stats.attempts;
  ++op.attempted;
  if (c.accuracy >= stats.threshold) {
    ++op.retained;
    result.pool.push_back({id, MutantOrigin::model_level, c.spec, std::move(c.network), c.accuracy, true});
  } else {
    ++op.rejected;
    stats.rejected.push_back({id, c.spec.kind, c.accuracy});
  }
  return result.pool.size() == config.count;
}

}  // namespace

PoolResult generate_pool(const Network& network, const Dataset& data, const PoolConfig& config) {
  auto result = start_pool(network, data, config);
  const auto budget = config.budget();
  const auto threads = static_cast<std::size_t>(max_threads());
  std::vector<Candidate> batch;
  std::size_t start = 0;
  while (start < budget) {
    // Chunk size never changes which candidates are accepted, only how many
    // are computed speculatively.
    const auto needed = config.count - result.pool.size();
    const auto size = std::min(budget - start, std::max(needed, 4 * threads));
    batch.assign(size, Candidate{});
    std::vector<std::exception_ptr> failures(size);
    const auto n = static_cast<std::ptrdiff_t>(size);
    NNMUT_OMP_PRAGMA("omp parallel for schedule(dynamic)")
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      const auto idx = static_cast<std::size_t>(k);
      try {
        batch[idx] = make_candidate(network, data, config, start + idx);
      } catch (...) {
        failures[idx] = std::current_exception();
      }
    }
    for (std::size_t k = 0; k < size; ++k) {
      if (failures[k]) std::rethrow_exception(failures[k]);
      if (admit(result, config, start + k, std::move(batch[k]))) return result;
    }
    start += size;
  }
  throw PoolBudgetExhausted(std::move(result));
}

namespace serial {

PoolResult generate_pool(const Network& network, const Dataset& data, const PoolConfig& config) {
  auto result = start_pool(network, data, config);
  for (std::size_t i = 0; i < config.budget(); ++i)
    if (admit(result, config, i, make_candidate(network, data, config, i))) return result;
  throw PoolBudgetExhausted(std::move(result));
}

}  // namespace serial

}  // namespace nnmut
