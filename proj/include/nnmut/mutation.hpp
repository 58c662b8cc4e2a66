#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nnmut/data.hpp"
#include "nnmut/error.hpp"
#include "nnmut/nn.hpp"

namespace nnmut {

// ---------------------------------------------------------------------------
// Model-level operators
// ---------------------------------------------------------------------------

/// Gaussian fuzzing, weight shuffling, neuron switch, neuron activation inverse.
enum class ModelOperator { GF, WS, NS, NAI };
enum class MutationLevel { weight, neuron };

inline constexpr std::array<ModelOperator, 4> kAllModelOperators = {ModelOperator::GF, ModelOperator::WS,
                                                                    ModelOperator::NS, ModelOperator::NAI};

std::string_view to_string(ModelOperator op);
ModelOperator model_operator_from_string(std::string_view name);
std::string_view to_string(MutationLevel level);
MutationLevel mutation_level_from_string(std::string_view name);
/// GF acts on weights, the others on neurons.
MutationLevel level_of(ModelOperator op);

struct ModelMutationSpec {
  ModelOperator kind = ModelOperator::GF;
  MutationLevel level = MutationLevel::weight;
  double gamma = 0.05;  // fraction of weights (GF) or hidden neurons targeted
  double sigma = 1.0;   // GF only, in units of the layer's weight std-dev
  std::uint64_t seed = 0;

  static ModelMutationSpec make(ModelOperator kind, double gamma, double sigma = 1.0, std::uint64_t seed = 0) {
    return {kind, level_of(kind), gamma, sigma, seed};
  }

  /// Throws ConfigError. gamma = 0 is reported by apply_model_operator as an
  /// empty mutation rather than here.
  void validate() const;
  bool operator==(const ModelMutationSpec&) const = default;
};

/// Returns a mutated copy with the same architecture.
///
///  GF  - ceil(gamma * W) weights chosen among all W weights each receive
///        N(0, (sigma * s)^2) noise, s the std-dev of that weight's layer
///        (1 when the layer is constant).
///  WS  - ceil(gamma * N) hidden neurons get their incoming weight row
///        permuted; the bias stays.
///  NS  - ceil(gamma * N / 2) disjoint pairs of neurons sharing a hidden layer
///        swap incoming rows and biases. Outgoing weights stay, otherwise the
///        swap would be a no-op.
///  NAI - ceil(gamma * N) hidden neurons have incoming row and bias negated,
///        flipping the sign of their pre-activation.
///
/// N counts hidden neurons only. Element selection depends only on the
/// architecture and the seed, so NS and NAI are involutions.
Network apply_model_operator(const Network& network, const ModelMutationSpec& spec);

// ---------------------------------------------------------------------------
// Source-level (training program) operators
// ---------------------------------------------------------------------------

enum class ProgramMutationKind { layer_removal, layer_addition, activation_change, init_skew, learning_rate_scale };

inline constexpr std::array<ProgramMutationKind, 5> kAllProgramMutationKinds = {
    ProgramMutationKind::layer_removal, ProgramMutationKind::layer_addition, ProgramMutationKind::activation_change,
    ProgramMutationKind::init_skew, ProgramMutationKind::learning_rate_scale};

std::string_view to_string(ProgramMutationKind kind);
ProgramMutationKind program_mutation_kind_from_string(std::string_view name);

struct ProgramMutationSpec {
  ProgramMutationKind kind = ProgramMutationKind::learning_rate_scale;
  std::size_t layer_index = 0;                   // removal / addition position / activation_change
  std::size_t width = 8;                         // layer_addition
  Activation activation = Activation::relu;      // layer_addition / activation_change
  double factor = 1.0;                           // init_skew / learning_rate_scale
  std::uint64_t seed = 0;                        // provenance only; training keeps the base seed

  bool operator==(const ProgramMutationSpec&) const = default;
};

/// A new training spec differing only in the mutated field(s).
TrainingSpec apply_program_operator(const TrainingSpec& spec, const ProgramMutationSpec& mutation);

// ---------------------------------------------------------------------------
// Mutant records and pools
// ---------------------------------------------------------------------------

enum class MutantOrigin { model_level, source_level_data, source_level_program };

std::string_view to_string(MutantOrigin origin);
MutantOrigin mutant_origin_from_string(std::string_view name);

using OperatorSpec = std::variant<ModelMutationSpec, DataMutationSpec, ProgramMutationSpec>;
using SourceMutation = std::variant<ProgramMutationSpec, DataMutationSpec>;

/// Short operator label such as "GF" or "label_error".
std::string operator_name(const OperatorSpec& op);

struct MutantRecord {
  std::size_t id = 0;
  MutantOrigin origin = MutantOrigin::model_level;
  OperatorSpec op;
  Network network;
  double accuracy = 0.0;
  bool retained = false;

  bool operator==(const MutantRecord&) const = default;
};

struct SourceMutantOptions {
  std::size_t id = 0;
  Split gate_split = Split::val;
  double quality_ratio = 0.9;
  /// When set, retained = accuracy >= quality_ratio * baseline_accuracy.
  /// Otherwise the record is marked retained.
  std::optional<double> baseline_accuracy;
};

/// Retrains from scratch on the mutated program or mutated data. Accuracy is
/// measured on the gate split of the unmutated data.
MutantRecord build_source_mutant(const TrainingSpec& base_spec, const Dataset& data, const SourceMutation& mutation,
                                 const SourceMutantOptions& options = {});

struct PoolConfig {
  std::vector<ModelMutationSpec> op_mix;
  std::size_t count = 1;
  double quality_ratio = 0.9;
  Split gate_split = Split::val;
  /// Maximum candidates generated. 0 means 10 * count.
  std::size_t attempt_budget = 0;
  /// Candidate i uses template op_mix[i % size] with seed base_seed + i.
  std::uint64_t base_seed = 0;

  void validate() const;
  [[nodiscard]] std::size_t budget() const { return attempt_budget == 0 ? 10 * count : attempt_budget; }
};

struct OperatorStats {
  std::size_t attempted = 0;
  std::size_t retained = 0;
  std::size_t rejected = 0;
  [[nodiscard]] double rejection_rate() const {
    return attempted == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(attempted);
  }
  bool operator==(const OperatorStats&) const = default;
};

struct RejectedMutant {
  std::size_t id = 0;
  ModelOperator kind = ModelOperator::GF;
  double accuracy = 0.0;
  bool operator==(const RejectedMutant&) const = default;
};

struct PoolStats {
  double original_accuracy = 0.0;
  double threshold = 0.0;  // quality_ratio * original_accuracy
  std::size_t attempts = 0;
  std::map<std::string, OperatorStats> per_operator;
  std::vector<RejectedMutant> rejected;
  bool operator==(const PoolStats&) const = default;
};

struct PoolResult {
  std::vector<MutantRecord> pool;
  PoolStats stats;
  bool operator==(const PoolResult&) const = default;
};

/// Thrown when the attempt budget runs out before `count` mutants pass the
/// gate. Carries the partial pool.
class PoolBudgetExhausted : public Error {
 public:
  explicit PoolBudgetExhausted(PoolResult partial);
  [[nodiscard]] const PoolResult& partial() const { return partial_; }

 private:
  PoolResult partial_;
};

/// Quality-gated model-level mutant pool. Candidates are generated in
/// parallel in chunks but accepted in id order, so the result matches
/// serial::generate_pool exactly for any thread count.
PoolResult generate_pool(const Network& network, const Dataset& data, const PoolConfig& config);

namespace serial {
PoolResult generate_pool(const Network& network, const Dataset& data, const PoolConfig& config);
}  // namespace serial

}  // namespace nnmut
