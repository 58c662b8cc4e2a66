#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nnmut/mutation.hpp"
#include "nnmut/nn.hpp"

namespace nnmut {

/// Static description of a mutant, computed without running the test suite.
///
/// The operator one-hot covers the four model-level operators, the five data
/// mutation kinds and the five program mutation kinds, in that order.
struct MutantFeatures {
  static constexpr std::size_t kOperatorSlots = 14;
  static constexpr std::size_t kWidth = kOperatorSlots + 4;

  std::array<double, kOperatorSlots> operator_onehot{};
  double layer_position = 0.0;          // mean normalized depth of changed parameters
  double perturbation_magnitude = 0.0;  // GF: gamma*sigma, other model operators: gamma
  double weight_delta_norm = 0.0;       // |theta_m - theta_o| / |theta_o|, 1.0 if shapes differ
  double gate_accuracy_drop = 0.0;      // baseline accuracy - mutant accuracy

  /// Flattened in column order. With include_accuracy_drop = false the last
  /// column is zero, which removes it from any fitted model.
  [[nodiscard]] std::vector<double> as_vector(bool include_accuracy_drop = true) const;
  static const std::array<std::string, kWidth>& column_names();

  bool operator==(const MutantFeatures&) const = default;
};

MutantFeatures extract_features(const MutantRecord& record, const Network& original, double baseline_accuracy);

/// Feature extraction for a whole pool. Parallel per mutant.
std::vector<MutantFeatures> extract_all(std::span<const MutantRecord> pool, const Network& original,
                                        double baseline_accuracy);

struct PmtTrainingOptions {
  std::size_t epochs = 500;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

/// Logistic model on raw features: probability = sigmoid(w . f + b).
struct PmtModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  /// Mean cross-entropy after each epoch; non-increasing.
  std::vector<double> loss_history;

  bool operator==(const PmtModel&) const = default;
};

/// Full-batch gradient descent on standardized features with step halving
/// whenever the loss would rise; the standardization is folded back into the
/// returned weights.
PmtModel train_predictor(std::span<const std::vector<double>> features, std::span<const std::uint8_t> killed,
                         const PmtTrainingOptions& options = {});

struct PmtPrediction {
  double probability = 0.0;
  bool killed = false;
};

PmtPrediction predict_killed(const PmtModel& model, std::span<const double> features);

struct PmtMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted killed
  double recall = 0.0;     // 0 when nothing is actually killed
  double baseline_accuracy = 0.0;
  /// pool_size * (1 - fraction_executed)
  double executions_avoided = 0.0;
};

PmtMetrics evaluate_pmt(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                        std::size_t pool_size = 0, double fraction_executed = 0.0);

namespace serial {
std::vector<MutantFeatures> extract_all(std::span<const MutantRecord> pool, const Network& original,
                                        double baseline_accuracy);
}  // namespace serial

}  // namespace nnmut
