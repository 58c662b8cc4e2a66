#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nnmut/analysis.hpp"
#include "nnmut/data.hpp"
#include "nnmut/mutation.hpp"
#include "nnmut/nn.hpp"
#include "nnmut/pmt.hpp"
#include "nnmut/serialize.hpp"

namespace nnmut {

/// Every knob of a mutation-testing campaign. Loaded from one JSON file; see
/// README for the key-by-key reference.
struct CampaignConfig {
  struct DatasetSection {
    std::string kind = "two_moons";  // blobs | two_moons | spirals | csv
    std::size_t n = 400;
    double noise = 0.15;
    std::string path;                // csv only
    std::string label_column = "label";
    SplitFractions fractions = {0.5, 0.25, 0.25};
    std::uint64_t seed = 7;
  };
  struct MutationSection {
    std::vector<ModelOperator> operators = {ModelOperator::GF, ModelOperator::WS, ModelOperator::NS,
                                            ModelOperator::NAI};
    double gamma = 0.05;
    double sigma = 1.0;
    std::size_t count = 200;
    double quality_ratio = 0.9;
    Split gate_split = Split::val;
    std::size_t attempt_budget = 0;
    std::uint64_t base_seed = 1000;
    std::vector<DataMutationSpec> data_ops;
    std::vector<ProgramMutationSpec> program_ops;

    [[nodiscard]] PoolConfig pool_config() const;
  };
  struct ScoreSection {
    Split split = Split::test;
    bool exclude_pseudo_equivalent = false;
  };
  struct DetectionSection {
    double quantile = 0.95;
    double factor = 3.0;
    Split calibration_split = Split::val;
    Split adversarial_split = Split::test;
    /// Fixed FGSM epsilon; 0 selects it with the sweep below.
    double epsilon = 0.0;
    double epsilon_step = 0.01;
    std::size_t epsilon_steps = 200;
    double target_flip_rate = 0.7;
    double confidence = 0.8;
    /// Explicit SPRT fields override the calibrated ones.
    Json sprt_overrides = Json::object();
  };
  struct PmtSection {
    bool enable = true;
    double holdout_fraction = 0.3;
    std::size_t epochs = 500;
    double learning_rate = 0.5;
    std::uint64_t seed = 11;
    bool use_accuracy_drop = true;
  };

  DatasetSection dataset;
  TrainingSpec training;
  MutationSection mutation;
  ScoreSection score;
  DetectionSection detection;
  PmtSection pmt;
  std::string output_dir = "out";

  /// Throws ConfigError.
  void validate() const;
  /// Sets every seed in the campaign from one value.
  void override_seed(std::uint64_t seed);
};

/// The two-moons campaign used throughout the tests and the README.
CampaignConfig reference_config();

CampaignConfig config_from_json(const Json& j);
Json to_json(const CampaignConfig& cfg);

Dataset make_dataset(const CampaignConfig& cfg);

struct TrainOutputs {
  Network network;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

TrainOutputs run_train(const CampaignConfig& cfg, const Dataset& data);

/// Source-level mutants for every configured data or program operator,
/// gated against `baseline_accuracy`. Ids count from 0 in config order.
std::vector<MutantRecord> run_source_mutants(const CampaignConfig& cfg, const Dataset& data,
                                             double baseline_accuracy, MutantOrigin origin);

struct AdversarialSet {
  EpsilonSweep sweep;
  std::vector<std::size_t> rows;                // dataset rows the samples come from
  std::vector<std::vector<double>> clean;       // one per row
  std::vector<std::vector<double>> perturbed;   // FGSM counterpart per row
  std::vector<std::uint8_t> flipped;            // counterpart changes the original's label
};

/// FGSM counterparts of every row of the adversarial split, with epsilon
/// fixed or swept on the calibration split.
AdversarialSet make_adversarial_set(const CampaignConfig& cfg, const Network& original, const Dataset& data);

std::vector<std::vector<double>> rows_of(const Dataset& data, Split split);

/// Calibrated SPRT configuration with the config's explicit overrides applied.
SprtConfig resolve_sprt(const CampaignConfig& cfg, const Network& original, std::span<const Network> pool,
                        const Dataset& data);

struct PmtRun {
  std::vector<MutantFeatures> features;
  std::vector<std::uint8_t> killed;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> holdout_idx;
  PmtModel model;
  std::vector<PmtPrediction> predictions;  // one per holdout mutant
  PmtMetrics metrics;
  PmtMetrics permutation_control;          // same pipeline, shuffled training labels
};

/// Seeded train/holdout split of the pool, logistic fit, holdout evaluation
/// and a shuffled-label control run.
PmtRun run_pmt(const CampaignConfig& cfg, std::span<const MutantRecord> pool, const Network& original,
               double baseline_accuracy, std::span<const std::uint8_t> killed);

}  // namespace nnmut
